import numpy as np
import pytest

from diverseplan.autodiff import (
    Adam,
    Parameter,
    Tensor,
    concat,
    directional_gradient_check,
    gather_rows,
    huber,
    where,
)


def check(loss_fn, params, seed=0, tol=1e-6, n=8):
    rng = np.random.default_rng(seed)
    err = directional_gradient_check(loss_fn, params, rng, n_directions=n)
    assert err < tol, f"gradient check failed: rel err {err}"


class TestBasicOps:
    def test_add_mul_broadcast(self):
        rng = np.random.default_rng(0)
        a = Parameter(rng.standard_normal((4, 3)))
        b = Parameter(rng.standard_normal(3))
        check(lambda: ((a * b + b) * a).sum(), [a, b])

    def test_div_pow(self):
        rng = np.random.default_rng(1)
        a = Parameter(rng.uniform(0.5, 2.0, (5,)))
        b = Parameter(rng.uniform(0.5, 2.0, (5,)))
        check(lambda: ((a / b) ** 3).sum(), [a, b])

    def test_matmul(self):
        rng = np.random.default_rng(2)
        a = Parameter(rng.standard_normal((4, 6)))
        w = Parameter(rng.standard_normal((6, 2)))
        check(lambda: ((a @ w) ** 2).sum(), [a, w])

    def test_elementwise_chain(self):
        rng = np.random.default_rng(3)
        a = Parameter(rng.uniform(0.2, 1.5, (7,)))
        check(
            lambda: (a.exp().log() * a.tanh() + a.sigmoid() + a.sqrt()).sum(),
            [a],
            tol=1e-6,
        )

    def test_reductions(self):
        rng = np.random.default_rng(4)
        a = Parameter(rng.standard_normal((5, 4)))
        check(lambda: a.max(axis=1).sum() + a.min() + a.mean(axis=0).sum(), [a])

    def test_getitem_reshape_concat(self):
        rng = np.random.default_rng(5)
        a = Parameter(rng.standard_normal((6, 4)))
        b = Parameter(rng.standard_normal((6, 2)))

        def loss():
            c = concat([a, b], axis=1)
            d = c[1:4, :3].reshape(9)
            return (d * d).sum()

        check(loss, [a, b])

    def test_gather_rows(self):
        rng = np.random.default_rng(6)
        a = Parameter(rng.standard_normal((5, 3)))
        idx = np.array([0, 2, 2, 4])

        def loss():
            g = gather_rows(a, idx)
            return (g * g).sum()

        check(loss, [a])

    def test_where_and_huber(self):
        rng = np.random.default_rng(7)
        a = Parameter(rng.standard_normal((20,)) * 2.0)

        def loss():
            return huber(a, delta=1.0).sum()

        check(loss, [a])
        # Value check: |x| <= delta quadratic, else linear.
        x = Tensor(np.array([0.5, -2.0]))
        out = huber(x, delta=1.0)
        assert out.data[0] == pytest.approx(0.125)
        assert out.data[1] == pytest.approx(1.5)

    def test_clamp_gradient_gate(self):
        a = Parameter(np.array([-2.0, 0.0, 2.0]))
        out = (a.clamp(-1.0, 1.0) * 3.0).sum()
        out.backward()
        assert np.allclose(a.grad, [0.0, 3.0, 0.0])

    def test_detach_blocks_gradient(self):
        a = Parameter(np.array([1.5]))
        out = (a.detach() * a).sum()
        out.backward()
        assert a.grad[0] == pytest.approx(1.5)  # only the live path

    def test_abs_relu(self):
        rng = np.random.default_rng(8)
        a = Parameter(rng.standard_normal((9,)) + 0.1)
        check(lambda: (a.abs() + a.relu()).sum(), [a])


class TestComposites:
    def test_softmax_cross_terms(self):
        rng = np.random.default_rng(9)
        logits = Parameter(rng.standard_normal(6))
        target = rng.dirichlet(np.ones(6))

        def loss():
            z = logits - logits.max()
            p = z.exp() / z.exp().sum()
            return -(Tensor(target) * p.log()).sum()

        check(loss, [logits])

    def test_gaussian_kl(self):
        rng = np.random.default_rng(10)
        mu = Parameter(rng.standard_normal((3, 4)))
        log_sigma = Parameter(rng.uniform(-1, 0.5, (3, 4)))

        def loss():
            var = (log_sigma * 2.0).exp()
            return 0.5 * (mu * mu + var - 1.0 - 2.0 * log_sigma).sum()

        check(loss, [mu, log_sigma])

    def test_second_call_rebuilds_graph(self):
        a = Parameter(np.array([2.0]))
        l1 = (a * a).sum()
        l1.backward()
        g1 = a.grad.copy()
        l2 = (a * a).sum()
        l2.backward()
        assert np.allclose(a.grad, g1)


class TestAdam:
    def test_quadratic_convergence(self):
        target = np.array([1.0, -2.0, 0.5])
        p = Parameter(np.zeros(3))
        opt = Adam([p], lr=0.05)
        for _ in range(400):
            opt.zero_grad()
            diff = p - Tensor(target)
            loss = (diff * diff).sum()
            loss.backward()
            opt.step()
        assert np.allclose(p.data, target, atol=1e-3)

    def test_deterministic(self):
        def run():
            rng = np.random.default_rng(0)
            p = Parameter(rng.standard_normal(4))
            opt = Adam([p], lr=0.01)
            for _ in range(50):
                opt.zero_grad()
                loss = ((p * p) + p.exp()).sum()
                loss.backward()
                opt.step()
            return p.data.copy()

        assert np.array_equal(run(), run())
