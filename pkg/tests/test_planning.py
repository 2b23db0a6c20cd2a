import numpy as np
import pytest

from diverseplan.costs import CostParams, CostWeights, evaluate_candidates
from diverseplan.futures import FutureSet, ScenePrediction
from diverseplan.geometry import ActorState, Pose2, Scene, straight_lane
from diverseplan.planning import (
    cost_to_go,
    plan_contingent,
    plan_expected,
    select_contingent,
    select_expected,
)
from diverseplan.sampling import SamplerConfig, generate_candidates


def exhaustive_contingent(action_costs, contingent_costs, p):
    """Brute-force reference: explicit loops, no vectorized reductions."""
    A, C, K = contingent_costs.shape
    best_i, best_obj = None, None
    for i in range(A):
        worst = max(action_costs[i, k] for k in range(K))
        ctg = 0.0
        for k in range(K):
            g = min(contingent_costs[i, j, k] for j in range(C))
            ctg += p[k] * g
        obj = worst + ctg
        if best_obj is None or obj < best_obj:
            best_i, best_obj = i, obj
    js = []
    for k in range(K):
        best_j, best_c = None, None
        for j in range(C):
            c = contingent_costs[best_i, j, k]
            if best_c is None or c < best_c:
                best_j, best_c = j, c
        js.append(best_j)
    return best_i, js, best_obj


def exhaustive_expected(action_costs, contingent_costs, p):
    A, C, K = contingent_costs.shape
    best, best_cost = None, None
    for i in range(A):
        for j in range(C):
            c = sum(p[k] * (action_costs[i, k] + contingent_costs[i, j, k]) for k in range(K))
            if best_cost is None or c < best_cost:
                best, best_cost = (i, j), c
    return best, best_cost


class TestSelectors:
    def test_single_candidate(self):
        a = np.array([[1.0, 2.0]])
        c = np.array([[[3.0, 1.0], [2.0, 4.0]]])
        i, j, worst, ctg, obj = select_contingent(a, c, np.array([0.5, 0.5]))
        assert i == 0
        assert worst == 2.0
        assert ctg == pytest.approx(0.5 * 2.0 + 0.5 * 1.0)

    def test_degenerate_distribution(self):
        rng = np.random.default_rng(0)
        a = rng.uniform(0, 10, (5, 2))
        c = rng.uniform(0, 10, (5, 4, 2))
        p = np.array([1.0, 0.0])
        i, j, expected = select_expected(a, c, p)
        # Equals the single-future argmin for future 0.
        full0 = a[:, None, 0] + c[:, :, 0]
        assert expected[i, j] == pytest.approx(full0.min())

    def test_random_instances_match_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            A = rng.integers(1, 12)
            C = rng.integers(1, 12)
            K = rng.integers(1, 5)
            a = rng.uniform(0, 100, (A, K))
            c = rng.uniform(0, 100, (A, C, K))
            p = rng.uniform(0.1, 1.0, K)
            p /= p.sum()
            i, j, worst, ctg, obj = select_contingent(a, c, p)
            oi, oj, oobj = exhaustive_contingent(a, c, p)
            assert i == oi
            assert list(j) == oj
            assert worst + ctg == pytest.approx(oobj, rel=1e-12)
            (ei, ej), ecost = exhaustive_expected(a, c, p)
            ii, jj, expected = select_expected(a, c, p)
            assert (ii, jj) == (ei, ej)
            assert expected[ii, jj] == pytest.approx(ecost, rel=1e-12)

    def test_max_term_ignores_probabilities(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(0, 10, (6, 3))
        c = rng.uniform(0, 10, (6, 4, 3))
        p1 = np.array([0.2, 0.3, 0.5])
        p2 = np.array([0.6, 0.3, 0.1])
        _, _, worst1, _, obj1 = select_contingent(a, c, p1)
        # Fix the action: worst cost per action is probability-free.
        worst_all = a.max(axis=1)
        _, _, worst2, _, obj2 = select_contingent(a, c, p2)
        assert np.array_equal(a.max(axis=1), worst_all)
        assert worst1 in worst_all and worst2 in worst_all

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            select_contingent(np.zeros((0, 2)), np.zeros((0, 3, 2)), np.array([0.5, 0.5]))


def build_world(actor_specs, sdv_speed=6.0, limit=8.0):
    lane = straight_lane((0, 0), (400, 0), speed_limit=limit)
    sdv = ActorState(id=-1, pose=Pose2(0, 0, 0), speed=sdv_speed, length=5.0, width=2.0)
    actors = tuple(
        ActorState(id=i, pose=Pose2(x, y, h), speed=v, length=4.5, width=2.0)
        for i, (x, y, h, v) in enumerate(actor_specs)
    )
    return Scene(0.0, sdv, actors, (lane,), 0), lane


def constant_velocity_future(scene, velocities, steps=10, dt=0.5):
    t = dt * np.arange(1, steps + 1)
    wp = np.stack(
        [
            np.column_stack(
                [a.pose.x + vx * t, a.pose.y + vy * t]
            )
            for a, (vx, vy) in zip(scene.actors, velocities)
        ]
    )
    return ScenePrediction.from_waypoints(wp, scene, dt=dt)


class TestPlannersEndToEnd:
    def test_k1_contingent_equals_expected(self):
        scene, lane = build_world([(60.0, 0.0, 0.0, 4.0)])
        cands = generate_candidates(scene, lane, SamplerConfig.from_preset("desk"))
        fut = constant_velocity_future(scene, [(4.0, 0.0)])
        fset = FutureSet.uniform([fut])
        out = plan_contingent(cands, fset)
        full, i, j, cost = plan_expected(cands, fset)
        assert out.action_index == i
        assert out.total_objective == pytest.approx(cost, abs=1e-9)

    def test_identical_futures_collapse(self):
        scene, lane = build_world([(50.0, 0.0, 0.0, 3.0)])
        cands = generate_candidates(scene, lane, SamplerConfig.from_preset("desk"))
        fut = constant_velocity_future(scene, [(3.0, 0.0)])
        fset = FutureSet.uniform([fut, fut, fut])
        out = plan_contingent(cands, fset)
        _, i, j, cost = plan_expected(cands, fset)
        assert out.total_objective == pytest.approx(cost, abs=1e-9)
        assert out.action_index == i
        # All per-future contingents identical.
        js = set(int(x) for x in out.contingent_indices)
        assert len(js) == 1

    def test_planner_output_invariants(self):
        scene, lane = build_world([(40.0, 0.0, 0.0, 2.0), (60.0, 3.5, np.pi, 5.0)])
        cands = generate_candidates(scene, lane, SamplerConfig.from_preset("desk"))
        f1 = constant_velocity_future(scene, [(2.0, 0.0), (-5.0, 0.0)])
        f2 = constant_velocity_future(scene, [(0.5, 0.0), (-5.0, 0.0)])
        fset = FutureSet(futures=(f1, f2), probabilities=np.array([0.7, 0.3]))
        out = plan_contingent(cands, fset)
        assert len(out.per_future_contingent) == fset.k
        assert out.total_objective == pytest.approx(
            out.action_worst_cost + out.expected_cost_to_go, abs=1e-9
        )

    def test_cost_to_go_matches_exhaustive(self):
        scene, lane = build_world([(40.0, 0.0, 0.0, 2.0)])
        cands = generate_candidates(scene, lane, SamplerConfig.from_preset("desk"))
        fut = constant_velocity_future(scene, [(2.0, 0.0)])
        weights, params = CostWeights(), CostParams()
        cand = cands[7]
        got_cost, got_traj = cost_to_go(cand.contingents, fut, lane, weights, params)
        from diverseplan.costs import total_cost

        costs = [total_cost(t, fut, lane, weights, params).total for t in cand.contingents]
        assert got_cost == min(costs)
        assert np.array_equal(got_traj.waypoints, cand.contingents[int(np.argmin(costs))].waypoints)

    def test_collision_shifted_contingent_rejected(self):
        # A contingent driving through a blocker loses to a braking one.
        scene, lane = build_world([(18.0, 0.0, 0.0, 0.0)])
        cands = generate_candidates(scene, lane, SamplerConfig.from_preset("desk"))
        fut = constant_velocity_future(scene, [(0.0, 0.0)])
        fset = FutureSet.uniform([fut])
        out = plan_contingent(cands, fset)
        tensors = evaluate_candidates(cands, fset)
        # The chosen plan must be overlap-free while some candidate overlaps.
        assert tensors.contingent_costs.max() >= 1e4
        assert out.total_objective < 1e4

    def test_fork_scenario_brakes_only_where_needed(self):
        # Oncoming car either turns across the SDV path (p=0.3) or stays in
        # its lane (p=0.7). The contingent plan for the crossing future must
        # be slower than the plan for the clear future, and the shared
        # action must keep more speed than the worst-case hard brake.
        scene, lane = build_world([(45.0, 3.5, np.pi, 5.0)], sdv_speed=8.0)
        t = 0.5 * np.arange(1, 11)
        # Future A: turn across, blocking x ~ 30 m from t ~ 2.0 s on.
        turn = np.column_stack(
            [45.0 - 5.0 * t, 3.5 - np.clip(2.5 * (t - 1.2), 0.0, 4.2)]
        )
        fut_turn = ScenePrediction.from_waypoints(turn[None], scene, dt=0.5)
        straight = np.column_stack([45.0 - 5.0 * t, np.full(10, 3.5)])
        fut_straight = ScenePrediction.from_waypoints(straight[None], scene, dt=0.5)
        fset = FutureSet(futures=(fut_turn, fut_straight), probabilities=np.array([0.3, 0.7]))
        cands = generate_candidates(scene, lane, SamplerConfig.from_preset("desk"))
        out = plan_contingent(cands, fset)
        tensors = evaluate_candidates(cands, fset)

        plan_turn = out.per_future_contingent[0][1]
        plan_straight = out.per_future_contingent[1][1]
        # Verified against exhaustive objective enumeration.
        oi, oj, oobj = exhaustive_contingent(
            tensors.action_costs, tensors.contingent_costs, fset.probabilities
        )
        assert out.action_index == oi
        assert out.total_objective == pytest.approx(oobj, rel=1e-9)
        # The turn-future contingent yields (less progress) vs the clear one.
        assert plan_turn.waypoints[-1, 0] < plan_straight.waypoints[-1, 0] - 1.0
        # Chosen action is not the hardest brake available.
        slowest_action_end = cands.action_speed[:, -1].min()
        assert out.chosen_action.speed[-1] > slowest_action_end + 0.5
