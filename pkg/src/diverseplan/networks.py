"""Network building blocks: MLPs, a GRU cell, and the scene-interaction
message-passing module shared by the forecaster, sampler and scorer.

One round of message passing over a fully connected actor graph: a 3-layer
MLP scores each directed edge from the two node states plus relative pose
features, incoming messages max-pool feature-wise, a GRU cell updates the
node state, and a 2-layer output head reads it out. Single-node graphs use
a learned no-message vector.
"""
from __future__ import annotations

import numpy as np

from .autodiff import Parameter, Tensor, concat, gather_rows


class Module:
    """Parameter container with named recursive collection."""

    def _modules(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value

    def _own_params(self):
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield name, value

    def named_parameters(self, prefix=""):
        for name, p in self._own_params():
            yield (prefix + name, p)
        for name, child in self._modules():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        mine = dict(self.named_parameters())
        if set(mine) != set(state):
            missing = set(mine) ^ set(state)
            raise ValueError(f"parameter names do not match: {sorted(missing)}")
        for name, p in mine.items():
            arr = np.asarray(state[name], dtype=float)
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name}")
            p.data = arr.copy()

    def checksum(self):
        import hashlib

        h = hashlib.sha256()
        for name, p in sorted(self.named_parameters()):
            h.update(name.encode())
            h.update(np.ascontiguousarray(p.data).tobytes())
        return h.hexdigest()


class Linear(Module):
    def __init__(self, in_dim, out_dim, rng, zero_init=False, bias_init=0.0):
        if zero_init:
            w = np.zeros((in_dim, out_dim))
        else:
            bound = np.sqrt(6.0 / (in_dim + out_dim))
            w = rng.uniform(-bound, bound, (in_dim, out_dim))
        self.weight = Parameter(w)
        self.bias = Parameter(np.full(out_dim, float(bias_init)))

    def __call__(self, x):
        return x @ self.weight + self.bias


class MLP(Module):
    """Tanh MLP; the last layer is linear."""

    def __init__(self, dims, rng, zero_last=False, last_bias=0.0):
        self.layers = ModuleList(
            Linear(
                dims[i],
                dims[i + 1],
                rng,
                zero_init=(zero_last and i == len(dims) - 2),
                bias_init=(last_bias if i == len(dims) - 2 else 0.0),
            )
            for i in range(len(dims) - 1)
        )

    def __call__(self, x):
        n = len(self.layers.items)
        for i, layer in enumerate(self.layers.items):
            x = layer(x)
            if i < n - 1:
                x = x.tanh()
        return x


class ModuleList(Module):
    def __init__(self, items):
        self.items = list(items)
        for i, item in enumerate(self.items):
            setattr(self, f"m{i}", item)


class GRUCell(Module):
    def __init__(self, input_dim, hidden_dim, rng):
        self.update_gate = Linear(input_dim + hidden_dim, hidden_dim, rng)
        self.reset_gate = Linear(input_dim + hidden_dim, hidden_dim, rng)
        self.candidate = Linear(input_dim + hidden_dim, hidden_dim, rng)

    def __call__(self, x, h):
        xh = concat([x, h], axis=-1)
        z = self.update_gate(xh).sigmoid()
        r = self.reset_gate(xh).sigmoid()
        c = self.candidate(concat([x, r * h], axis=-1)).tanh()
        return (1.0 - z) * h + z * c


EDGE_FEATURE_DIM = 5


def fully_connected_edges(n_nodes, n_graphs=1):
    """Directed edge lists for n_graphs disjoint complete graphs.

    Edges are receiver-major so incoming messages can reshape to
    (nodes, n_nodes - 1, features) for pooling.
    """
    if n_nodes < 2:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    recv, send = [], []
    for g in range(n_graphs):
        base = g * n_nodes
        for i in range(n_nodes):
            for j in range(n_nodes):
                if i != j:
                    recv.append(base + i)
                    send.append(base + j)
    return np.asarray(recv), np.asarray(send)


def edge_features(poses, recv, send):
    """Relative pose of the sender in the receiver's frame.

    poses is (M, 3) world (x, y, heading); features per edge are the local
    displacement, heading-difference cosine/sine, and distance, scaled to
    O(1) magnitudes.
    """
    if recv.size == 0:
        return np.zeros((0, EDGE_FEATURE_DIM))
    dx = poses[send, 0] - poses[recv, 0]
    dy = poses[send, 1] - poses[recv, 1]
    c = np.cos(poses[recv, 2])
    s = np.sin(poses[recv, 2])
    local_x = c * dx + s * dy
    local_y = -s * dx + c * dy
    dh = poses[send, 2] - poses[recv, 2]
    dist = np.hypot(dx, dy)
    return np.column_stack(
        [local_x / 20.0, local_y / 20.0, np.cos(dh), np.sin(dh), dist / 20.0]
    )


class SceneInteractionModule(Module):
    """One round of edge->pool->GRU->head message passing."""

    def __init__(self, in_dim, out_dim, rng, hidden_dim=64, head_zero_last=False, head_last_bias=0.0):
        self.hidden_dim = hidden_dim
        self.encoder = Linear(in_dim, hidden_dim, rng)
        self.edge_mlp = MLP(
            [2 * hidden_dim + EDGE_FEATURE_DIM, hidden_dim, hidden_dim, hidden_dim], rng
        )
        self.gru = GRUCell(hidden_dim, hidden_dim, rng)
        self.head = MLP(
            [hidden_dim, hidden_dim, out_dim],
            rng,
            zero_last=head_zero_last,
            last_bias=head_last_bias,
        )
        self.no_message = Parameter(np.zeros(hidden_dim))

    def node_states(self, node_x, recv, send, feats, nodes_per_graph):
        """Updated hidden states (M, hidden) after one message round."""
        if not isinstance(node_x, Tensor):
            node_x = Tensor(node_x)
        h = self.encoder(node_x).tanh()
        m = node_x.shape[0]
        if recv.size:
            edge_in = concat(
                [gather_rows(h, recv), gather_rows(h, send), Tensor(feats)], axis=-1
            )
            act = self.edge_mlp(edge_in)
            deg = nodes_per_graph - 1
            pooled = act.reshape(m, deg, self.hidden_dim).max(axis=1)
        else:
            pooled = self.no_message.reshape(1, self.hidden_dim) * np.ones((m, 1))
        return self.gru(pooled, h)

    def __call__(self, node_x, recv, send, feats, nodes_per_graph):
        return self.head(self.node_states(node_x, recv, send, feats, nodes_per_graph))


class GraphBatch:
    """Edge bookkeeping for n_graphs copies of one N-actor scene."""

    def __init__(self, poses, n_graphs=1):
        poses = np.asarray(poses, dtype=float)
        self.n_nodes = poses.shape[0]
        self.n_graphs = n_graphs
        self.recv, self.send = fully_connected_edges(self.n_nodes, n_graphs)
        tiled = np.tile(poses, (n_graphs, 1))
        self.feats = edge_features(tiled, self.recv, self.send)

    def run(self, sim, node_x):
        return sim(node_x, self.recv, self.send, self.feats, self.n_nodes)

    def run_states(self, sim, node_x):
        return sim.node_states(node_x, self.recv, self.send, self.feats, self.n_nodes)
