"""Plan selection: expected-cost baseline and the contingency objective.

The contingency planner commits to one short-term action judged against
the worst of the K futures, plus the probability-weighted best contingent
continuation per future. The expected-cost baseline commits to a single
full-horizon trajectory minimizing the probability-weighted cost. Both
reduce deterministic cost tensors; ties break toward the lowest candidate
index (candidates are ordered action-major, then contingent index).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costs import CostParams, CostWeights, evaluate_candidates, total_cost


class PlannerOutput:
    """Chosen action with its per-future contingents and objective parts.

    Contingent trajectories materialize on first access; the hot loop only
    executes the action.
    """

    def __init__(
        self,
        cands,
        action_index,
        contingent_indices,
        action_worst_cost,
        expected_cost_to_go,
        contingent_costs_row,
        objective_per_action=None,
    ):
        self._cands = cands
        self.action_index = int(action_index)
        self.contingent_indices = np.asarray(contingent_indices)
        self.action_worst_cost = float(action_worst_cost)
        self.expected_cost_to_go = float(expected_cost_to_go)
        self.total_objective = float(action_worst_cost + expected_cost_to_go)
        self._contingent_costs_row = contingent_costs_row
        self.objective_per_action = objective_per_action
        self.chosen_action = cands.action_trajectory(self.action_index)
        self._per_future = None

    @property
    def per_future_contingent(self):
        """(future index, Trajectory, cost) triple per future."""
        if self._per_future is None:
            i = self.action_index
            self._per_future = tuple(
                (
                    k,
                    self._cands.contingent_trajectory(i, int(j)),
                    float(self._contingent_costs_row[int(j), k]),
                )
                for k, j in enumerate(self.contingent_indices)
            )
        return self._per_future

    def planned_trajectories(self):
        """Full-horizon plan per future: shared action spliced to each
        chosen contingent."""
        return tuple(
            self._cands.full_trajectory(self.action_index, int(j))
            for j in self.contingent_indices
        )


def select_contingent(action_costs, contingent_costs, probabilities):
    """Reduce cost tensors under the contingency objective.

    Returns (action index, per-future contingent indices, worst action
    cost, expected cost-to-go, per-action objectives).
    """
    action_costs = np.asarray(action_costs, dtype=float)
    contingent_costs = np.asarray(contingent_costs, dtype=float)
    p = np.asarray(probabilities, dtype=float)
    if action_costs.ndim != 2 or contingent_costs.ndim != 3:
        raise ValueError("expected (A, K) action and (A, C, K) contingent costs")
    if action_costs.shape[0] == 0:
        raise ValueError("empty candidate set")
    g = contingent_costs.min(axis=1)  # (A, K)
    worst = action_costs.max(axis=1)  # (A,)
    cost_to_go = g @ p  # (A,)
    objective = worst + cost_to_go
    i = int(np.argmin(objective))
    j = np.argmin(contingent_costs[i], axis=0)  # (K,)
    return i, j, float(worst[i]), float(cost_to_go[i]), objective


def select_expected(action_costs, contingent_costs, probabilities):
    """Reduce cost tensors under the expected-cost objective.

    Full-horizon candidates are every action spliced with each of its
    contingents; cost over the horizon is the sum of the two segments.
    Returns (action index, contingent index, per-pair expected costs).
    """
    action_costs = np.asarray(action_costs, dtype=float)
    contingent_costs = np.asarray(contingent_costs, dtype=float)
    p = np.asarray(probabilities, dtype=float)
    if action_costs.shape[0] == 0:
        raise ValueError("empty candidate set")
    full = action_costs[:, None, :] + contingent_costs  # (A, C, K)
    expected = full @ p  # (A, C)
    flat = int(np.argmin(expected))
    i, j = divmod(flat, expected.shape[1])
    return int(i), int(j), expected


def plan_contingent(cands, future_set, weights=None, params=None, cost_tensors=None):
    """Pick the action minimizing worst-case action cost plus expected
    cost-to-go; returns a PlannerOutput with one contingent per future."""
    weights = weights or CostWeights()
    params = params or CostParams()
    tensors = cost_tensors or evaluate_candidates(cands, future_set, weights, params)
    i, j, worst, ctg, objective = select_contingent(
        tensors.action_costs, tensors.contingent_costs, future_set.probabilities
    )
    return PlannerOutput(
        cands,
        action_index=i,
        contingent_indices=j,
        action_worst_cost=worst,
        expected_cost_to_go=ctg,
        contingent_costs_row=tensors.contingent_costs[i],
        objective_per_action=objective,
    )


def plan_expected(cands, future_set, weights=None, params=None, cost_tensors=None):
    """Pick the full-horizon trajectory minimizing expected cost.

    Returns (full Trajectory, action index, contingent index, expected
    cost); the candidate pool is the same action/contingent splice set the
    contingency planner searches, so comparisons isolate the objective.
    """
    weights = weights or CostWeights()
    params = params or CostParams()
    tensors = cost_tensors or evaluate_candidates(cands, future_set, weights, params)
    i, j, expected = select_expected(
        tensors.action_costs, tensors.contingent_costs, future_set.probabilities
    )
    return cands.full_trajectory(i, j), i, j, float(expected[i, j])


def cost_to_go(contingents, future, lane, weights=None, params=None):
    """Scan an action's contingent set against one future.

    Returns (min cost, argmin Trajectory); ties break to the lowest index.
    """
    weights = weights or CostWeights()
    params = params or CostParams()
    if len(contingents) == 0:
        raise ValueError("contingent set must be nonempty")
    costs = [total_cost(traj, future, lane, weights, params).total for traj in contingents]
    best = int(np.argmin(costs))
    return float(costs[best]), contingents[best]
