"""Execution-risk semantics: per-state aggregate failure probability,
survival-weighted transitions, the backward risk recursion, policy
evaluation, and the equivalent linear form over occupancy flows.

The backward recursion is the ground-truth evaluator that the ILP's linear
risk expression is checked against; both are kept here so the identity can
be tested without touching solver code.
"""

from __future__ import annotations

from typing import Iterable, Mapping

from .model import (
    Criterion,
    InteractionLayers,
    LayeredSpace,
    MccSspInstance,
    skey,
)


class PolicyError(KeyError):
    """A policy has no assignment for a reachable (state, time) pair."""


class Policy:
    """Per-interaction, non-stationary action assignment.

    ``assignments[i][(state, k)]`` is either a single joint action
    (deterministic) or a dict mapping joint actions to probabilities.
    Evaluation accepts stochastic policies even though the solver only
    produces deterministic ones.
    """

    def __init__(self, assignments: Mapping):
        self.assignments = {i: dict(table) for i, table in assignments.items()}

    @classmethod
    def deterministic(cls, assignments: Mapping) -> "Policy":
        return cls(assignments)

    def action_distribution(self, interaction_id: int, state, k: int) -> dict:
        try:
            entry = self.assignments[interaction_id][(state, k)]
        except KeyError:
            raise PolicyError(
                f"policy undefined at interaction {interaction_id}, state {state!r}, k={k}"
            ) from None
        if isinstance(entry, dict):
            return entry
        return {entry: 1.0}

    def action(self, interaction_id: int, state, k: int):
        dist = self.action_distribution(interaction_id, state, k)
        return max(dist.items(), key=lambda kv: (kv[1], skey(kv[0])))[0]

    def items(self):
        return self.assignments.items()


def state_risk_tilde(pairwise_risks: Iterable[float]) -> float:
    """Aggregate failure probability 1 - prod(1 - r) over pair risks."""
    survival = 1.0
    for r in pairwise_risks:
        if not 0.0 <= r <= 1.0:
            raise ValueError(f"pairwise risk {r!r} outside [0, 1]")
        survival *= 1.0 - r
    return 1.0 - survival

def transition_tilde(transition_prob: float, state_risk: float) -> float:
    """Survival-weighted transition probability t * (1 - state risk)."""
    if not 0.0 <= transition_prob <= 1.0:
        raise ValueError(f"transition probability {transition_prob!r} outside [0, 1]")
    if not 0.0 <= state_risk <= 1.0:
        raise ValueError(f"state risk {state_risk!r} outside [0, 1]")
    return transition_prob * (1.0 - state_risk)


def interaction_execution_risk(
    layers_i: InteractionLayers,
    policy: Policy,
    criterion: Criterion,
    include_terminal_risk: bool = True,
) -> float:
    """Backward risk recursion over one interaction's layered DAG.

    er(s_h) equals the terminal state risk (zero when terminal risk is
    excluded); below that, er(s_k) = rt(s_k) + (1 - rt(s_k)) *
    sum_a pi(a|s_k) sum_s' T(s_k, a, s') er(s_{k+1}).
    """
    view = layers_i.view
    horizon = len(layers_i.layers) - 1
    rt = {s: view.state_risk(criterion, s) for layer in layers_i.layers for s in layer}

    er = {
        s: (rt[s] if include_terminal_risk else 0.0) for s in layers_i.layers[horizon]
    }
    for k in range(horizon - 1, -1, -1):
        nxt = er
        er = {}
        for s in layers_i.layers[k]:
            downstream = 0.0
            for a, prob in policy.action_distribution(layers_i.id, s, k).items():
                if prob == 0.0:
                    continue
                downstream += prob * sum(
                    p * nxt[succ] for succ, p in layers_i.edges[(s, a)]
                )
            er[s] = rt[s] + (1.0 - rt[s]) * downstream
    return er[layers_i.layers[0][0]]


def execution_risk(
    instance: MccSspInstance,
    layers: LayeredSpace,
    policy: Policy,
    criterion: Criterion,
    include_terminal_risk: bool = True,
) -> float:
    """Total execution risk from the initial state: the sum of the
    per-interaction recursions.  Exact under the exclusive coupling
    assumption; an upper bound under union_bound coupling.
    """
    return sum(
        interaction_execution_risk(layers_i, policy, criterion, include_terminal_risk)
        for layers_i in layers
    )


def expected_utility(
    instance: MccSspInstance, layers: LayeredSpace, policy: Policy
) -> float:
    """Expected cumulative utility over decision steps 0..h-1 by forward
    occupancy propagation under the plain (un-tilded) transitions."""
    total = 0.0
    for layers_i in layers:
        occ = {layers_i.layers[0][0]: 1.0}
        for k in range(len(layers_i.layers) - 1):
            nxt = {}
            for s, mass in occ.items():
                if mass == 0.0:
                    continue
                for a, prob in policy.action_distribution(layers_i.id, s, k).items():
                    if prob == 0.0:
                        continue
                    weight = mass * prob
                    total += weight * layers_i.utilities[(s, a)]
                    for succ, p in layers_i.edges[(s, a)]:
                        nxt[succ] = nxt.get(succ, 0.0) + weight * p
            occ = nxt
    return total


def policy_flows(
    instance: MccSspInstance,
    layers: LayeredSpace,
    policy: Policy,
    criterion: Criterion | None,
) -> dict:
    """Occupancy flows induced by a policy: x[(i, k, state, action)].

    For ``criterion=None`` flows follow the plain transitions (the j = 0
    utility flow); otherwise each step is damped by the source state's
    survival probability, which makes the flows satisfy the tilded flow
    conservation equations for that criterion.
    """
    flows = {}
    for layers_i in layers:
        view = layers_i.view
        occ = {layers_i.layers[0][0]: 1.0}
        for k in range(len(layers_i.layers) - 1):
            nxt = {}
            for s, mass in occ.items():
                survival = (
                    1.0 if criterion is None else 1.0 - view.state_risk(criterion, s)
                )
                for a, prob in policy.action_distribution(layers_i.id, s, k).items():
                    x = mass * prob
                    flows[(layers_i.id, k, s, a)] = x
                    if x == 0.0:
                        continue
                    for succ, p in layers_i.edges[(s, a)]:
                        nxt[succ] = nxt.get(succ, 0.0) + x * survival * p
            occ = nxt
    return flows


def linear_risk_from_flows(
    instance: MccSspInstance,
    layers: LayeredSpace,
    flows: Mapping,
    criterion: Criterion,
    include_terminal_risk: bool = True,
) -> float:
    """Linear form of the execution risk at the initial state, evaluated on
    flows that satisfy the tilded conservation equations for ``criterion``:

        sum_i rt(s0_i)
        + sum_{k,i,s,a,s'} rt(s') x[i,k,s,a] T(s,a,s') (1 - rt(s))

    With terminal risk excluded, the last layer's rt terms are dropped.
    """
    horizon = layers.horizon
    total = 0.0
    for layers_i in layers:
        view = layers_i.view
        rt = {
            s: view.state_risk(criterion, s)
            for layer in layers_i.layers
            for s in layer
        }
        total += rt[layers_i.layers[0][0]]
        last_k = horizon - 1 if include_terminal_risk else horizon - 2
        for k in range(0, last_k + 1):
            for s in layers_i.layers[k]:
                survival = 1.0 - rt[s]
                for a in layers_i.joint_actions:
                    x = flows.get((layers_i.id, k, s, a), 0.0)
                    if x == 0.0:
                        continue
                    total += x * survival * sum(
                        p * rt[succ] for succ, p in layers_i.edges[(s, a)]
                    )
    return total
