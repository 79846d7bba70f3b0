"""Seeded random small instances and the oracle-equivalence suite.

The generator draws instances small enough for exhaustive policy
enumeration (sparse successor sets keep the reachable layers narrow) and
the runner checks, per instance, that the exact solver and the brute-force
oracle agree on feasibility and optimal objective, that the returned
policy respects every budget, and that the linear risk expression matches
the recursion at the solution.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .ilp import solve_instance
from .model import (
    AgentMdp,
    InteractionPoint,
    MccSspInstance,
    StateRisk,
    assign_utility_owners,
    reachable_layers,
    validate_instance,
)
from .oracles import CapExceeded, brute_force_optimal
from .risk import execution_risk, linear_risk_from_flows

OBJECTIVE_TOL = 1e-6
RISK_TOL = 1e-9
LINEAR_FORM_TOL = 1e-9


def _random_agent(rng: np.random.Generator, n_states: int, n_actions: int) -> AgentMdp:
    states = list(range(n_states))
    actions = tuple(f"a{n}" for n in range(n_actions))
    transition = {}
    utility = {}
    for s in states:
        for a in actions:
            support = rng.choice(n_states, size=min(n_states, rng.integers(1, 3)), replace=False)
            weights = rng.random(len(support)) + 0.1
            weights /= weights.sum()
            transition[(s, a)] = {int(t): float(w) for t, w in zip(support, weights)}
            utility[(s, a)] = float(round(rng.random() * 5.0, 3))
    return AgentMdp(
        states=set(states),
        actions=actions,
        transition=transition,
        utility=utility,
        initial_state=int(rng.integers(n_states)),
    )


def _random_risk(
    rng: np.random.Generator,
    members: tuple,
    agents: dict,
    criteria: tuple,
) -> dict:
    """Aggregate or pairwise risk tables over the full joint state space."""
    import itertools

    risk = {}
    state_sets = [sorted(agents[v].states) for v in members]
    for j in criteria:
        if len(members) == 2 and rng.random() < 0.5:
            table = {}
            for sv in state_sets[0]:
                for sw in state_sets[1]:
                    if rng.random() < 0.3:
                        table[(sv, sw)] = float(round(rng.random() * 0.35, 4))
            risk[j] = StateRisk.from_pairwise({(members[0], members[1]): table})
        else:
            table = {}
            for joint in itertools.product(*state_sets):
                if rng.random() < 0.3:
                    table[joint] = float(round(rng.random() * 0.35, 4))
            risk[j] = StateRisk.from_aggregate(table)
    return risk


def random_instance(
    rng: np.random.Generator,
    max_interactions: int = 2,
    max_members: int = 2,
    max_states: int = 4,
    max_actions: int = 3,
    max_horizon: int = 3,
) -> MccSspInstance:
    """One random instance within the small-instance envelope."""
    n_interactions = int(rng.integers(1, max_interactions + 1))
    share = n_interactions == 2 and rng.random() < 0.4

    agents = {}

    def new_agent(name, in_pair=False):
        # joint spaces of two-member interactions grow multiplicatively, so
        # keep those members smaller to stay inside the enumeration cap
        n_states = int(rng.integers(2, (3 if in_pair else max_states) + 1))
        n_actions = int(rng.integers(1, (2 if in_pair else max_actions) + 1))
        agents[name] = _random_agent(rng, n_states, n_actions)

    members_per_point = []
    counter = 0
    shared_name = None
    for i in range(n_interactions):
        n_members = int(rng.integers(1, max_members + 1))
        members = []
        if share and shared_name is None and i == 0:
            shared_name = f"v{counter}"
            counter += 1
            new_agent(shared_name, in_pair=True)
            members.append(shared_name)
        elif share and i == 1:
            members.append(shared_name)
        while len(members) < n_members:
            name = f"v{counter}"
            counter += 1
            new_agent(name, in_pair=n_members > 1)
            members.append(name)
        members_per_point.append(tuple(members))

    # at least one controllable agent keeps the problem non-trivial
    if all(len(agents[v].actions) == 1 for v in agents):
        first = next(iter(agents))
        agents[first] = _random_agent(rng, len(list(agents[first].states)), 2)

    n_criteria = 1 if rng.random() < 0.8 else 2
    criteria = tuple(f"j{n}" for n in range(n_criteria))
    owner_flags = assign_utility_owners(members_per_point)
    points = []
    for i, members in enumerate(members_per_point):
        points.append(
            InteractionPoint(
                id=i,
                members=members,
                utility_owners=owner_flags[i],
                risk=_random_risk(rng, members, agents, criteria),
            )
        )
    budgets = {j: float(round(rng.random() * 0.5, 4)) for j in criteria}
    horizon = int(rng.integers(1, max_horizon + 1))
    return MccSspInstance(
        agents=agents,
        interactions=tuple(points),
        horizon=horizon,
        risk_budgets=budgets,
    )


@dataclass
class EquivalenceReport:
    instances: int = 0
    solved: int = 0
    infeasible: int = 0
    budget_exhausted: int = 0
    resampled: int = 0
    max_objective_gap: float = 0.0
    max_budget_excess: float = 0.0
    max_linear_form_gap: float = 0.0
    seconds: float = 0.0
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def check_instance(instance: MccSspInstance, cap: int, report: EquivalenceReport) -> None:
    """Cross-check the solver against the brute-force oracle on one instance."""
    layers = reachable_layers(instance)
    result = solve_instance(instance, layers)
    oracle = brute_force_optimal(instance, layers, cap=cap)

    if result.status == "budget_exhausted":
        report.budget_exhausted += 1
        if oracle.status != "infeasible":
            report.failures.append(
                f"budget exhausted but oracle found objective {oracle.objective}"
            )
        return
    if result.status == "infeasible":
        report.infeasible += 1
        if oracle.status != "infeasible":
            report.failures.append(
                f"solver infeasible but oracle found objective {oracle.objective}"
            )
        return
    if result.status != "optimal":
        report.failures.append(f"unexpected solver status {result.status}")
        return
    if oracle.status != "optimal":
        report.failures.append(
            f"solver objective {result.objective} but oracle infeasible"
        )
        return

    report.solved += 1
    gap = abs(result.objective - oracle.objective)
    report.max_objective_gap = max(report.max_objective_gap, gap)
    if gap > OBJECTIVE_TOL:
        report.failures.append(
            f"objective mismatch: solver {result.objective!r} vs oracle {oracle.objective!r}"
        )
    for j in instance.criteria:
        risk = execution_risk(instance, layers, result.policy, j)
        excess = risk - instance.risk_budgets[j]
        report.max_budget_excess = max(report.max_budget_excess, excess)
        if excess > RISK_TOL:
            report.failures.append(
                f"policy risk {risk!r} exceeds budget {instance.risk_budgets[j]!r} ({j})"
            )
        # linear expression at the solver's flows vs the recursion
        linear = linear_risk_from_flows(instance, layers, result.flows[j], j)
        lgap = abs(linear - risk)
        report.max_linear_form_gap = max(report.max_linear_form_gap, lgap)
        if lgap > LINEAR_FORM_TOL:
            report.failures.append(
                f"linear form {linear!r} vs recursion {risk!r} at solved flows ({j})"
            )


def run_oracle_equivalence(
    n_instances: int = 200,
    seed: int = 0,
    cap: int = 50_000,
    verbose: bool = False,
) -> EquivalenceReport:
    """Solve seeded random instances against the oracle; resamples the rare
    draw whose policy space exceeds the enumeration cap."""
    rng = np.random.default_rng(seed)
    report = EquivalenceReport()
    start = time.perf_counter()
    while report.instances < n_instances:
        instance = random_instance(rng)
        if validate_instance(instance):
            report.resampled += 1
            continue
        try:
            check_instance(instance, cap, report)
        except CapExceeded:
            report.resampled += 1
            continue
        report.instances += 1
        if verbose and report.instances % 50 == 0:
            print(f"  {report.instances}/{n_instances} checked, failures: {len(report.failures)}")
    report.seconds = time.perf_counter() - start
    return report
