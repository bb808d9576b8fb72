"""Resource allocation for layered coded multicast.

Solvers share one objective: the per-user, per-level QoS indicators are
counted as profit, the transmitted blocks as cost, and the coverage
constraint demands that at least a target fraction of users reach each level
with probability >= Q.  All solvers work on the allocator-view erasure model:
a user loses a block with the anchor probability when its reported MCS covers
the block's MCS, and with certainty otherwise.

* :func:`heuristic_uep_ram` - window-skipping greedy with a merge refinement.
* :func:`direct_uep_ram` - reference search: exact enumeration when the
  decision space is small enough, a seeded genetic search otherwise.
* :func:`solve_mrt` - uncoded multi-rate baseline with strictly increasing
  per-layer MCS.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, product
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .decode_prob import (
    LayerConfig,
    TransmissionPlan,
    advance_deficit,
    deficit_distribution,
    qos_levels,
    success_over_budget,
)

_COUNT_EPS = 1e-9  # guard when comparing integer counts against U * fraction
_PROB_EPS = 1e-12

DEFAULT_SEARCH_BUDGET = 2_000_000
GENETIC_POPULATION = 60
GENETIC_GENERATIONS = 200
GENETIC_MUTATION = 0.05
GENETIC_CROSSOVER = 0.9
GENETIC_TOURNAMENT = 3
GENETIC_PENALTY = 10.0


@dataclass(frozen=True)
class AllocationProblem:
    """Allocator inputs: stream layout, user reports, budgets, capacities."""

    layers: LayerConfig
    user_mcs: tuple[int, ...]
    tb_budget: tuple[int, ...]
    capacities: Mapping[int, int]  # MCS index -> elements per block
    p_hat: float = 0.1
    q_hat: float = 0.99

    def __post_init__(self):
        object.__setattr__(self, "user_mcs", tuple(int(v) for v in self.user_mcs))
        object.__setattr__(self, "tb_budget", tuple(int(v) for v in self.tb_budget))
        object.__setattr__(self, "capacities", dict(self.capacities))
        if not self.user_mcs:
            raise ValueError("at least one user is required")
        if len(self.tb_budget) != self.layers.num_layers:
            raise ValueError("one block budget per window is required")
        if self.layers.coverage_targets is None:
            raise ValueError("layer configuration carries no coverage targets")

    def capacity(self, m: int) -> int:
        return self.capacities.get(m, 0)


@dataclass
class PlanEvaluation:
    """Allocator-view assessment of one (MCS, block-count) assignment."""

    delta: np.ndarray  # (U, L) QoS indicators
    profit: int
    cost: int
    tau: float
    layer_counts: np.ndarray
    feasible: bool


@dataclass
class AllocationSolution:
    plan: TransmissionPlan
    tau: float
    feasible: bool
    delta: np.ndarray
    solver: str  # "heuristic" | "direct" | "mrt"
    skipped_windows: int = 0
    profit: int = 0
    cost: int = 0
    search: str | None = None  # direct only: "exhaustive" | "genetic"
    intermediate_tb_total: int | None = None  # heuristic only


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    layer_fractions: tuple[float, ...]
    required_fractions: tuple[float, ...]
    coverage_ok: tuple[bool, ...]
    budget_ok: tuple[bool, ...]
    violations: tuple[str, ...]


def _as_problem(scenario) -> AllocationProblem:
    if isinstance(scenario, AllocationProblem):
        return scenario
    return scenario.to_allocation_problem()


def _required_count(num_users: int, fraction: float) -> int:
    return math.ceil(num_users * fraction - _COUNT_EPS)


def _receive_pmf(tb_count: int, loss: float) -> np.ndarray:
    if tb_count == 0:
        return np.ones(1)
    return stats.binom.pmf(np.arange(tb_count + 1), tb_count, 1.0 - loss)


def evaluate_plan(problem, mcs: Sequence[int], tb_counts: Sequence[int]) -> PlanEvaluation:
    """QoS indicators, profit/cost and constraint compliance of a plan.

    Users sharing the same per-window qualification pattern get identical
    probabilities, so the recovery computation runs once per pattern.
    """
    pr = _as_problem(problem)
    layers = pr.layers
    L = layers.num_layers
    U = len(pr.user_mcs)
    mcs = tuple(int(m) for m in mcs)
    counts = tuple(int(c) for c in tb_counts)
    caps_vec = tuple(pr.capacity(m) for m in mcs)
    plan = TransmissionPlan(mcs, counts, caps_vec)
    delta = np.zeros((U, L), dtype=bool)
    by_profile: dict[tuple[bool, ...], np.ndarray] = {}
    for ui, reported in enumerate(pr.user_mcs):
        good = tuple(0 < m <= reported and c > 0 for m, c in zip(mcs, counts))
        levels = by_profile.get(good)
        if levels is None:
            losses = [pr.p_hat if g else 1.0 for g in good]
            levels = qos_levels(layers, plan, losses, pr.q_hat)
            by_profile[good] = levels
        delta[ui] = levels
    layer_counts = delta.sum(axis=0)
    profit = int(delta.sum())
    cost = int(sum(counts))
    tau = profit / cost if cost > 0 else 0.0
    required = [_required_count(U, t) for t in layers.coverage_targets]
    coverage_ok = all(int(layer_counts[i]) >= required[i] for i in range(L))
    budget_ok = all(0 <= counts[i] <= pr.tb_budget[i] for i in range(L))
    return PlanEvaluation(delta, profit, cost, tau, layer_counts,
                          coverage_ok and budget_ok)


def solve_s1(user_mcs: Sequence[int], t_prime: float) -> int | None:
    """Largest MCS that still reaches the required user fraction.

    A user qualifies when its reported MCS is at least the candidate; the
    answer is the largest candidate in [1, 15] with enough qualifying users,
    or None when even MCS 1 falls short (only possible for fractions > 1).
    """
    if not len(user_mcs):
        raise ValueError("at least one user report is required")
    required = _required_count(len(user_mcs), t_prime)
    reports = np.asarray(user_mcs)
    for m in range(15, 0, -1):
        if int(np.count_nonzero(reports >= m)) >= required:
            return m
    return None


def solve_s2(
    layers: LayerConfig,
    tb_prefix: Sequence[int],
    capacities: Sequence[int],
    window: int,
    p_hat: float,
    q_hat: float,
    budget: int,
) -> int | None:
    """Fewest blocks making window ``window`` decodable with prob >= q_hat.

    User-agnostic: every transmitted block of every window is assumed lost
    with probability ``p_hat``.  Returns None when no count within the budget
    reaches the threshold.
    """
    if not 1 <= window <= layers.num_layers:
        raise ValueError("window index out of range")
    if len(tb_prefix) != window - 1:
        raise ValueError("prefix must fix the counts of all earlier windows")
    k = layers.k
    losses = [p_hat] * (window - 1)
    dist = deficit_distribution(k, capacities, tb_prefix, losses, window - 1)
    success = success_over_budget(dist, k[window - 1], capacities[window - 1],
                                  budget, p_hat)
    hits = np.nonzero(success >= q_hat - _PROB_EPS)[0]
    return int(hits[0]) if hits.size else None


def _canonical_plan(pr: AllocationProblem, mcs, counts) -> TransmissionPlan:
    mcs = [m if c > 0 else 0 for m, c in zip(mcs, counts)]
    caps = [pr.capacity(m) for m in mcs]
    return TransmissionPlan(tuple(mcs), tuple(int(c) for c in counts), tuple(caps))


def _solution(pr, mcs, counts, ev: PlanEvaluation, solver: str, **extra) -> AllocationSolution:
    return AllocationSolution(
        plan=_canonical_plan(pr, mcs, counts),
        tau=ev.tau,
        feasible=ev.feasible,
        delta=ev.delta,
        solver=solver,
        profit=ev.profit,
        cost=ev.cost,
        **extra,
    )


def _no_solution(pr, solver: str, **extra) -> AllocationSolution:
    L = pr.layers.num_layers
    return AllocationSolution(
        plan=TransmissionPlan((0,) * L, (0,) * L, (0,) * L),
        tau=0.0,
        feasible=False,
        delta=np.zeros((len(pr.user_mcs), L), dtype=bool),
        solver=solver,
        skipped_windows=-1,
        **extra,
    )


def heuristic_uep_ram(scenario) -> AllocationSolution:
    """Window-skipping greedy allocation with a merge refinement pass.

    Starting from the deepest skip count s = L-1, the first s windows are
    dropped; the first delivered window inherits the strictest coverage
    target.  Each delivered window gets the largest MCS keeping enough users
    qualified, then the fewest blocks reaching the recovery threshold.  When
    the coverage constraint holds, a refinement tries to merge each window
    into its successor (re-transmitting the successor at the more robust MCS
    and dropping the predecessor); failed merges are rolled back, and the
    refined plan is only returned when it is feasible and no more expensive
    than the intermediate one.  Otherwise s is decreased; with s exhausted an
    explicit no-solution result is returned.
    """
    pr = _as_problem(scenario)
    layers = pr.layers
    L = layers.num_layers
    targets = layers.coverage_targets
    for skip in range(L - 1, -1, -1):
        mcs = [0] * L
        counts = [0] * L
        t_prime = [0.0] * L
        t_prime[skip] = targets[0]
        for i in range(skip + 1, L):
            t_prime[i] = targets[i]
        for i in range(skip, L):
            m = solve_s1(pr.user_mcs, t_prime[i])
            if m is not None:
                mcs[i] = m
        caps_vec = [pr.capacity(m) for m in mcs]
        for i in range(skip, L):
            if caps_vec[i] >= 1:
                found = solve_s2(layers, counts[:i], caps_vec, i + 1,
                                 pr.p_hat, pr.q_hat, pr.tb_budget[i])
                if found is not None:
                    counts[i] = found
        intermediate = evaluate_plan(pr, mcs, counts)
        if not intermediate.feasible:
            continue
        mcs_int = list(mcs)
        counts_int = list(counts)
        for i in range(L - 1, skip, -1):
            if counts[i - 1] > 0 and counts[i] > 0:
                saved = (mcs[i - 1], counts[i - 1], mcs[i], counts[i])
                mcs[i] = mcs[i - 1]
                mcs[i - 1] = 0
                counts[i - 1] = 0
                counts[i] = 0
                caps_vec = [pr.capacity(m) for m in mcs]
                found = solve_s2(layers, counts[:i], caps_vec, i + 1,
                                 pr.p_hat, pr.q_hat, pr.tb_budget[i])
                if found is not None:
                    counts[i] = found
                else:
                    # unsolvable merge would leave the window untransmitted;
                    # roll the pair back to its intermediate values
                    mcs[i - 1], counts[i - 1], mcs[i], counts[i] = saved
        refined = evaluate_plan(pr, mcs, counts)
        if not refined.feasible or sum(counts_int) < sum(counts):
            mcs, counts, chosen = mcs_int, counts_int, intermediate
        else:
            chosen = refined
        return _solution(pr, mcs, counts, chosen, solver="heuristic",
                         skipped_windows=skip,
                         intermediate_tb_total=sum(counts_int))
    return _no_solution(pr, solver="heuristic", intermediate_tb_total=None)


def check_feasibility(solution: AllocationSolution, scenario) -> FeasibilityReport:
    """Re-derive the QoS indicators of a solution and verify both constraint
    families (coverage fractions and block budgets)."""
    pr = _as_problem(scenario)
    ev = evaluate_plan(pr, solution.plan.mcs, solution.plan.tb_counts)
    U = len(pr.user_mcs)
    targets = pr.layers.coverage_targets
    fractions = tuple(float(c) / U for c in ev.layer_counts)
    coverage_ok = tuple(
        int(ev.layer_counts[i]) >= _required_count(U, targets[i])
        for i in range(pr.layers.num_layers)
    )
    budget_ok = tuple(
        0 <= solution.plan.tb_counts[i] <= pr.tb_budget[i]
        for i in range(pr.layers.num_layers)
    )
    violations = []
    for i, ok in enumerate(coverage_ok):
        if not ok:
            violations.append(
                f"layer {i + 1}: coverage {fractions[i]:.4f} < target {targets[i]:.4f}"
            )
    for i, ok in enumerate(budget_ok):
        if not ok:
            violations.append(
                f"window {i + 1}: block count {solution.plan.tb_counts[i]} "
                f"outside [0, {pr.tb_budget[i]}]"
            )
    return FeasibilityReport(
        feasible=all(coverage_ok) and all(budget_ok),
        layer_fractions=fractions,
        required_fractions=tuple(targets),
        coverage_ok=coverage_ok,
        budget_ok=budget_ok,
        violations=tuple(violations),
    )


def search_space_size(problem) -> int:
    """Number of canonical (MCS, count) assignments of the direct search."""
    pr = _as_problem(problem)
    n_mcs = len(pr.capacities)
    return math.prod(1 + n_mcs * b for b in pr.tb_budget)


def direct_uep_ram(
    scenario,
    budget: int = DEFAULT_SEARCH_BUDGET,
    method: str = "auto",
    seed: int = 0,
    constraint_mode: str = "penalty",
) -> AllocationSolution:
    """Reference solver: exact enumeration, or genetic search beyond ``budget``.

    Enumeration walks every canonical assignment (a window is either off, or
    carries 1..budget blocks at a table-backed MCS) and returns the feasible
    optimum; ties prefer fewer blocks, then the lexicographically smaller MCS
    vector.  The genetic fallback is fully seeded; ``constraint_mode`` picks
    between a coverage penalty and hard rejection of infeasible candidates.
    """
    pr = _as_problem(scenario)
    if method not in ("auto", "exhaustive", "genetic"):
        raise ValueError(f"unknown method {method!r}")
    if method == "auto":
        method = "exhaustive" if search_space_size(pr) <= budget else "genetic"
    if method == "exhaustive":
        return _exhaustive_search(pr)
    return _genetic_search(pr, seed=seed, constraint_mode=constraint_mode)


def _better(profit: int, cost: int, best_profit: int, best_cost: int) -> bool:
    # exact fraction comparison; ties go to the cheaper plan, and the caller's
    # lexicographic iteration order settles the rest via strict improvement
    lhs = profit * best_cost
    rhs = best_profit * cost
    if lhs != rhs:
        return lhs > rhs
    return cost < best_cost


def _exhaustive_search(pr: AllocationProblem) -> AllocationSolution:
    # Per-user recovery depends only on the physical path: per window either
    # nothing received (off, or the user does not qualify) or a qualified
    # reception with a given capacity and count.  Deficit distributions and
    # per-count success tables are therefore memoised on that path, shared
    # across all MCS vectors and user profiles.
    layers = pr.layers
    L = layers.num_layers
    k = layers.k
    U = len(pr.user_mcs)
    required = np.array([_required_count(U, t) for t in layers.coverage_targets])
    budgets = pr.tb_budget
    mcs_choices = [0] + sorted(pr.capacities)
    report_vals, report_counts = np.unique(np.asarray(pr.user_mcs), return_counts=True)
    q_thresh = pr.q_hat - _PROB_EPS
    p_hat = pr.p_hat

    pmf_cache: dict[int, np.ndarray] = {}

    def pmf_for(count: int) -> np.ndarray:
        pmf = pmf_cache.get(count)
        if pmf is None:
            pmf = _receive_pmf(count, p_hat)
            pmf_cache[count] = pmf
        return pmf

    # path key: one step per window, None (nothing received) or (capacity, count)
    dist_cache: dict[tuple, np.ndarray] = {(): np.ones(1)}

    def dist_for(key: tuple) -> np.ndarray:
        dist = dist_cache.get(key)
        if dist is None:
            prev = dist_for(key[:-1])
            depth = len(key) - 1
            step = key[-1]
            if step is None:
                dist = np.concatenate([np.zeros(k[depth]), prev])
            else:
                dist = advance_deficit(prev, k[depth], step[0], pmf_for(step[1]))
            dist_cache[key] = dist
        return dist

    table_cache: dict[tuple, np.ndarray] = {}

    def success_table(key: tuple, depth: int, capacity: int) -> np.ndarray:
        tk = (key, capacity)
        table = table_cache.get(tk)
        if table is None:
            table = success_over_budget(dist_for(key), k[depth], capacity,
                                        budgets[depth], p_hat)
            table_cache[tk] = table
        return table

    best_profit, best_cost = -1, 1
    best_assignment: tuple[tuple[int, ...], tuple[int, ...]] | None = None

    def consider(m_vec, n_used, profit, cost):
        nonlocal best_profit, best_cost, best_assignment
        if _better(profit, cost, best_profit, best_cost):
            best_profit, best_cost = profit, cost
            best_assignment = (tuple(m_vec), tuple(n_used))

    for m_vec in product(mcs_choices, repeat=L):
        if all(m == 0 for m in m_vec):
            continue
        n_vec = tuple(pr.capacity(m) for m in m_vec)
        profile_counts: dict[tuple[bool, ...], int] = {}
        for val, cnt in zip(report_vals, report_counts):
            good = tuple(0 < m <= val for m in m_vec)
            profile_counts[good] = profile_counts.get(good, 0) + int(cnt)
        profiles = list(profile_counts.items())
        weights = np.array([c for _, c in profiles], dtype=np.int64)

        def walk(depth, keys, prefix_probs, cost, n_used):
            if depth == L - 1:
                _finish(depth, keys, prefix_probs, cost, n_used)
                return
            n_i = n_vec[depth]
            if m_vec[depth] == 0:
                walk(depth + 1, [key + (None,) for key in keys],
                     [pp + [0.0] for pp in prefix_probs], cost, n_used + [0])
                return
            tables = [
                success_table(key, depth, n_i) if good[depth] else None
                for (good, _), key in zip(profiles, keys)
            ]
            for count in range(1, budgets[depth] + 1):
                next_keys = []
                next_probs = []
                for pi, ((good, _), key) in enumerate(zip(profiles, keys)):
                    if good[depth]:
                        next_keys.append(key + ((n_i, count),))
                        next_probs.append(float(tables[pi][count]))
                    else:
                        next_keys.append(key + (None,))
                        next_probs.append(0.0)
                walk(depth + 1, next_keys,
                     [pp + [pv] for pp, pv in zip(prefix_probs, next_probs)],
                     cost + count, n_used + [count])

        def _finish(depth, keys, prefix_probs, cost, n_used):
            n_i = n_vec[depth]
            fixed = np.zeros((len(profiles), L), dtype=bool)
            for pi, pp in enumerate(prefix_probs):
                hit = np.asarray(pp) >= q_thresh
                fixed[pi, : L - 1] = np.logical_or.accumulate(hit[::-1])[::-1]
            fixed_cov = weights @ fixed  # users covered regardless of window L
            if m_vec[depth] == 0:
                if cost == 0:
                    return
                if np.all(fixed_cov >= required):
                    consider(m_vec, n_used + [0], int(fixed_cov.sum()), cost)
                return
            B = budgets[depth]
            hits = np.zeros((len(profiles), B), dtype=bool)
            for pi, ((good, _), key) in enumerate(zip(profiles, keys)):
                if good[depth]:
                    hits[pi] = success_table(key, depth, n_i)[1:] >= q_thresh
            # coverage(level, count) = fixed users + hit users not yet fixed
            variable = (weights[:, None] * ~fixed).T.astype(np.int64)  # (L, P)
            coverage = fixed_cov[:, None] + variable @ hits  # (L, B)
            feasible = np.all(coverage >= required[:, None], axis=0)
            if not np.any(feasible):
                return
            profits = coverage.sum(axis=0)
            counts = np.arange(1, B + 1)
            taus = np.where(feasible, profits / (cost + counts), -1.0)
            idx = int(np.argmax(taus))  # first max: the cheapest of the ties
            consider(m_vec, n_used + [idx + 1], int(profits[idx]), cost + idx + 1)

        walk(0, [() for _ in profiles], [[] for _ in profiles], 0, [])

    if best_assignment is None:
        return _no_solution(pr, solver="direct", search="exhaustive")
    m_best, counts_best = best_assignment
    ev = evaluate_plan(pr, m_best, counts_best)
    return _solution(pr, m_best, counts_best, ev, solver="direct",
                     search="exhaustive")


def _genetic_search(pr: AllocationProblem, seed: int, constraint_mode: str,
                    population: int = GENETIC_POPULATION,
                    generations: int = GENETIC_GENERATIONS,
                    mutation: float = GENETIC_MUTATION) -> AllocationSolution:
    if constraint_mode not in ("penalty", "hard"):
        raise ValueError("constraint_mode must be 'penalty' or 'hard'")
    layers = pr.layers
    L = layers.num_layers
    U = len(pr.user_mcs)
    required = [_required_count(U, t) for t in layers.coverage_targets]
    budgets = pr.tb_budget
    mcs_list = sorted(pr.capacities)
    rng = np.random.default_rng(seed)
    cache: dict[tuple, tuple[float, PlanEvaluation]] = {}

    def decode(genome) -> tuple[tuple[int, ...], tuple[int, ...]]:
        mcs, counts = [], []
        for i in range(L):
            sel = int(genome[i])
            cnt = int(genome[L + i])
            if sel == 0 or cnt == 0:
                mcs.append(0)
                counts.append(0)
            else:
                mcs.append(mcs_list[sel - 1])
                counts.append(cnt)
        return tuple(mcs), tuple(counts)

    def fitness(genome) -> tuple[float, PlanEvaluation]:
        key = tuple(int(g) for g in genome)
        hit = cache.get(key)
        if hit is not None:
            return hit
        mcs, counts = decode(genome)
        ev = evaluate_plan(pr, mcs, counts)
        violations = sum(
            int(ev.layer_counts[i]) < required[i] for i in range(L)
        )
        if constraint_mode == "penalty":
            fit = ev.tau - GENETIC_PENALTY * violations
        else:
            fit = ev.tau if violations == 0 else -float(violations)
        cache[key] = (fit, ev)
        return fit, ev

    def random_genome():
        sel = rng.integers(0, len(mcs_list) + 1, size=L)
        cnt = np.array([rng.integers(0, budgets[i] + 1) for i in range(L)])
        return np.concatenate([sel, cnt])

    pop = [random_genome() for _ in range(population)]
    scored = [fitness(g) for g in pop]

    best_feasible: tuple[PlanEvaluation, tuple, tuple] | None = None

    def track(genome, ev: PlanEvaluation):
        nonlocal best_feasible
        if not ev.feasible:
            return
        if best_feasible is None or _better(ev.profit, ev.cost,
                                            best_feasible[0].profit,
                                            best_feasible[0].cost):
            best_feasible = (ev, *decode(genome))

    for genome, (_, ev) in zip(pop, scored):
        track(genome, ev)

    for _ in range(generations):
        order = np.argsort([-s[0] for s in scored], kind="stable")
        elite = [pop[i].copy() for i in order[:2]]
        children = list(elite)
        while len(children) < population:
            picks = rng.integers(0, population, size=GENETIC_TOURNAMENT)
            pa = pop[max(picks, key=lambda i: scored[i][0])]
            picks = rng.integers(0, population, size=GENETIC_TOURNAMENT)
            pb = pop[max(picks, key=lambda i: scored[i][0])]
            child = pa.copy()
            if rng.random() < GENETIC_CROSSOVER:
                take = rng.random(2 * L) < 0.5
                child[take] = pb[take]
            for i in range(L):
                if rng.random() < mutation:
                    child[i] = rng.integers(0, len(mcs_list) + 1)
                if rng.random() < mutation:
                    child[L + i] = rng.integers(0, budgets[i] + 1)
            children.append(child)
        pop = children
        scored = [fitness(g) for g in pop]
        for genome, (_, ev) in zip(pop, scored):
            track(genome, ev)

    if best_feasible is None:
        return _no_solution(pr, solver="direct", search="genetic")
    ev, mcs, counts = best_feasible
    return _solution(pr, mcs, counts, ev, solver="direct", search="genetic")


def solve_mrt(scenario) -> AllocationSolution:
    """Uncoded multi-rate baseline.

    Each layer is sent on its own MCS, strictly increasing across layers, with
    the fixed lossless block count ceil(k_i / n_i); the search maximises the
    summed per-user quality metric (PSNR plateau times the probability that
    every block of the first ``l`` layers arrives) over all increasing MCS
    vectors from the capacity table.
    """
    pr = _as_problem(scenario)
    layers = pr.layers
    L = layers.num_layers
    if layers.psnr is None:
        raise ValueError("layer configuration carries no PSNR plateaus")
    mcs_list = sorted(pr.capacities)
    if L > len(mcs_list):
        raise ValueError(
            f"{L} layers cannot take strictly increasing MCS from "
            f"{len(mcs_list)} table entries"
        )
    report_vals, report_counts = np.unique(np.asarray(pr.user_mcs), return_counts=True)
    best_score = -1.0
    best: tuple[tuple[int, ...], tuple[int, ...]] | None = None
    for m_vec in combinations(mcs_list, L):
        blocks = tuple(-(-layers.k[i] // pr.capacity(m_vec[i])) for i in range(L))
        score = 0.0
        for val, cnt in zip(report_vals, report_counts):
            survive = 1.0
            best_u = 0.0
            for i in range(L):
                if m_vec[i] <= val:
                    survive *= (1.0 - pr.p_hat) ** blocks[i]
                else:
                    survive = 0.0
                best_u = max(best_u, layers.psnr[i] * survive)
            score += float(cnt) * best_u
        if score > best_score:
            best_score = score
            best = (m_vec, blocks)
    m_vec, blocks = best
    ev = evaluate_plan(pr, m_vec, blocks)
    return _solution(pr, m_vec, blocks, ev, solver="mrt")
