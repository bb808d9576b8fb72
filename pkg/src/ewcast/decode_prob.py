"""Analytic recovery probabilities for expanding-window coded transmissions.

A layered source message is sent as L nested windows; window ``l`` spans the
first ``K_l`` source elements and is carried by ``N_l`` transport blocks of
``n_l`` coded elements each, every block erased independently with a
per-window probability.  A receiver recovers window ``l`` when the coded
elements collected from windows ``1..l`` contain enough information to span
all ``K_l`` unknowns.  In the large-field limit that event reduces to a
threshold test on the received element counts: each window carries a residual
requirement ("deficit") forward, receptions settle it, and window ``l``
decodes when its own receptions cover the leftover plus its fresh elements.

The exact probability of that threshold event is computed here by dynamic
programming over the deficit value, which is equivalent to the full nested
summation over all reception outcomes but runs in O(L * K * max N) time.  A
literal nested-sum evaluator is kept as an independent cross-check.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from itertools import accumulate, product
from typing import Sequence

import numpy as np
from scipy import stats

# Two readings of the deficit hand-off between adjacent windows:
#   "own"  - a window's receptions settle its own outstanding requirement
#            before the leftover is carried to the next window (default;
#            matches the rank condition of the nested code, see gf_rlnc).
#   "next" - the next window's reception count settles the carried
#            requirement at the earlier window's block size.
DEFICIT_RULES = ("own", "next")

# Refuse literal nested summation beyond this many reception outcomes.
BRUTE_FORCE_LIMIT = 10**6

_PROB_EPS = 1e-12  # grace when comparing probabilities against a threshold


@dataclass(frozen=True)
class LayerConfig:
    """Layered source message: per-layer element counts plus stream metadata.

    ``k[i]`` is the number of source elements in layer ``i+1``; window sizes
    are the running sums.  Bitrates (bits/s), PSNR plateaus (dB) and coverage
    targets (user fractions) are optional and only needed by the allocators.
    """

    k: tuple[int, ...]
    bitrates: tuple[float, ...] | None = None
    psnr: tuple[float, ...] | None = None
    coverage_targets: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "k", tuple(int(v) for v in self.k))
        if not self.k:
            raise ValueError("at least one layer is required")
        if any(v < 1 for v in self.k):
            raise ValueError("layer element counts must be >= 1")
        for name in ("bitrates", "psnr", "coverage_targets"):
            val = getattr(self, name)
            if val is None:
                continue
            val = tuple(float(v) for v in val)
            object.__setattr__(self, name, val)
            if len(val) != len(self.k):
                raise ValueError(f"{name} must have one entry per layer")
        targets = self.coverage_targets
        if targets is not None:
            if any(not 0.0 < t <= 1.0 for t in targets):
                raise ValueError("coverage targets must lie in (0, 1]")
            if any(targets[i] < targets[i + 1] for i in range(len(targets) - 1)):
                warnings.warn(
                    "coverage targets increase with the layer index; deeper "
                    "layer sets normally demand a smaller user fraction",
                    stacklevel=2,
                )

    @property
    def num_layers(self) -> int:
        return len(self.k)

    @property
    def window_sizes(self) -> tuple[int, ...]:
        """Cumulative element counts: size of each expanding window."""
        return tuple(accumulate(self.k))


@dataclass(frozen=True)
class TransmissionPlan:
    """Per-window transmission decision: MCS index, block count, block size.

    ``tb_counts[i] == 0`` means window ``i+1`` is not transmitted at all; its
    MCS and capacity are then irrelevant.  MCS 0 marks an unassigned window.
    """

    mcs: tuple[int, ...]
    tb_counts: tuple[int, ...]
    elements_per_tb: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "mcs", tuple(int(v) for v in self.mcs))
        object.__setattr__(self, "tb_counts", tuple(int(v) for v in self.tb_counts))
        object.__setattr__(
            self, "elements_per_tb", tuple(int(v) for v in self.elements_per_tb)
        )
        if not len(self.mcs) == len(self.tb_counts) == len(self.elements_per_tb):
            raise ValueError("plan vectors must share one entry per window")
        if any(m < 0 or m > 15 for m in self.mcs):
            raise ValueError("MCS indices must lie in [0, 15]")
        if any(c < 0 for c in self.tb_counts):
            raise ValueError("block counts must be >= 0")
        if any(n < 0 for n in self.elements_per_tb):
            raise ValueError("block capacities must be >= 0")
        for c, n in zip(self.tb_counts, self.elements_per_tb):
            if c > 0 and n < 1:
                raise ValueError("a transmitted window needs capacity >= 1")

    @classmethod
    def uniform(cls, num_windows: int, tb_count: int, elements_per_tb: int):
        """Same block count and capacity for every window, MCS unassigned."""
        return cls(
            (0,) * num_windows,
            (tb_count,) * num_windows,
            (elements_per_tb,) * num_windows,
        )

    @property
    def num_windows(self) -> int:
        return len(self.tb_counts)

    @property
    def total_tbs(self) -> int:
        return sum(self.tb_counts)


@dataclass(frozen=True)
class DecodeProbability:
    """Per-window recovery probabilities with provenance."""

    p_win: tuple[float, ...]
    provenance: str  # "analytic" or "simulated"
    std_err: tuple[float, ...] | None = None
    trials: int | None = None

    def __post_init__(self):
        if self.provenance not in ("analytic", "simulated"):
            raise ValueError("provenance must be 'analytic' or 'simulated'")
        if any(not -_PROB_EPS <= p <= 1.0 + _PROB_EPS for p in self.p_win):
            raise ValueError("probabilities must lie in [0, 1]")
        if self.provenance == "simulated" and self.std_err is None:
            raise ValueError("simulated results must carry standard errors")


def deficit_transition(deficit_in: int, r: int, n: int, k_new: int) -> int:
    """Requirement carried into the next window.

    ``r`` received blocks of ``n`` elements settle the incoming deficit; the
    shortfall (never negative) is added to the next window's own ``k_new``
    fresh elements.
    """
    if min(deficit_in, r, n, k_new) < 0:
        raise ValueError("all arguments must be non-negative")
    return k_new + max(deficit_in - r * n, 0)


def _receive_pmf(tb_count: int, loss: float) -> np.ndarray:
    """P[r blocks received] for r = 0..tb_count under i.i.d. block loss."""
    if tb_count == 0:
        return np.ones(1)
    # scipy evaluates the pmf from log-gamma terms, so large counts stay
    # underflow-safe without a separate log-space path.
    return stats.binom.pmf(np.arange(tb_count + 1), tb_count, 1.0 - loss)


def _needed_blocks(requirement: np.ndarray, capacity: int) -> np.ndarray:
    """Minimum received blocks that satisfy each element requirement."""
    req = np.asarray(requirement, dtype=np.int64)
    if capacity < 1:
        return np.where(req <= 0, 0, np.iinfo(np.int64).max // 2)
    return np.maximum((req + capacity - 1) // capacity, 0)


def _receive_tail(needed: np.ndarray, tb_count: int, loss: float) -> np.ndarray:
    """P(received blocks >= needed) for each entry of ``needed``."""
    needed = np.asarray(needed, dtype=np.int64)
    out = np.zeros(needed.shape, dtype=float)
    out[needed <= 0] = 1.0
    open_mask = (needed >= 1) & (needed <= tb_count)
    if np.any(open_mask):
        out[open_mask] = stats.binom.sf(needed[open_mask] - 1, tb_count, 1.0 - loss)
    return out


def advance_deficit(dist: np.ndarray, k_new: int, capacity: int, pmf: np.ndarray) -> np.ndarray:
    """Push the deficit distribution through one window.

    ``dist[e]`` is the probability that the residual requirement equals ``e``
    when the window starts; the window adds ``k_new`` fresh elements and each
    reception outcome ``r`` (weighted by ``pmf[r]``) removes ``r * capacity``.
    """
    size = dist.size
    new = np.zeros(k_new + size)
    for r, weight in enumerate(pmf):
        if weight == 0.0:
            continue
        cleared = r * capacity - k_new  # deficits e <= cleared vanish entirely
        if cleared >= size - 1:
            new[0] += weight
        elif cleared < 0:
            offset = -cleared
            new[offset : offset + size] += weight * dist
        else:
            new[0] += weight * dist[: cleared + 1].sum()
            new[1 : size - cleared] += weight * dist[cleared + 1 :]
    return new


def deficit_distribution(
    k: Sequence[int],
    capacities: Sequence[int],
    tb_counts: Sequence[int],
    losses: Sequence[float],
    upto: int,
) -> np.ndarray:
    """Distribution of the residual deficit after the first ``upto`` windows."""
    dist = np.ones(1)
    for i in range(upto):
        pmf = _receive_pmf(tb_counts[i], losses[i])
        dist = advance_deficit(dist, k[i], capacities[i], pmf)
    return dist


_TAIL_TABLE_CACHE: dict[tuple[int, float], np.ndarray] = {}


def receive_tail_table(budget: int, loss: float) -> np.ndarray:
    """``table[N, j] = P(at least j of N sent blocks arrive)``, cached.

    Built by the Pascal recursion on the binomial pmf, so one table serves
    every count up to ``budget`` without per-call distribution overhead.
    """
    key = (budget, loss)
    table = _TAIL_TABLE_CACHE.get(key)
    if table is not None:
        return table
    q = 1.0 - loss
    pmf = np.zeros((budget + 1, budget + 1))
    pmf[0, 0] = 1.0
    for count in range(1, budget + 1):
        pmf[count, 0] = pmf[count - 1, 0] * (1.0 - q)
        pmf[count, 1 : count + 1] = (
            q * pmf[count - 1, 0:count] + (1.0 - q) * pmf[count - 1, 1 : count + 1]
        )
    table = np.zeros((budget + 1, budget + 2))
    table[:, : budget + 1] = pmf[:, ::-1].cumsum(axis=1)[:, ::-1]
    _TAIL_TABLE_CACHE[key] = table
    return table


def success_over_budget(
    dist: np.ndarray, k_w: int, capacity: int, budget: int, loss: float
) -> np.ndarray:
    """Window recovery probability for every block count 0..budget.

    ``dist`` is the incoming deficit distribution; entry ``N`` of the result
    is the chance the window's receptions cover ``k_w`` plus the deficit when
    ``N`` blocks are sent.
    """
    needed = _needed_blocks(k_w + np.arange(dist.size), capacity)
    tail = receive_tail_table(budget, loss)
    rows = np.clip(needed, 0, budget + 1)
    return dist @ tail[np.arange(budget + 1)[None, :], rows[:, None]]


def _validate_inputs(layers: LayerConfig, plan: TransmissionPlan, erasure) -> np.ndarray:
    if plan.num_windows != layers.num_layers:
        raise ValueError("plan must cover every window")
    p = np.asarray(erasure, dtype=float)
    if p.shape != (layers.num_layers,):
        raise ValueError("one erasure probability per window is required")
    if np.any((p < 0.0) | (p > 1.0)):
        raise ValueError("erasure probabilities must lie in [0, 1]")
    return p


def window_decode_probs(
    layers: LayerConfig,
    plan: TransmissionPlan,
    erasure: Sequence[float],
    deficit_rule: str = "own",
) -> np.ndarray:
    """Recovery probability of every window in one dynamic-programming pass."""
    p = _validate_inputs(layers, plan, erasure)
    if deficit_rule not in DEFICIT_RULES:
        raise ValueError(f"unknown deficit rule {deficit_rule!r}")
    k = layers.k
    n = plan.elements_per_tb
    N = plan.tb_counts
    if deficit_rule == "own":
        return _window_probs_own(k, n, N, p)
    return _window_probs_next(k, n, N, p)


def _window_probs_own(k, n, N, p) -> np.ndarray:
    probs = np.zeros(len(k))
    dist = np.ones(1)
    for i in range(len(k)):
        pmf = _receive_pmf(N[i], p[i])
        needed = _needed_blocks(k[i] + np.arange(dist.size), n[i])
        probs[i] = float(dist @ _receive_tail(needed, N[i], p[i]))
        dist = advance_deficit(dist, k[i], n[i], pmf)
    return probs


def _window_probs_next(k, n, N, p) -> np.ndarray:
    # Literal alternative reading: the carried requirement after window i is
    # settled by window (i+1)'s reception count at window i's block size, so
    # the final window's count appears both in the hand-off and in the test.
    L = len(k)
    probs = np.zeros(L)
    needed = _needed_blocks(np.array([k[0]]), n[0])
    probs[0] = float(_receive_tail(needed, N[0], p[0])[0])
    dist = {k[0]: 1.0}  # requirement value -> probability, after window 1
    for i in range(1, L):
        pmf = _receive_pmf(N[i], p[i])
        new: dict[int, float] = {}
        success = 0.0
        for rmin_prev, mass in dist.items():
            for r, weight in enumerate(pmf):
                if weight == 0.0:
                    continue
                rmin = k[i] + max(rmin_prev - r * n[i - 1], 0)
                if r * n[i] >= rmin:
                    success += mass * weight
                new[rmin] = new.get(rmin, 0.0) + mass * weight
        probs[i] = success
        dist = new
    return probs


def window_decode_prob(
    layers: LayerConfig,
    plan: TransmissionPlan,
    erasure: Sequence[float],
    window: int,
    deficit_rule: str = "own",
) -> float:
    """Recovery probability of window ``window`` (1-based)."""
    if not 1 <= window <= layers.num_layers:
        raise ValueError("window index out of range")
    return float(window_decode_probs(layers, plan, erasure, deficit_rule)[window - 1])


def brute_force_decode_prob(
    layers: LayerConfig,
    plan: TransmissionPlan,
    erasure: Sequence[float],
    window: int,
    deficit_rule: str = "own",
) -> float:
    """Literal nested summation over all reception outcomes.

    Independent cross-check for :func:`window_decode_prob`; refuses inputs
    whose outcome space exceeds ``BRUTE_FORCE_LIMIT`` combinations.
    """
    p = _validate_inputs(layers, plan, erasure)
    if not 1 <= window <= layers.num_layers:
        raise ValueError("window index out of range")
    if deficit_rule not in DEFICIT_RULES:
        raise ValueError(f"unknown deficit rule {deficit_rule!r}")
    k = layers.k
    n = plan.elements_per_tb
    N = plan.tb_counts
    combos = math.prod(N[i] + 1 for i in range(window))
    if combos > BRUTE_FORCE_LIMIT:
        raise ValueError(
            f"{combos} reception outcomes exceed the enumeration bound "
            f"{BRUTE_FORCE_LIMIT}"
        )
    pmfs = [_receive_pmf(N[i], p[i]) for i in range(window)]
    total = 0.0
    for r_vec in product(*(range(N[i] + 1) for i in range(window))):
        weight = math.prod(pmfs[i][r_vec[i]] for i in range(window))
        if weight == 0.0:
            continue
        if _recovery_indicator(k, n, r_vec, window, deficit_rule):
            total += weight
    return total


def _recovery_indicator(k, n, r_vec, window, deficit_rule) -> bool:
    if deficit_rule == "own":
        carry = 0
        for i in range(window):
            requirement = k[i] + carry
            if i == window - 1:
                return r_vec[i] * n[i] >= requirement
            carry = max(requirement - r_vec[i] * n[i], 0)
    rmin = k[0]
    for i in range(1, window):
        rmin = k[i] + max(rmin - r_vec[i] * n[i - 1], 0)
    return r_vec[window - 1] * n[window - 1] >= rmin


def qos_indicator(
    layers: LayerConfig,
    plan: TransmissionPlan,
    erasure: Sequence[float],
    q_hat: float,
    level: int,
    deficit_rule: str = "own",
) -> bool:
    """True when some window at or above ``level`` decodes with prob >= q_hat.

    Recovering window ``i`` yields every layer up to ``i``, so QoS level
    ``level`` is met by any window in ``level..L`` clearing the threshold.
    """
    if not 1 <= level <= layers.num_layers:
        raise ValueError("QoS level out of range")
    probs = window_decode_probs(layers, plan, erasure, deficit_rule)
    return bool(np.any(probs[level - 1 :] >= q_hat - _PROB_EPS))


def qos_levels(
    layers: LayerConfig,
    plan: TransmissionPlan,
    erasure: Sequence[float],
    q_hat: float,
    deficit_rule: str = "own",
) -> np.ndarray:
    """Vector of QoS indicators for every level, from one probability pass."""
    probs = window_decode_probs(layers, plan, erasure, deficit_rule)
    hit = probs >= q_hat - _PROB_EPS
    # suffix OR: level l is met if any window >= l clears the threshold
    return np.logical_or.accumulate(hit[::-1])[::-1]


def profit_cost_ratio(delta, tb_counts: Sequence[int]) -> float:
    """Recovered layer count across users divided by total transmitted blocks."""
    total = int(sum(tb_counts))
    if total < 1:
        raise ValueError("profit-cost ratio undefined without transmissions")
    return float(np.count_nonzero(np.asarray(delta, dtype=bool))) / total


def max_psnr_uep(
    layers: LayerConfig,
    plan: TransmissionPlan,
    erasure: Sequence[float],
    deficit_rule: str = "own",
) -> float:
    """Best expected quality: max over levels of plateau times recovery prob."""
    if layers.psnr is None:
        raise ValueError("layer configuration carries no PSNR plateaus")
    probs = window_decode_probs(layers, plan, erasure, deficit_rule)
    return float(np.max(np.asarray(layers.psnr) * probs))


def max_psnr_mrt(
    layers: LayerConfig,
    plan: TransmissionPlan,
    erasure: Sequence[float],
) -> float:
    """Quality metric of the uncoded multi-rate baseline.

    Without coding, level ``l`` requires every block of layers ``1..l`` to
    arrive: ceil(k_i / n_i) blocks per layer, each surviving independently.
    """
    if layers.psnr is None:
        raise ValueError("layer configuration carries no PSNR plateaus")
    p = _validate_inputs(layers, plan, erasure)
    survive = 1.0
    best = 0.0
    for i in range(layers.num_layers):
        n = plan.elements_per_tb[i]
        if n < 1:
            survive = 0.0
        else:
            blocks = -(-layers.k[i] // n)
            survive *= (1.0 - p[i]) ** blocks
        best = max(best, layers.psnr[i] * survive)
    return best
