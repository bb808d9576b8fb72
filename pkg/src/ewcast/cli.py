"""Experiment runner: model validation, allocation sweeps, coverage maps.

Each experiment produces an :class:`ExperimentResult` whose rows are plain
tuples sorted by the independent variable; ``write_csv`` emits a headered
UTF-8 CSV with ``# key=value`` provenance lines (scenario digest and seeds)
so re-runs with identical inputs are byte-identical.  Plots are not rendered
here - the output is plot-ready data.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .allocators import (
    AllocationSolution,
    check_feasibility,
    direct_uep_ram,
    heuristic_uep_ram,
    solve_mrt,
)
from .channel import Scenario, build_scenario, erasure_prob
from .decode_prob import (
    LayerConfig,
    TransmissionPlan,
    max_psnr_mrt,
    max_psnr_uep,
    window_decode_probs,
)
from .gf_rlnc import simulate_decode_prob

# Validation sweep defaults: three nested windows of 10/50/100 elements.
VALIDATION_LAYERS = (10, 40, 50)
VALIDATION_CAPACITIES = (2, 5)
VALIDATION_LOSSES = (0.1, 0.4)

# Desk-scale default scenarios.  The radial line and the grid both extend to
# the edge of the lowest table-backed MCS, and the evaluation-view error curve
# uses a fading-averaged 5 dB/decade slope so the uncoded baseline pays a
# realistic reliability price; the allocators only ever see the reported MCS,
# so these choices affect evaluation, not the plans.
DEFAULT_SC_CONFIG = {
    "mode": "SC",
    "stream_preset": "A",
    "n_rbp": 5,
    "users": {"pattern": "radial", "count": 80, "step_m": 2.5, "start_m": 90.0},
    "bler": {"decade_db": 5.0},
    "seed": 1,
}

DEFAULT_SFN_CONFIG = {
    "mode": "SFN",
    "stream_preset": "B",
    "n_rbp": 1,
    "users": {"pattern": "grid", "count": 441, "step_m": 38.0},
    "bler": {"decade_db": 5.0},
    "seed": 1,
}


@dataclass
class ExperimentResult:
    """Rows plus enough provenance to reproduce them exactly."""

    experiment: str
    digest: str
    seeds: dict[str, int]
    columns: list[str]
    rows: list[tuple]
    runtime_s: float = 0.0
    meta: dict = field(default_factory=dict)

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            fh.write(f"# experiment={self.experiment}\n")
            fh.write(f"# digest={self.digest}\n")
            for key in sorted(self.seeds):
                fh.write(f"# seed.{key}={self.seeds[key]}\n")
            for key in sorted(self.meta):
                fh.write(f"# {key}={self.meta[key]}\n")
            writer = csv.writer(fh)
            writer.writerow(self.columns)
            writer.writerows(self.rows)
        return path


def _config_digest(payload) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _point_seed(base: int, *indices: int) -> int:
    return int(np.random.SeedSequence([base, *indices]).generate_state(1)[0])


def run_validate_approx(
    trials: int = 100_000,
    seed: int = 0,
    capacities=VALIDATION_CAPACITIES,
    losses=VALIDATION_LOSSES,
    layer_elements=VALIDATION_LAYERS,
    t_max: int | None = None,
    method: str = "rank-chain",
    deficit_rule: str = "own",
) -> ExperimentResult:
    """Sweep the block count and compare analytic vs Monte Carlo recovery.

    For every (capacity, loss) pair all windows get ``t`` blocks, ``t`` swept
    until the deepest window saturates (or to ``t_max``); the emitted rows
    hold the analytic value, the simulated value with its standard error, and
    the absolute gap.
    """
    if trials < 10_000:
        warnings.warn("fewer than 1e4 trials gives wide confidence bands", stacklevel=2)
    start = time.perf_counter()
    layers = LayerConfig(layer_elements)
    L = layers.num_layers
    rows = []
    for ci, cap in enumerate(capacities):
        for pi, loss in enumerate(losses):
            limit = t_max if t_max is not None else _saturation_t(layers, cap, loss, deficit_rule)
            for t in range(1, limit + 1):
                plan = TransmissionPlan.uniform(L, t, cap)
                analytic = window_decode_probs(layers, plan, [loss] * L, deficit_rule)
                sim = simulate_decode_prob(
                    layers, plan, [loss] * L, trials,
                    _point_seed(seed, ci, pi, t), method=method,
                )
                for w in range(L):
                    rows.append((
                        cap, loss, t, w + 1,
                        float(analytic[w]), sim.p_win[w], sim.std_err[w],
                        abs(float(analytic[w]) - sim.p_win[w]),
                    ))
    rows.sort(key=lambda r: (r[0], r[1], r[2], r[3]))
    config = {
        "layer_elements": list(layer_elements), "capacities": list(capacities),
        "losses": list(losses), "trials": trials, "t_max": t_max,
        "method": method, "deficit_rule": deficit_rule,
    }
    return ExperimentResult(
        experiment="validate-approx",
        digest=_config_digest(config),
        seeds={"base": seed},
        columns=["elements_per_tb", "loss", "tb_count", "window",
                 "analytic", "simulated", "std_err", "abs_gap"],
        rows=rows,
        runtime_s=time.perf_counter() - start,
        meta={"trials": trials, "method": method},
    )


def _saturation_t(layers: LayerConfig, cap: int, loss: float, deficit_rule: str,
                  tail: float = 1e-4, margin: int = 3, hard_cap: int = 400) -> int:
    L = layers.num_layers
    for t in range(1, hard_cap + 1):
        plan = TransmissionPlan.uniform(L, t, cap)
        probs = window_decode_probs(layers, plan, [loss] * L, deficit_rule)
        if probs[-1] >= 1.0 - tail:
            return min(t + margin, hard_cap)
    return hard_cap


def run_rbp_sweep(
    config: dict,
    rbp_values=(1, 2, 3, 4, 5),
    direct: str = "exhaustive",
    seed: int = 0,
    budget: int = 2_000_000,
) -> ExperimentResult:
    """Solve the allocation at several block sizes and compare the solvers.

    Infeasible points are emitted with their feasibility flags down and NaN
    ratios rather than being dropped.
    """
    start = time.perf_counter()
    rows = []
    for rbp in sorted(rbp_values):
        cfg = dict(config)
        cfg["n_rbp"] = int(rbp)
        scenario = build_scenario(cfg)
        heur = heuristic_uep_ram(scenario)
        tau_h = heur.tau if heur.feasible else float("nan")
        if direct == "off":
            rows.append((rbp, int(heur.feasible), tau_h, heur.cost,
                         "", "", "", ""))
            continue
        method = direct if direct in ("exhaustive", "genetic") else "auto"
        ref = direct_uep_ram(scenario, budget=budget, method=method, seed=seed)
        tau_d = ref.tau if ref.feasible else float("nan")
        gap = ((tau_d - tau_h) / tau_d
               if heur.feasible and ref.feasible and tau_d > 0 else float("nan"))
        rows.append((rbp, int(heur.feasible), tau_h, heur.cost,
                     int(ref.feasible), tau_d, ref.cost, gap))
    return ExperimentResult(
        experiment="sweep-rbp",
        digest=_config_digest({"config": config, "rbp_values": list(rbp_values),
                               "direct": direct, "budget": budget}),
        seeds={"base": seed},
        columns=["n_rbp", "heuristic_feasible", "tau_heuristic", "cost_heuristic",
                 "direct_feasible", "tau_direct", "cost_direct", "relative_gap"],
        rows=rows,
        runtime_s=time.perf_counter() - start,
        meta={"direct": direct},
    )


def _user_losses(scenario: Scenario, plan: TransmissionPlan, user, view: str):
    return [
        erasure_prob(user, plan.mcs[i], view, scenario.p_hat,
                     scenario.bler_decade_db, scenario.mcs_thresholds)
        if plan.tb_counts[i] > 0 else 1.0
        for i in range(plan.num_windows)
    ]


def _uep_level_probs(scenario: Scenario, plan: TransmissionPlan, user, view: str) -> np.ndarray:
    """Per-level recovery probability: best window at or above each level."""
    probs = window_decode_probs(scenario.layers, plan,
                                _user_losses(scenario, plan, user, view))
    return np.maximum.accumulate(probs[::-1])[::-1]


def _mrt_level_probs(scenario: Scenario, plan: TransmissionPlan, user, view: str) -> np.ndarray:
    """Uncoded delivery: every block of the first l layers must arrive."""
    layers = scenario.layers
    out = np.zeros(layers.num_layers)
    survive = 1.0
    for i in range(layers.num_layers):
        loss = erasure_prob(user, plan.mcs[i], view, scenario.p_hat,
                            scenario.bler_decade_db, scenario.mcs_thresholds)
        survive *= (1.0 - loss) ** plan.tb_counts[i]
        out[i] = survive
    return out


def _coverage_radius(distances, covered) -> float:
    radius = 0.0
    for d, ok in zip(distances, covered):
        if not ok:
            break
        radius = d
    return radius


def run_coverage_sc(
    config: dict | None = None,
    erasure_view: str = "evaluation",
    seed: int = 0,
    budget: int = 2_000_000,
) -> ExperimentResult:
    """Radial coverage curves for the coded allocation and the baseline.

    Users sit on a line through the serving cell; for every user and level
    the result holds both strategies' recovery probability under the chosen
    erasure view, and the meta block carries per-level coverage fractions and
    radii at the scenario's QoS threshold.
    """
    start = time.perf_counter()
    cfg = dict(DEFAULT_SC_CONFIG if config is None else config)
    scenario = build_scenario(cfg)
    columns = ["distance_m", "mcs_feedback", "level",
               "p_uep", "p_mrt", "covered_uep", "covered_mrt"]
    if not scenario.users:
        return ExperimentResult(
            experiment="coverage-sc", digest=scenario.digest(),
            seeds={"base": seed, "scenario": scenario.seed},
            columns=columns, rows=[],
            runtime_s=time.perf_counter() - start,
            meta={"erasure_view": erasure_view, "uep_feasible": 0},
        )
    heur = heuristic_uep_ram(scenario)
    mrt = solve_mrt(scenario)
    L = scenario.layers.num_layers
    origin = scenario.layout.sites[scenario.layout.serving[0]]
    order = sorted(
        range(len(scenario.users)),
        key=lambda i: float(np.hypot(*(np.asarray(scenario.users[i].position) - origin))),
    )
    rows = []
    covered_uep = np.zeros((len(order), L), dtype=bool)
    covered_mrt = np.zeros((len(order), L), dtype=bool)
    distances = []
    for row_idx, ui in enumerate(order):
        user = scenario.users[ui]
        dist = float(np.hypot(*(np.asarray(user.position) - origin)))
        distances.append(dist)
        p_uep = (_uep_level_probs(scenario, heur.plan, user, erasure_view)
                 if heur.feasible else np.zeros(L))
        p_mrt = _mrt_level_probs(scenario, mrt.plan, user, erasure_view)
        covered_uep[row_idx] = p_uep >= scenario.q_hat - 1e-12
        covered_mrt[row_idx] = p_mrt >= scenario.q_hat - 1e-12
        for lv in range(L):
            rows.append((
                round(dist, 6), user.mcs_feedback, lv + 1,
                float(p_uep[lv]), float(p_mrt[lv]),
                int(covered_uep[row_idx, lv]), int(covered_mrt[row_idx, lv]),
            ))
    meta = {
        "erasure_view": erasure_view,
        "uep_feasible": int(heur.feasible),
        "uep_plan_mcs": list(heur.plan.mcs),
        "uep_plan_tb": list(heur.plan.tb_counts),
        "mrt_plan_mcs": list(mrt.plan.mcs),
        "mrt_plan_tb": list(mrt.plan.tb_counts),
    }
    for lv in range(L):
        meta[f"uep_fraction_l{lv + 1}"] = round(float(covered_uep[:, lv].mean()), 6) if order else 0.0
        meta[f"mrt_fraction_l{lv + 1}"] = round(float(covered_mrt[:, lv].mean()), 6) if order else 0.0
        meta[f"uep_radius_l{lv + 1}"] = _coverage_radius(distances, covered_uep[:, lv])
        meta[f"mrt_radius_l{lv + 1}"] = _coverage_radius(distances, covered_mrt[:, lv])
    return ExperimentResult(
        experiment="coverage-sc",
        digest=scenario.digest(),
        seeds={"base": seed, "scenario": scenario.seed},
        columns=columns,
        rows=rows,
        runtime_s=time.perf_counter() - start,
        meta=meta,
    )


def run_psnr_map_sfn(
    config: dict | None = None,
    erasure_view: str = "evaluation",
    seed: int = 0,
) -> ExperimentResult:
    """Grid map of the best expected quality over the synchronised-cell area.

    Emits one row per grid point with both strategies' quality metric, and
    per-level recovery fractions at the QoS threshold in the meta block.
    """
    start = time.perf_counter()
    cfg = dict(DEFAULT_SFN_CONFIG if config is None else config)
    scenario = build_scenario(cfg)
    heur = heuristic_uep_ram(scenario)
    mrt = solve_mrt(scenario)
    L = scenario.layers.num_layers
    rows = []
    frac_uep = np.zeros(L)
    frac_mrt = np.zeros(L)
    for user in scenario.users:
        losses_uep = _user_losses(scenario, heur.plan, user, erasure_view)
        psnr_uep = (max_psnr_uep(scenario.layers, heur.plan, losses_uep)
                    if heur.feasible else 0.0)
        losses_mrt = _user_losses(scenario, mrt.plan, user, erasure_view)
        psnr_mrt = max_psnr_mrt(scenario.layers, mrt.plan, losses_mrt)
        p_uep = (_uep_level_probs(scenario, heur.plan, user, erasure_view)
                 if heur.feasible else np.zeros(L))
        p_mrt = _mrt_level_probs(scenario, mrt.plan, user, erasure_view)
        frac_uep += p_uep >= scenario.q_hat - 1e-12
        frac_mrt += p_mrt >= scenario.q_hat - 1e-12
        rows.append((
            round(user.position[0], 6), round(user.position[1], 6),
            round(user.sinr_db, 6), float(psnr_uep), float(psnr_mrt),
        ))
    rows.sort(key=lambda r: (r[1], r[0]))
    count = max(len(scenario.users), 1)
    meta = {
        "erasure_view": erasure_view,
        "uep_feasible": int(heur.feasible),
        "uep_plan_mcs": list(heur.plan.mcs),
        "uep_plan_tb": list(heur.plan.tb_counts),
        "mrt_plan_mcs": list(mrt.plan.mcs),
        "mrt_plan_tb": list(mrt.plan.tb_counts),
    }
    for lv in range(L):
        meta[f"uep_fraction_l{lv + 1}"] = round(float(frac_uep[lv]) / count, 6)
        meta[f"mrt_fraction_l{lv + 1}"] = round(float(frac_mrt[lv]) / count, 6)
    return ExperimentResult(
        experiment="psnr-map-sfn",
        digest=scenario.digest(),
        seeds={"base": seed, "scenario": scenario.seed},
        columns=["x_m", "y_m", "sinr_db", "psnr_uep", "psnr_mrt"],
        rows=rows,
        runtime_s=time.perf_counter() - start,
        meta=meta,
    )


def run_solve(
    config: dict,
    direct: str = "off",
    seed: int = 0,
    budget: int = 2_000_000,
) -> tuple[Scenario, dict[str, AllocationSolution]]:
    """Single-scenario debug solve: heuristic, optional reference, baseline."""
    scenario = build_scenario(dict(config))
    solutions = {"heuristic": heuristic_uep_ram(scenario)}
    if direct != "off":
        solutions["direct"] = direct_uep_ram(scenario, budget=budget,
                                             method=direct, seed=seed)
    solutions["mrt"] = solve_mrt(scenario)
    return scenario, solutions


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are errors, not "infeasible"
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="ewcast", description="Layered coded multicast experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario_default=None):
        p.add_argument("--scenario", type=Path, default=scenario_default,
                       help="scenario config JSON (see README for the schema)")
        p.add_argument("--out", type=Path, default=Path("results"),
                       help="output directory for CSV files")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("validate-approx", help="analytic model vs Monte Carlo")
    common(p)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--t-max", type=int, default=None)
    p.add_argument("--mc-method", choices=("rank-chain", "matrix"), default="rank-chain")

    p = sub.add_parser("sweep-rbp", help="profit-cost ratio vs resource-block pairs")
    common(p)
    p.add_argument("--rbp", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    p.add_argument("--direct", choices=("off", "exhaustive", "genetic"),
                   default="exhaustive")
    p.add_argument("--budget", type=int, default=2_000_000)

    p = sub.add_parser("coverage-sc", help="radial coverage curves, single cell")
    common(p)
    p.add_argument("--erasure-view", choices=("allocator", "evaluation"),
                   default="evaluation")

    p = sub.add_parser("psnr-map-sfn", help="quality map over the synchronised area")
    common(p)
    p.add_argument("--erasure-view", choices=("allocator", "evaluation"),
                   default="evaluation")

    p = sub.add_parser("solve", help="solve one scenario and print the plans")
    common(p)
    p.add_argument("--direct", choices=("off", "exhaustive", "genetic"), default="off")
    p.add_argument("--budget", type=int, default=2_000_000)
    return parser


def _load_config(path: Path | None, fallback: dict) -> dict:
    if path is None:
        return dict(fallback)
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    if args.command == "validate-approx":
        result = run_validate_approx(trials=args.trials, seed=args.seed,
                                     t_max=args.t_max, method=args.mc_method)
        path = result.write_csv(args.out / "validate_approx.csv")
        print(f"wrote {path} ({len(result.rows)} rows, {result.runtime_s:.1f}s)")
        return 0

    if args.command == "sweep-rbp":
        config = _load_config(args.scenario, DEFAULT_SC_CONFIG)
        result = run_rbp_sweep(config, rbp_values=args.rbp, direct=args.direct,
                               seed=args.seed, budget=args.budget)
        path = result.write_csv(args.out / "sweep_rbp.csv")
        print(f"wrote {path} ({len(result.rows)} rows, {result.runtime_s:.1f}s)")
        feasible = all(row[1] for row in result.rows)
        return 0 if feasible else 2

    if args.command == "coverage-sc":
        config = _load_config(args.scenario, DEFAULT_SC_CONFIG)
        result = run_coverage_sc(config, erasure_view=args.erasure_view,
                                 seed=args.seed)
        path = result.write_csv(args.out / "coverage_sc.csv")
        print(f"wrote {path} ({len(result.rows)} rows, {result.runtime_s:.1f}s)")
        return 0 if result.meta.get("uep_feasible") else 2

    if args.command == "psnr-map-sfn":
        config = _load_config(args.scenario, DEFAULT_SFN_CONFIG)
        result = run_psnr_map_sfn(config, erasure_view=args.erasure_view,
                                  seed=args.seed)
        path = result.write_csv(args.out / "psnr_map_sfn.csv")
        print(f"wrote {path} ({len(result.rows)} rows, {result.runtime_s:.1f}s)")
        return 0 if result.meta.get("uep_feasible") else 2

    if args.command == "solve":
        config = _load_config(args.scenario, DEFAULT_SC_CONFIG)
        scenario, solutions = run_solve(config, direct=args.direct,
                                        seed=args.seed, budget=args.budget)
        print(f"scenario digest={scenario.digest()} users={len(scenario.users)} "
              f"budget={scenario.tb_budget}")
        for name, sol in solutions.items():
            report = check_feasibility(sol, scenario)
            print(f"{name}: feasible={sol.feasible} tau={sol.tau:.4f} "
                  f"mcs={sol.plan.mcs} tb={sol.plan.tb_counts} "
                  f"fractions={[round(f, 3) for f in report.layer_fractions]}")
        return 0 if solutions["heuristic"].feasible else 2

    raise ValueError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
