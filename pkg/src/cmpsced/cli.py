"""Command-line surface: simulate, compare, grid-search, certify.

Costs print with two decimals on the console; CSV files keep full precision
so re-runs are byte-identical. CMP_SCED_LOG=debug|info turns on the
iteration traces of the underlying solvers.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .dca import DcaConfig, LMP_FINAL_SUBPROBLEM, LMP_RESOLVE, dca_solve, exact_cmp_objective
from .horizon import (MODE_CMP, MODE_STRICT, SimulationError, initial_state,
                      simulate, write_lmp_csv, write_period_csv)
from .network import Case, CaseError, load_case, scale_loads
from .oracle import OracleBudgetError, oracle_solve
from .formulation import observe

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

GRID_CSV_COLUMNS = ["epsilon", "gamma_l", "gamma_s", "total_cost",
                    "total_shed_mwh", "avg_normal", "avg_lte", "avg_ste", "status"]
COMPARE_CSV_COLUMNS = ["scenario", "cmp_total_cost", "strict_total_cost",
                       "cmp_shed_mwh", "strict_shed_mwh",
                       "cmp_avg_normal", "cmp_avg_lte", "cmp_avg_ste",
                       "strict_avg_normal", "strict_avg_lte", "strict_avg_ste"]


@dataclass
class GridSearchSpec:
    epsilons: list[float]
    gamma_ls: list[float]
    gamma_ss: list[float]

    def __post_init__(self):
        for name, values in (("epsilons", self.epsilons),
                             ("gamma_ls", self.gamma_ls),
                             ("gamma_ss", self.gamma_ss)):
            if not values:
                raise ValueError(f"{name} must be non-empty")
            if any(v <= 0 for v in values):
                raise ValueError(f"{name} must be positive")

    @classmethod
    def default(cls) -> "GridSearchSpec":
        # five powers of 10 from 1e-4 to 1e0; gammas 0.1 .. 1.0 step 0.1
        return cls(epsilons=[10.0 ** k for k in range(-4, 1)],
                   gamma_ls=[round(0.1 * k, 1) for k in range(1, 11)],
                   gamma_ss=[round(0.1 * k, 1) for k in range(1, 11)])


def _parse_float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--case", required=True, help="case file path")
    parser.add_argument("--epsilon", type=float, default=0.1)
    parser.add_argument("--gamma-l", type=float, default=0.5)
    parser.add_argument("--gamma-s", type=float, default=0.5)
    parser.add_argument("--prox", type=float, default=1e-3)
    parser.add_argument("--tol-obj", type=float, default=1e-6)
    parser.add_argument("--tol-x", type=float, default=1e-4)
    parser.add_argument("--max-iters", type=int, default=50)
    parser.add_argument("--load-scale", type=float, default=1.0)
    parser.add_argument("--dt", type=float, default=None,
                        help="override the case period length (hours)")
    parser.add_argument("--lmp-source", choices=[LMP_FINAL_SUBPROBLEM, LMP_RESOLVE],
                        default=LMP_FINAL_SUBPROBLEM)
    parser.add_argument("--out", default=".", help="directory for CSV artifacts")
    parser.add_argument("--jobs", type=int, default=os.cpu_count() or 1)


def _load(args) -> Case:
    case = load_case(args.case)
    if args.dt is not None:
        if not args.dt > 0:
            raise CaseError(f"--dt must be > 0, got {args.dt}")
        case = replace(case, dt=args.dt)
    return case


def _config(args) -> DcaConfig:
    return DcaConfig(epsilon=args.epsilon, gamma_l=args.gamma_l,
                     gamma_s=args.gamma_s, prox_c=args.prox,
                     tol_obj=args.tol_obj, tol_x=args.tol_x,
                     max_iters=args.max_iters)


def _zone_str(normal: float, lte: float, ste: float) -> str:
    return f"{normal:.3f} / {lte:.3f} / {ste:.3f}"


def cmd_run(args) -> int:
    case = _load(args)
    cfg = _config(args)
    reports, summary = simulate(case, args.mode, cfg, load_scale=args.load_scale,
                                lmp_source=args.lmp_source)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_period_csv(reports, out / "periods.csv")
    write_lmp_csv(reports, case, out / "lmps.csv")
    print(f"mode={summary.mode} periods={summary.periods} "
          f"total_cost={summary.total_cost:.2f} "
          f"total_shed_mwh={summary.total_shed_energy:.2f} "
          f"zones={_zone_str(summary.avg_normal, summary.avg_lte, summary.avg_ste)}")
    return EXIT_OK


def cmd_compare(args) -> int:
    case = _load(args)
    cfg = _config(args)
    _, cmp_sum = simulate(case, MODE_CMP, cfg, load_scale=args.load_scale,
                          lmp_source=args.lmp_source)
    _, strict_sum = simulate(case, MODE_STRICT, cfg, load_scale=args.load_scale)
    scenario = f"{Path(args.case).stem}@x{args.load_scale:g}"
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "compare.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COMPARE_CSV_COLUMNS)
        writer.writerow([scenario,
                         repr(cmp_sum.total_cost), repr(strict_sum.total_cost),
                         repr(cmp_sum.total_shed_energy),
                         repr(strict_sum.total_shed_energy),
                         repr(cmp_sum.avg_normal), repr(cmp_sum.avg_lte),
                         repr(cmp_sum.avg_ste),
                         repr(strict_sum.avg_normal), repr(strict_sum.avg_lte),
                         repr(strict_sum.avg_ste)])
    print(f"{'scenario':<24} {'cost cmp':>14} {'cost strict':>14} "
          f"{'shed cmp':>10} {'shed strict':>12}  zones cmp | zones strict")
    print(f"{scenario:<24} {cmp_sum.total_cost:>14.2f} {strict_sum.total_cost:>14.2f} "
          f"{cmp_sum.total_shed_energy:>10.2f} {strict_sum.total_shed_energy:>12.2f}  "
          f"{_zone_str(cmp_sum.avg_normal, cmp_sum.avg_lte, cmp_sum.avg_ste)} | "
          f"{_zone_str(strict_sum.avg_normal, strict_sum.avg_lte, strict_sum.avg_ste)}")
    return EXIT_OK


def _grid_cell(case: Case, eps: float, gl: float, gs: float, base: DcaConfig,
               load_scale: float, lmp_source: str) -> dict:
    row = {"epsilon": eps, "gamma_l": gl, "gamma_s": gs}
    try:
        cfg = replace(base, epsilon=eps, gamma_l=gl, gamma_s=gs)
        reports, summary = simulate(case, MODE_CMP, cfg, load_scale=load_scale,
                                    lmp_source=lmp_source)
        row.update(total_cost=summary.total_cost,
                   total_shed_mwh=summary.total_shed_energy,
                   avg_normal=summary.avg_normal, avg_lte=summary.avg_lte,
                   avg_ste=summary.avg_ste, status="ok",
                   normal_line_periods=sum(r.lines_normal for r in reports))
    except (SimulationError, CaseError, ValueError) as exc:
        row.update(total_cost=float("nan"), total_shed_mwh=float("nan"),
                   avg_normal=float("nan"), avg_lte=float("nan"),
                   avg_ste=float("nan"), status=f"error: {exc}",
                   normal_line_periods=float("nan"))
    return row


def run_grid_search(case: Case, spec: GridSearchSpec, base: DcaConfig,
                    load_scale: float = 1.0,
                    lmp_source: str = LMP_FINAL_SUBPROBLEM,
                    jobs: int = 1) -> list[dict]:
    """Evaluate every combination; rows sorted by total cost, failures last."""
    combos = [(eps, gl, gs) for eps in spec.epsilons
              for gl in spec.gamma_ls for gs in spec.gamma_ss]
    if jobs > 1 and len(combos) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(
                _grid_cell,
                *zip(*((case, eps, gl, gs, base, load_scale, lmp_source)
                       for eps, gl, gs in combos))))
    else:
        rows = [_grid_cell(case, eps, gl, gs, base, load_scale, lmp_source)
                for eps, gl, gs in combos]
    rows.sort(key=lambda r: (r["status"] != "ok",
                             r["total_cost"] if r["status"] == "ok" else 0.0,
                             r["epsilon"], r["gamma_l"], r["gamma_s"]))
    return rows


def cmd_grid_search(args) -> int:
    case = _load(args)
    base = _config(args)
    spec = GridSearchSpec.default()
    if args.epsilons:
        spec = replace(spec, epsilons=_parse_float_list(args.epsilons))
    if args.gamma_l_grid:
        spec = replace(spec, gamma_ls=_parse_float_list(args.gamma_l_grid))
    if args.gamma_s_grid:
        spec = replace(spec, gamma_ss=_parse_float_list(args.gamma_s_grid))

    rows = run_grid_search(case, spec, base, load_scale=args.load_scale,
                           lmp_source=args.lmp_source, jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "grid_search.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(GRID_CSV_COLUMNS)
        for row in rows:
            writer.writerow([repr(row["epsilon"]), repr(row["gamma_l"]),
                             repr(row["gamma_s"]), repr(row["total_cost"]),
                             repr(row["total_shed_mwh"]), repr(row["avg_normal"]),
                             repr(row["avg_lte"]), repr(row["avg_ste"]),
                             row["status"]])
    ok = [r for r in rows if r["status"] == "ok"]
    print(f"grid: {len(rows)} combinations, {len(ok)} ok; best rows first in "
          f"{out / 'grid_search.csv'}")
    if ok:
        eps_lo, eps_hi = min(spec.epsilons), max(spec.epsilons)
        lo = [r for r in ok if r["epsilon"] == eps_lo]
        hi = [r for r in ok if r["epsilon"] == eps_hi]
        if lo and hi:
            cost_lo = sum(r["total_cost"] for r in lo) / len(lo)
            cost_hi = sum(r["total_cost"] for r in hi) / len(hi)
            norm_lo = sum(r["normal_line_periods"] for r in lo) / len(lo)
            norm_hi = sum(r["normal_line_periods"] for r in hi) / len(hi)
            holds = cost_lo >= cost_hi and norm_lo >= norm_hi
            print(f"tradeoff eps={eps_lo:g}: cost={cost_lo:.2f} "
                  f"normal-line-periods={norm_lo:.2f} | eps={eps_hi:g}: "
                  f"cost={cost_hi:.2f} normal-line-periods={norm_hi:.2f} "
                  f"(smaller eps keeps more lines normal at higher cost: "
                  f"{'observed' if holds else 'not observed'})")
    return EXIT_OK


def cmd_oracle(args) -> int:
    case = _load(args)
    if args.load_scale != 1.0:
        case = scale_loads(case, args.load_scale)
    cfg = _config(args)
    obs = observe(case, args.period)
    state = initial_state(case)
    res = oracle_solve(case, args.period, obs, state, cfg)
    dca = dca_solve(case, args.period, obs, state, cfg)
    if dca.dispatch is None:
        print(f"dca failed: {dca.error}", file=sys.stderr)
        return EXIT_RUNTIME
    dca_obj = exact_cmp_objective(dca.dispatch, obs, case, cfg)
    gap = (dca_obj - res.objective) / max(1.0, abs(res.objective))
    print(f"oracle_objective={res.objective:.6f} dca_objective={dca_obj:.6f} "
          f"relative_gap={gap:.3e} assignments_evaluated={res.evaluated} "
          f"infeasible={res.infeasible_assignments}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmpsced",
        description="Economic dispatch with emergency-zone cardinality penalties")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate one mode over the horizon")
    _add_common(p_run)
    p_run.add_argument("--mode", choices=[MODE_CMP, MODE_STRICT], default=MODE_CMP)
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="run both modes and tabulate")
    _add_common(p_cmp)
    p_cmp.set_defaults(func=cmd_compare)

    p_grid = sub.add_parser("grid-search", help="hyperparameter sweep")
    _add_common(p_grid)
    p_grid.add_argument("--epsilons", default=None,
                        help="comma-separated override of the epsilon grid")
    p_grid.add_argument("--gamma-l-grid", default=None)
    p_grid.add_argument("--gamma-s-grid", default=None)
    p_grid.set_defaults(func=cmd_grid_search)

    p_oracle = sub.add_parser("oracle", help="certify a period against enumeration")
    _add_common(p_oracle)
    p_oracle.add_argument("--period", type=int, default=0)
    p_oracle.set_defaults(func=cmd_oracle)
    return parser


def main(argv: list[str] | None = None) -> int:
    level = {"debug": logging.DEBUG, "info": logging.INFO}.get(
        os.environ.get("CMP_SCED_LOG", "").lower())
    if level is not None:
        logging.basicConfig(level=level,
                            format="%(asctime)s %(name)s %(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CaseError, OracleBudgetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SimulationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
