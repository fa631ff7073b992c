"""Rolling-horizon simulation with emergency-duration accounting.

Each period is re-optimized on its own (myopic dispatch) while the state
carries the coupling forward: previous generation for ramp limits, previous
flows, and the per-line counters of consecutive periods spent above the
normal and LTE ratings. Counters feed the duration-derived flow caps and
are updated from the accepted period optimum.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

from . import qp
from .dca import (CONVERGED, DcaConfig, ZONE_TOLERANCE, dca_solve,
                  exact_zone_sets, LMP_FINAL_SUBPROBLEM)
from .formulation import (Dispatch, extract_dispatch, observe, operating_cost,
                          shed_energy, strict_model)
from .network import Case, scale_loads

log = logging.getLogger("cmpsced.horizon")

MODE_CMP = "cmp"
MODE_STRICT = "strict"

PERIOD_CSV_COLUMNS = [
    "period", "operating_cost", "generation_cost", "curtailment_penalty",
    "shed_penalty", "shed_energy_mwh", "lines_normal", "lines_lte", "lines_ste",
    "dca_iterations", "status",
]


class SimulationError(RuntimeError):
    """A period could not be dispatched; carries the failing period index."""

    def __init__(self, period: int, message: str):
        super().__init__(f"period {period}: {message}")
        self.period = period


@dataclass
class DispatchState:
    prev_gen: dict[str, float]   # MW per conventional generator
    prev_flow: dict[str, float]  # MW per line
    tau_l: dict[str, int]        # periods since entering the LTE zone
    tau_s: dict[str, int]        # periods since entering the STE zone


@dataclass
class PeriodReport:
    period: int
    operating_cost: float
    generation_cost: float
    curtailment_penalty: float
    shed_penalty: float
    shed_energy: float               # MWh
    lines_normal: int
    lines_lte: int
    lines_ste: int
    lmps: dict[str, float]           # $/MWh per bus
    flows: dict[str, float]          # MW per line (kept for trace checks)
    dca_iterations: int
    status: str


@dataclass
class SimulationSummary:
    mode: str
    periods: int
    total_cost: float
    total_shed_energy: float
    avg_normal: float
    avg_lte: float
    avg_ste: float


def update_tau(state: DispatchState, flows: dict[str, float], case: Case,
               gen: dict[str, float] | None = None) -> DispatchState:
    """Advance the state with an accepted period optimum.

    Counters reset when the flow is back inside the relevant rating and
    saturate at the duration limits; previous generation and flows are
    replaced by the optimum (generation only when provided).
    """
    tau_l, tau_s = {}, {}
    for ln in case.lines:
        mag = abs(flows[ln.id])
        if mag <= ln.zeta_n + ZONE_TOLERANCE:
            tau_l[ln.id] = 0
        else:
            tau_l[ln.id] = min(state.tau_l.get(ln.id, 0) + 1, case.t_l)
        if mag <= ln.zeta_l + ZONE_TOLERANCE:
            tau_s[ln.id] = 0
        else:
            tau_s[ln.id] = min(state.tau_s.get(ln.id, 0) + 1, case.t_s)
    return DispatchState(
        prev_gen=dict(gen) if gen is not None else dict(state.prev_gen),
        prev_flow=dict(flows), tau_l=tau_l, tau_s=tau_s)


def initial_state(case: Case) -> DispatchState:
    """Penalty-free strict dispatch at t=0, no ramping, zero counters."""
    prog, vmap = strict_model(case, 0, observe(case, 0), prev_gen=None)
    sol = qp.solve(prog)
    if sol.status != qp.OPTIMAL:
        raise SimulationError(0, f"initial strict dispatch failed: {sol.status}")
    dispatch = extract_dispatch(sol.x, vmap)
    return DispatchState(prev_gen=dict(dispatch.gen), prev_flow=dict(dispatch.flow),
                         tau_l={ln.id: 0 for ln in case.lines},
                         tau_s={ln.id: 0 for ln in case.lines})


def _zone_counts(flows: dict[str, float], case: Case) -> tuple[int, int, int]:
    e_l, e_s = exact_zone_sets(flows, case, tol=ZONE_TOLERANCE)
    n_lines = len(case.lines)
    return n_lines - len(e_l), len(e_l) - len(e_s), len(e_s)


def _report(t: int, dispatch: Dispatch, obs, case: Case,
            lmps: dict[str, float], iterations: int, status: str) -> PeriodReport:
    cost = operating_cost(dispatch, obs, case)
    normal, lte, ste = _zone_counts(dispatch.flow, case)
    return PeriodReport(
        period=t, operating_cost=cost.total, generation_cost=cost.generation,
        curtailment_penalty=cost.curtailment, shed_penalty=cost.shedding,
        shed_energy=shed_energy(dispatch, obs, case),
        lines_normal=normal, lines_lte=lte, lines_ste=ste,
        lmps=dict(lmps), flows=dict(dispatch.flow),
        dca_iterations=iterations, status=status)


def simulate(case: Case, mode: str, cfg: DcaConfig | None = None,
             load_scale: float = 1.0, lmp_source: str = LMP_FINAL_SUBPROBLEM,
             ) -> tuple[list[PeriodReport], SimulationSummary]:
    """Dispatch every period of the horizon and accumulate reports.

    ``mode`` is "cmp" (zone penalties with duration-limited caps) or
    "strict" (every line confined to its normal rating; cfg is ignored).
    Raises SimulationError if any period cannot be dispatched.
    """
    if mode not in (MODE_CMP, MODE_STRICT):
        raise ValueError(f"unknown mode {mode!r}")
    if cfg is None:
        cfg = DcaConfig()
    if load_scale != 1.0:
        case = scale_loads(case, load_scale)

    state = initial_state(case)
    reports: list[PeriodReport] = []
    for t in range(case.horizon):
        obs = observe(case, t)
        if mode == MODE_CMP:
            res = dca_solve(case, t, obs, state, cfg, lmp_source=lmp_source)
            if res.dispatch is None:
                raise SimulationError(t, res.error or "dca failed")
            reports.append(_report(t, res.dispatch, obs, case, res.lmps or {},
                                   len(res.iterations), res.status))
            dispatch = res.dispatch
        else:
            try:
                prog, vmap = strict_model(case, t, obs, prev_gen=state.prev_gen)
            except Exception as exc:
                raise SimulationError(t, str(exc)) from exc
            sol = qp.solve(prog)
            if sol.status != qp.OPTIMAL:
                raise SimulationError(t, f"strict dispatch failed: {sol.status}")
            dispatch = extract_dispatch(sol.x, vmap)
            lmps = {tag.split(":", 1)[1]: d / case.dt
                    for tag, d in qp.eq_duals_by_tag(prog, sol).items()
                    if tag.startswith("flow_balance:")}
            reports.append(_report(t, dispatch, obs, case, lmps, 0, CONVERGED))
        state = update_tau(state, dispatch.flow, case, gen=dispatch.gen)
        log.debug("period %d done: cost=%.2f zones=%d/%d/%d", t,
                  reports[-1].operating_cost, reports[-1].lines_normal,
                  reports[-1].lines_lte, reports[-1].lines_ste)

    n = len(reports)
    summary = SimulationSummary(
        mode=mode, periods=n,
        total_cost=sum(r.operating_cost for r in reports),
        total_shed_energy=sum(r.shed_energy for r in reports),
        avg_normal=sum(r.lines_normal for r in reports) / n,
        avg_lte=sum(r.lines_lte for r in reports) / n,
        avg_ste=sum(r.lines_ste for r in reports) / n)
    return reports, summary


def write_period_csv(reports: list[PeriodReport], path: str | Path) -> None:
    """One row per period, columns as in PERIOD_CSV_COLUMNS."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PERIOD_CSV_COLUMNS)
        for r in reports:
            writer.writerow([
                r.period, repr(r.operating_cost), repr(r.generation_cost),
                repr(r.curtailment_penalty), repr(r.shed_penalty),
                repr(r.shed_energy), r.lines_normal, r.lines_lte, r.lines_ste,
                r.dca_iterations, r.status])


def write_lmp_csv(reports: list[PeriodReport], case: Case, path: str | Path) -> None:
    """Period-by-bus LMP matrix, bus columns in case order."""
    buses = case.bus_ids()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["period"] + buses)
        for r in reports:
            writer.writerow([r.period] + [repr(r.lmps.get(b, float("nan")))
                                          for b in buses])
