"""Brute-force global solver for the zone-penalized dispatch problem.

Enumerates every assignment of a zone (normal / LTE / STE) to every line,
solves the penalty-free LP with each line's flow capped at its assigned
zone's rating, adds the zone penalties of the assignment, and returns the
minimum. Only viable on tiny networks (3^|lines| LPs).

Why the enumeration is exact: any feasible point of the penalized problem
is feasible for the LP of the assignment that matches its actual zones,
with exactly its penalty, so the enumeration minimum is a lower bound.
Conversely each assignment's LP optimum lands in zones no looser than
assigned, so its penalized objective is at most the assignment value, which
makes the enumeration minimum attainable. The two directions give equality.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import TYPE_CHECKING

from . import qp
from .dca import DcaConfig
from .formulation import (Dispatch, EffectiveBounds, Observation,
                          effective_bounds, extract_dispatch, period_base)
from .network import Case

if TYPE_CHECKING:
    from .horizon import DispatchState

ZONES = ("normal", "lte", "ste")
ENUMERATION_LIMIT = 12  # 3^12 LPs is the largest budget we accept


class OracleBudgetError(ValueError):
    """The network is too large to enumerate."""


@dataclass
class OracleResult:
    objective: float                 # global optimum of cost + zone penalties
    flows: dict[str, float]
    assignment: dict[str, str]       # line id -> zone at the optimum
    dispatch: Dispatch
    evaluated: int                   # LPs solved
    infeasible_assignments: int


def _zone_cap(line, zone: str) -> float:
    if zone == "normal":
        return line.zeta_n
    if zone == "lte":
        return line.zeta_l
    return line.zeta_s


def oracle_solve(case: Case, t: int, obs: Observation, state: "DispatchState",
                 cfg: DcaConfig) -> OracleResult:
    """Globally minimize operating cost plus gamma-weighted zone counts.

    Solves the same period problem as the iterative solver (ramping around
    state.prev_gen, duration-derived caps from the state counters), so the
    two objectives are directly comparable.
    """
    n_lines = len(case.lines)
    if n_lines > ENUMERATION_LIMIT:
        raise OracleBudgetError(
            f"{n_lines} lines exceeds the enumeration budget of "
            f"{ENUMERATION_LIMIT} (3^{n_lines} LPs)")
    eff = effective_bounds(case, state.tau_l, state.tau_s)

    best = None
    evaluated = 0
    infeasible = 0
    for zones in itertools.product(ZONES, repeat=n_lines):
        caps = {ln.id: min(_zone_cap(ln, z), eff.cap[ln.id])
                for ln, z in zip(case.lines, zones)}
        penalty = (cfg.gamma_l * sum(z != "normal" for z in zones)
                   + cfg.gamma_s * sum(z == "ste" for z in zones))
        bld, vmap = period_base(case, t, obs, state.prev_gen,
                                EffectiveBounds(cap=caps))
        sol = qp.solve(bld.build())
        evaluated += 1
        if sol.status != qp.OPTIMAL:
            infeasible += 1
            continue
        total = sol.objective + penalty
        if best is None or total < best[0]:
            dispatch = extract_dispatch(sol.x, vmap)
            best = (total, dispatch, dict(zip((l.id for l in case.lines), zones)))
    if best is None:
        raise RuntimeError("no feasible zone assignment; check case data")
    total, dispatch, assignment = best
    return OracleResult(objective=total, flows=dict(dispatch.flow),
                        assignment=assignment, dispatch=dispatch,
                        evaluated=evaluated, infeasible_assignments=infeasible)
