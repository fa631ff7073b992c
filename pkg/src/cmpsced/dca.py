"""Emergency-zone cardinality penalty and its difference-of-convex solver.

A line counts against reliability whenever its flow exceeds a threshold.
The exact count is a sum of 0/1 indicators of |f| > zeta; the continuous
surrogate used here ramps from 0 to 1 over a band of width eps:

    phi(f; zeta) = clip((|f| - zeta) / eps, 0, 1)
                 = g(f; zeta) - h(f; zeta)

    g(f; zeta) = max((|f| - zeta) / eps, 0)        (convex)
    h(f; zeta) = max((|f| - zeta) / eps - 1, 0)    (convex)

Both thresholds are penalized: crossing the normal rating zeta_n costs
gamma_l, crossing the LTE rating zeta_l costs an additional gamma_s.

The solver linearizes h at the incumbent flows using an exact subgradient
(h is flat on [-(zeta+eps), zeta+eps] and has slope +-1/eps outside; ties
at the kinks resolve to 0) and minimizes the resulting convex model

    F1(x) + c/2 ||f - f_k||^2
        + gamma_l * sum_l [g(f_l; zeta_n) - v_l^n f_l]
        + gamma_s * sum_l [g(f_l; zeta_l) - v_l^s f_l]

over the period's feasible set, with each g-term rewritten through one
epigraph variable per line and threshold. Because the linearization of h
is a global underestimate, the surrogate objective is non-increasing along
the iterates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from . import qp
from .formulation import (Dispatch, EffectiveBounds, Observation, RampWindowError,
                          effective_bounds, extract_dispatch, operating_cost,
                          period_base)
from .network import Case

if TYPE_CHECKING:
    from .horizon import DispatchState

log = logging.getLogger("cmpsced.dca")

CONVERGED = "converged"
MAX_ITERS = "max_iters"
SUBPROBLEM_ERROR = "subproblem_error"

LMP_FINAL_SUBPROBLEM = "final-subproblem"
LMP_RESOLVE = "resolve"

# flows within this many MW of a rating count as inside it; absorbs solver
# noise when an optimum sits exactly on a cap
ZONE_TOLERANCE = 1e-6


@dataclass
class DcaConfig:
    epsilon: float = 0.1    # transition width of the surrogate, MW
    gamma_l: float = 0.5    # weight on lines past the normal rating
    gamma_s: float = 0.5    # extra weight on lines past the LTE rating
    prox_c: float = 1e-3    # proximal weight on flow movement, $/MW^2
    tol_obj: float = 1e-6   # relative surrogate-objective tolerance
    tol_x: float = 1e-4     # flow-change tolerance, MW
    max_iters: int = 50

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not (self.gamma_l > 0 and self.gamma_s > 0):
            raise ValueError("gamma weights must be > 0")
        if self.prox_c < 0:
            raise ValueError("prox_c must be >= 0")
        if not (self.tol_obj > 0 and self.tol_x > 0):
            raise ValueError("tolerances must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class DcaIteration:
    surrogate_objective: float  # F1 + gamma-weighted phi sums at the iterate
    exact_objective: float      # F1 + gamma-weighted zone counts
    flow_change: float          # inf-norm flow movement vs previous iterate


@dataclass
class DcaResult:
    status: str
    dispatch: Dispatch | None
    iterations: list[DcaIteration] = field(default_factory=list)
    initial_objective: float = float("nan")
    lmps: dict[str, float] | None = None
    error: str | None = None

    @property
    def flows(self) -> dict[str, float] | None:
        return None if self.dispatch is None else self.dispatch.flow


def phi(f, zeta, eps):
    """Ramp surrogate of the threshold indicator, in [0, 1]."""
    out = np.clip((np.abs(np.asarray(f, dtype=float)) - zeta) / eps, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def g_h_split(f, zeta, eps):
    """The two convex pieces with g - h = phi exactly."""
    r = (np.abs(np.asarray(f, dtype=float)) - zeta) / eps
    g = np.maximum(r, 0.0)
    h = np.maximum(r - 1.0, 0.0)
    if g.ndim == 0:
        return float(g), float(h)
    return g, h


def h_subgradient(f, zeta, eps):
    """An element of the subdifferential of h; 0 is chosen at the kinks."""
    f = np.asarray(f, dtype=float)
    out = np.where(f > zeta + eps, 1.0 / eps,
                   np.where(f < -(zeta + eps), -1.0 / eps, 0.0))
    return float(out) if out.ndim == 0 else out


def exact_zone_sets(flows: dict[str, float], case: Case,
                    tol: float = 0.0) -> tuple[set[str], set[str]]:
    """Line ids past the normal and LTE ratings (strict exceedance).

    ``tol`` widens the thresholds; reporting layers pass a small tolerance
    so flows pinned at a rating by the solver do not count as exceeding it.
    """
    e_l, e_s = set(), set()
    for ln in case.lines:
        mag = abs(flows[ln.id])
        if mag > ln.zeta_n + tol:
            e_l.add(ln.id)
        if mag > ln.zeta_l + tol:
            e_s.add(ln.id)
    return e_l, e_s


def exact_cmp_objective(dispatch: Dispatch, obs: Observation, case: Case,
                        cfg: DcaConfig) -> float:
    """Operating cost plus gamma-weighted exact zone counts."""
    e_l, e_s = exact_zone_sets(dispatch.flow, case)
    return (operating_cost(dispatch, obs, case).total
            + cfg.gamma_l * len(e_l) + cfg.gamma_s * len(e_s))


def surrogate_objective(dispatch: Dispatch, obs: Observation, case: Case,
                        cfg: DcaConfig) -> float:
    """Operating cost plus gamma-weighted phi sums (the smoothed objective)."""
    total = operating_cost(dispatch, obs, case).total
    for ln in case.lines:
        f = dispatch.flow[ln.id]
        total += cfg.gamma_l * phi(f, ln.zeta_n, cfg.epsilon)
        total += cfg.gamma_s * phi(f, ln.zeta_l, cfg.epsilon)
    return total


def _build_subproblem(case, t, obs, prev_gen, caps, cfg, f_prev):
    """Convex model around the incumbent flows f_prev (None = no penalty terms)."""
    bld, vmap = period_base(case, t, obs, prev_gen, caps)
    if f_prev is not None:
        inv_eps = 1.0 / cfg.epsilon
        for ln in case.lines:
            fi = vmap.flow[ln.id]
            fk = f_prev[ln.id]
            for zeta, gamma in ((ln.zeta_n, cfg.gamma_l), (ln.zeta_l, cfg.gamma_s)):
                a = bld.add_variable(0.0)
                # a >= (f - zeta)/eps and a >= (-f - zeta)/eps
                bld.add_inequality({fi: inv_eps, a: -1.0}, zeta * inv_eps)
                bld.add_inequality({fi: -inv_eps, a: -1.0}, zeta * inv_eps)
                bld.add_cost(a, gamma)
                v = h_subgradient(fk, zeta, cfg.epsilon)
                if v != 0.0:
                    bld.add_cost(fi, -gamma * v)
            if cfg.prox_c > 0:
                bld.add_quad_cost(fi, cfg.prox_c)
                bld.add_cost(fi, -cfg.prox_c * fk)
                bld.add_constant(0.5 * cfg.prox_c * fk * fk)
    return bld.build(), vmap


def _lmps_from(prog, sol, dt) -> dict[str, float]:
    duals = qp.eq_duals_by_tag(prog, sol)
    prefix = "flow_balance:"
    return {tag[len(prefix):]: d / dt for tag, d in duals.items()
            if tag.startswith(prefix)}


def dca_solve(case: Case, t: int, obs: Observation, state: "DispatchState",
              cfg: DcaConfig, lmp_source: str = LMP_FINAL_SUBPROBLEM) -> DcaResult:
    """Run the iterative convexification for one period.

    Starts from the penalty-free dispatch over the period's feasible set
    (ramping plus duration-derived flow caps), then alternates subgradient
    linearization and convex solves until the surrogate objective or the
    flows stop moving. Non-optimal subproblem statuses abort the period
    with ``subproblem_error``; the caller decides what to do with it.
    """
    if lmp_source not in (LMP_FINAL_SUBPROBLEM, LMP_RESOLVE):
        raise ValueError(f"unknown lmp_source {lmp_source!r}")
    caps = effective_bounds(case, state.tau_l, state.tau_s)
    prev_gen = state.prev_gen

    try:
        prog, vmap = _build_subproblem(case, t, obs, prev_gen, caps, cfg, None)
    except RampWindowError as exc:
        return DcaResult(status=SUBPROBLEM_ERROR, dispatch=None,
                         error=f"initialization: {exc}")
    sol = qp.solve(prog)
    if sol.status != qp.OPTIMAL:
        return DcaResult(status=SUBPROBLEM_ERROR, dispatch=None,
                         error=f"initialization: solver status {sol.status}")
    dispatch = extract_dispatch(sol.x, vmap)
    obj_prev = surrogate_objective(dispatch, obs, case, cfg)
    result = DcaResult(status=MAX_ITERS, dispatch=dispatch,
                       initial_objective=obj_prev)
    log.debug("period %d init: surrogate=%.6f", t, obj_prev)

    final = (prog, sol)
    for k in range(1, cfg.max_iters + 1):
        prog, vmap = _build_subproblem(case, t, obs, prev_gen, caps, cfg,
                                       dispatch.flow)
        sol = qp.solve(prog)
        if sol.status != qp.OPTIMAL:
            return DcaResult(status=SUBPROBLEM_ERROR, dispatch=None,
                             iterations=result.iterations,
                             initial_objective=result.initial_objective,
                             error=f"iteration {k}: solver status {sol.status}")
        new_dispatch = extract_dispatch(sol.x, vmap)
        obj = surrogate_objective(new_dispatch, obs, case, cfg)
        exact = exact_cmp_objective(new_dispatch, obs, case, cfg)
        change = max((abs(new_dispatch.flow[l.id] - dispatch.flow[l.id])
                      for l in case.lines), default=0.0)
        result.iterations.append(DcaIteration(
            surrogate_objective=obj, exact_objective=exact, flow_change=change))
        log.debug("period %d iter %d: surrogate=%.6f exact=%.6f dflow=%.3e",
                  t, k, obj, exact, change)
        dispatch = new_dispatch
        result.dispatch = dispatch
        final = (prog, sol)
        if abs(obj - obj_prev) <= cfg.tol_obj * max(1.0, abs(obj)) or change <= cfg.tol_x:
            result.status = CONVERGED
            break
        obj_prev = obj

    prog, sol = final
    if lmp_source == LMP_RESOLVE:
        resolve_caps = {}
        for ln in case.lines:
            mag = abs(dispatch.flow[ln.id])
            if mag <= ln.zeta_n + ZONE_TOLERANCE:
                zone_cap = ln.zeta_n
            elif mag <= ln.zeta_l + ZONE_TOLERANCE:
                zone_cap = ln.zeta_l
            else:
                zone_cap = ln.zeta_s
            resolve_caps[ln.id] = min(zone_cap, caps.cap[ln.id])
        bld, vmap = period_base(case, t, obs, prev_gen,
                                EffectiveBounds(cap=resolve_caps))
        prog = bld.build()
        sol = qp.solve(prog)
        if sol.status != qp.OPTIMAL:
            return DcaResult(status=SUBPROBLEM_ERROR, dispatch=None,
                             iterations=result.iterations,
                             initial_objective=result.initial_objective,
                             error=f"lmp resolve: solver status {sol.status}")
    result.lmps = _lmps_from(prog, sol, case.dt)
    return result
