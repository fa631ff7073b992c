"""Single-period dispatch model assembly.

Builds the convex part of the dispatch problem as a :class:`ProgramBuilder`
fragment with a stable variable indexing: conventional generation, utilized
renewable output, served demand, line flows, bus angles, and the epigraph
variables that linearize the curtailment / shedding max-terms.

The DC network model treats all voltage magnitudes as 1.0 p.u., so the flow
on a line is (theta_i - theta_j) / X. The bus with the lexicographically
smallest id is pinned to theta = 0 to remove the angle nullspace. Costs are
energy costs: every $/MWh rate is multiplied by the period length dt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .network import Case
from .qp import ConvexProgram

INF = math.inf


class RampWindowError(RuntimeError):
    """Ramp limits and capacity bounds leave no feasible generation interval."""


@dataclass(frozen=True)
class Observation:
    """Realized data for one period: available renewable MW and demanded MW."""

    available: dict[str, float]
    demand: dict[str, float]


def observe(case: Case, t: int) -> Observation:
    """Read the period-t slice of every time series."""
    if not 0 <= t < case.horizon:
        raise ValueError(f"period {t} outside horizon 0..{case.horizon - 1}")
    return Observation(
        available={r.id: r.availability[t] for r in case.renewables},
        demand={d.id: d.demand[t] for d in case.loads},
    )


@dataclass
class VariableMap:
    """Index of each decision variable inside the emitted program."""

    gen: dict[str, int]
    renew: dict[str, int]
    load: dict[str, int]
    flow: dict[str, int]
    theta: dict[str, int]
    curtail_gap: dict[str, int]  # epigraph of (available - renew)+
    shed_gap: dict[str, int]     # epigraph of (demand - load)+
    n: int


@dataclass(frozen=True)
class EffectiveBounds:
    """Active per-line flow cap for the current period, in MW."""

    cap: dict[str, float]


@dataclass
class Dispatch:
    """Decoded primal point of a period program."""

    gen: dict[str, float]
    renew: dict[str, float]
    load: dict[str, float]
    flow: dict[str, float]
    theta: dict[str, float]


@dataclass
class CostBreakdown:
    generation: float
    curtailment: float
    shedding: float

    @property
    def total(self) -> float:
        return self.generation + self.curtailment + self.shedding


class ProgramBuilder:
    """Incremental assembly of a ConvexProgram (the mutable model fragment)."""

    def __init__(self):
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._cost: list[float] = []
        self._quad: list[float] = []
        self._constant = 0.0
        self._eq: list[tuple[dict[int, float], float, str | None]] = []
        self._ineq: list[tuple[dict[int, float], float]] = []

    @property
    def n(self) -> int:
        return len(self._lb)

    def add_variable(self, lb: float = -INF, ub: float = INF) -> int:
        self._lb.append(lb)
        self._ub.append(ub)
        self._cost.append(0.0)
        self._quad.append(0.0)
        return len(self._lb) - 1

    def set_bounds(self, i: int, lb: float, ub: float) -> None:
        self._lb[i] = lb
        self._ub[i] = ub

    def bounds(self, i: int) -> tuple[float, float]:
        return self._lb[i], self._ub[i]

    def add_cost(self, i: int, coef: float) -> None:
        self._cost[i] += coef

    def add_quad_cost(self, i: int, coef: float) -> None:
        self._quad[i] += coef

    def add_constant(self, value: float) -> None:
        self._constant += value

    def add_equality(self, coeffs: dict[int, float], rhs: float,
                     tag: str | None = None) -> None:
        self._eq.append((coeffs, rhs, tag))

    def add_inequality(self, coeffs: dict[int, float], rhs: float) -> None:
        """Row sum(coef * x) <= rhs."""
        self._ineq.append((coeffs, rhs))

    def build(self) -> ConvexProgram:
        n = self.n
        A = np.zeros((len(self._eq), n))
        b = np.zeros(len(self._eq))
        tags: list[str | None] = []
        for r, (coeffs, rhs, tag) in enumerate(self._eq):
            for i, c in coeffs.items():
                A[r, i] += c
            b[r] = rhs
            tags.append(tag)
        G = np.zeros((len(self._ineq), n))
        h = np.zeros(len(self._ineq))
        for r, (coeffs, rhs) in enumerate(self._ineq):
            for i, c in coeffs.items():
                G[r, i] += c
            h[r] = rhs
        prog = ConvexProgram(
            n=n, Q=np.diag(self._quad), q=np.array(self._cost),
            A_eq=A, b_eq=b, G=G, h=h,
            lb=np.array(self._lb), ub=np.array(self._ub),
            constant_cost=self._constant, tags=tags)
        prog.validate()
        return prog


def build_base(case: Case, t: int, obs: Observation) -> tuple[ProgramBuilder, VariableMap]:
    """Cost, balance, DC flow, and capacity structure shared by every model.

    Flow caps default to the short-term emergency rating; tighten them with
    :func:`apply_line_caps`. Equality rows: one flow balance per bus (tagged
    ``flow_balance:<bus>``) plus one flow definition per line.
    """
    if not 0 <= t < case.horizon:
        raise ValueError(f"period {t} outside horizon 0..{case.horizon - 1}")
    for name, value in list(obs.available.items()) + list(obs.demand.items()):
        if value < 0:
            raise ValueError(f"negative observation for {name!r}: {value}")

    dt = case.dt
    bld = ProgramBuilder()
    gen = {g.id: bld.add_variable(g.p_min, g.p_max) for g in case.generators}
    for g in case.generators:
        bld.add_cost(gen[g.id], dt * g.cost)
    renew = {r.id: bld.add_variable(0.0, obs.available[r.id]) for r in case.renewables}
    load = {d.id: bld.add_variable(0.0, obs.demand[d.id]) for d in case.loads}
    flow = {ln.id: bld.add_variable(-ln.zeta_s, ln.zeta_s) for ln in case.lines}
    theta = {bus.id: bld.add_variable(bus.theta_min, bus.theta_max) for bus in case.buses}
    if case.buses:
        ref = min(theta)  # angle reference
        bld.set_bounds(theta[ref], 0.0, 0.0)

    curtail_gap = {}
    for r in case.renewables:
        u = bld.add_variable(0.0, INF)
        curtail_gap[r.id] = u
        bld.add_cost(u, dt * r.curtail_penalty)
        # u >= available - p  <=>  -p - u <= -available
        bld.add_inequality({renew[r.id]: -1.0, u: -1.0}, -obs.available[r.id])
    shed_gap = {}
    for d in case.loads:
        v = bld.add_variable(0.0, INF)
        shed_gap[d.id] = v
        bld.add_cost(v, dt * d.shed_penalty)
        bld.add_inequality({load[d.id]: -1.0, v: -1.0}, -obs.demand[d.id])

    for bus in case.buses:
        coeffs: dict[int, float] = {}
        for ln in case.lines:
            if ln.to_bus == bus.id:
                coeffs[flow[ln.id]] = coeffs.get(flow[ln.id], 0.0) + 1.0
            if ln.from_bus == bus.id:
                coeffs[flow[ln.id]] = coeffs.get(flow[ln.id], 0.0) - 1.0
        for g in case.generators:
            if g.bus == bus.id:
                coeffs[gen[g.id]] = 1.0
        for r in case.renewables:
            if r.bus == bus.id:
                coeffs[renew[r.id]] = 1.0
        for d in case.loads:
            if d.bus == bus.id:
                coeffs[load[d.id]] = -1.0
        bld.add_equality(coeffs, 0.0, tag=f"flow_balance:{bus.id}")

    for ln in case.lines:
        inv_x = 1.0 / ln.reactance
        bld.add_equality(
            {flow[ln.id]: 1.0, theta[ln.from_bus]: -inv_x, theta[ln.to_bus]: inv_x},
            0.0, tag=f"flow_def:{ln.id}")

    vmap = VariableMap(gen=gen, renew=renew, load=load, flow=flow, theta=theta,
                       curtail_gap=curtail_gap, shed_gap=shed_gap, n=bld.n)
    return bld, vmap


def apply_ramping(bld: ProgramBuilder, vmap: VariableMap, case: Case,
                  prev_gen: dict[str, float]) -> None:
    """Intersect generation bounds with the ramp window around prev_gen."""
    for g in case.generators:
        prev = prev_gen[g.id]
        lo = max(g.p_min, prev + g.ramp_min)
        hi = min(g.p_max, prev + g.ramp_max)
        if lo > hi:
            raise RampWindowError(
                f"generator {g.id}: empty ramp window [{lo}, {hi}] "
                f"from prev={prev}, ramps [{g.ramp_min}, {g.ramp_max}]")
        bld.set_bounds(vmap.gen[g.id], lo, hi)


def effective_bounds(case: Case, tau_l: dict[str, int],
                     tau_s: dict[str, int]) -> EffectiveBounds:
    """Per-line flow cap implied by the emergency-duration counters.

    A line whose LTE counter has reached T_l must return to the normal
    rating; one whose STE counter has reached T_s is held at the LTE rating;
    otherwise the short-term emergency rating applies.
    """
    cap = {}
    for ln in case.lines:
        if tau_l.get(ln.id, 0) >= case.t_l:
            cap[ln.id] = ln.zeta_n
        elif tau_s.get(ln.id, 0) >= case.t_s:
            cap[ln.id] = ln.zeta_l
        else:
            cap[ln.id] = ln.zeta_s
    return EffectiveBounds(cap=cap)


def apply_line_caps(bld: ProgramBuilder, vmap: VariableMap, caps: EffectiveBounds) -> None:
    for line_id, cap in caps.cap.items():
        bld.set_bounds(vmap.flow[line_id], -cap, cap)


def period_base(case: Case, t: int, obs: Observation,
                prev_gen: dict[str, float] | None,
                caps: EffectiveBounds | None) -> tuple[ProgramBuilder, VariableMap]:
    """build_base plus optional ramping and flow-cap tightening."""
    bld, vmap = build_base(case, t, obs)
    if caps is not None:
        apply_line_caps(bld, vmap, caps)
    if prev_gen is not None:
        apply_ramping(bld, vmap, case, prev_gen)
    return bld, vmap


def strict_model(case: Case, t: int, obs: Observation,
                 prev_gen: dict[str, float] | None = None
                 ) -> tuple[ConvexProgram, VariableMap]:
    """Baseline model: every line confined to its normal rating."""
    caps = EffectiveBounds(cap={ln.id: ln.zeta_n for ln in case.lines})
    bld, vmap = period_base(case, t, obs, prev_gen, caps)
    return bld.build(), vmap


def extract_dispatch(x: np.ndarray, vmap: VariableMap) -> Dispatch:
    return Dispatch(
        gen={k: float(x[i]) for k, i in vmap.gen.items()},
        renew={k: float(x[i]) for k, i in vmap.renew.items()},
        load={k: float(x[i]) for k, i in vmap.load.items()},
        flow={k: float(x[i]) for k, i in vmap.flow.items()},
        theta={k: float(x[i]) for k, i in vmap.theta.items()},
    )


def operating_cost(dispatch: Dispatch, obs: Observation, case: Case) -> CostBreakdown:
    """Energy cost of a dispatch: generation plus curtailment and shed penalties."""
    dt = case.dt
    generation = dt * sum(g.cost * dispatch.gen[g.id] for g in case.generators)
    curtailment = dt * sum(
        r.curtail_penalty * max(obs.available[r.id] - dispatch.renew[r.id], 0.0)
        for r in case.renewables)
    shedding = dt * sum(
        d.shed_penalty * max(obs.demand[d.id] - dispatch.load[d.id], 0.0)
        for d in case.loads)
    return CostBreakdown(generation=generation, curtailment=curtailment,
                         shedding=shedding)


def shed_energy(dispatch: Dispatch, obs: Observation, case: Case) -> float:
    """Unserved energy in MWh for the period."""
    return case.dt * sum(
        max(obs.demand[d.id] - dispatch.load[d.id], 0.0) for d in case.loads)
