import math

import numpy as np
import pytest

from cmpsced import qp
from cmpsced.formulation import (EffectiveBounds, Observation, RampWindowError,
                                 apply_line_caps, apply_ramping, build_base,
                                 effective_bounds, extract_dispatch, observe,
                                 operating_cost, period_base, shed_energy,
                                 strict_model)
from cmpsced.network import synthetic_case

from conftest import make_two_bus


def solve_strict(case, t=0, prev_gen=None):
    obs = observe(case, t)
    prog, vmap = strict_model(case, t, obs, prev_gen=prev_gen)
    sol = qp.solve(prog)
    assert sol.status == qp.OPTIMAL
    return extract_dispatch(sol.x, vmap), obs, prog, sol


def test_flow_balance_rows_two_bus(two_bus_case):
    obs = observe(two_bus_case, 0)
    bld, vmap = build_base(two_bus_case, 0, obs)
    prog = bld.build()
    rows = {tag: prog.A_eq[i] for i, tag in enumerate(prog.tags)}
    p1 = rows["flow_balance:bus1"]
    # bus1: p1 - f = 0
    assert p1[vmap.gen["gen1"]] == 1.0
    assert p1[vmap.flow["line1"]] == -1.0
    assert np.count_nonzero(p1) == 2
    # bus2: f - p_d = 0
    p2 = rows["flow_balance:bus2"]
    assert p2[vmap.flow["line1"]] == 1.0
    assert p2[vmap.load["load1"]] == -1.0
    assert np.count_nonzero(p2) == 2
    assert (prog.b_eq == 0).all()


def test_equality_row_count_is_buses_plus_lines():
    for seed in range(4):
        case = synthetic_case(4 + seed, 5 + seed, 3, n_renewables=1, seed=seed)
        bld, vmap = build_base(case, 0, observe(case, 0))
        prog = bld.build()
        assert prog.A_eq.shape[0] == len(case.buses) + len(case.lines)
        assert prog.n == vmap.n


def test_variable_map_indices_contiguous():
    case = synthetic_case(5, 6, 3, n_renewables=2, seed=1)
    bld, vmap = build_base(case, 0, observe(case, 0))
    all_idx = (list(vmap.gen.values()) + list(vmap.renew.values())
               + list(vmap.load.values()) + list(vmap.flow.values())
               + list(vmap.theta.values()) + list(vmap.curtail_gap.values())
               + list(vmap.shed_gap.values()))
    assert sorted(all_idx) == list(range(vmap.n))
    assert bld.n == vmap.n


def test_base_solve_under_ste_cap(two_bus_case):
    # no zone penalty, cap 90: serve everything at cost 800
    obs = observe(two_bus_case, 0)
    bld, vmap = period_base(two_bus_case, 0, obs, None, None)
    sol = qp.solve(bld.build())
    assert sol.status == qp.OPTIMAL
    dispatch = extract_dispatch(sol.x, vmap)
    assert dispatch.flow["line1"] == pytest.approx(80.0, abs=1e-6)
    assert operating_cost(dispatch, obs, two_bus_case).total == pytest.approx(800.0, abs=1e-5)


def test_strict_two_bus_values():
    dispatch, obs, prog, sol = solve_strict(make_two_bus(demand=80.0))
    assert sol.objective == pytest.approx(30500.0, abs=1e-5)
    assert dispatch.gen["gen1"] == pytest.approx(50.0, abs=1e-6)
    assert shed_energy(dispatch, obs, make_two_bus(demand=80.0)) == pytest.approx(30.0, abs=1e-6)

    dispatch, obs, prog, sol = solve_strict(make_two_bus(demand=40.0))
    assert sol.objective == pytest.approx(400.0, abs=1e-6)
    assert shed_energy(dispatch, obs, make_two_bus(demand=40.0)) == pytest.approx(0.0, abs=1e-6)

    dispatch, obs, prog, sol = solve_strict(make_two_bus(demand=0.0))
    assert sol.objective == pytest.approx(0.0, abs=1e-7)
    assert all(abs(v) <= 1e-7 for v in dispatch.gen.values())


def test_ramping_window():
    import dataclasses
    case = make_two_bus()
    gen = case.generators[0]
    obs = observe(case, 0)
    bld, vmap = build_base(case, 0, obs)
    apply_ramping(bld, vmap, case, {"gen1": 50.0})
    lo, hi = bld.bounds(vmap.gen["gen1"])
    assert (lo, hi) == (0.0, 100.0)  # +-100 ramps do not bind

    tight = dataclasses.replace(
        case, generators=(dataclasses.replace(gen, ramp_min=-10.0, ramp_max=10.0),))
    bld, vmap = build_base(tight, 0, obs)
    apply_ramping(bld, vmap, tight, {"gen1": 50.0})
    assert bld.bounds(vmap.gen["gen1"]) == (40.0, 60.0)

    free = dataclasses.replace(
        case, generators=(dataclasses.replace(gen, ramp_min=-10.0, ramp_max=math.inf),))
    bld, vmap = build_base(free, 0, obs)
    apply_ramping(bld, vmap, free, {"gen1": 50.0})
    assert bld.bounds(vmap.gen["gen1"]) == (40.0, 100.0)

    broken = dataclasses.replace(
        case, generators=(dataclasses.replace(gen, p_min=70.0, ramp_min=-10.0,
                                              ramp_max=10.0),))
    bld, vmap = build_base(broken, 0, obs)
    with pytest.raises(RampWindowError, match="gen1"):
        apply_ramping(bld, vmap, broken, {"gen1": 50.0})


def test_effective_bounds_rules():
    case = make_two_bus(t_l=16, t_s=1)
    line = case.lines[0]
    assert effective_bounds(case, {"line1": 0}, {"line1": 0}).cap["line1"] == line.zeta_s
    assert effective_bounds(case, {"line1": 1}, {"line1": 1}).cap["line1"] == line.zeta_l
    assert effective_bounds(case, {"line1": 16}, {"line1": 0}).cap["line1"] == line.zeta_n
    # LTE exhaustion wins over the STE counter state
    assert effective_bounds(case, {"line1": 16}, {"line1": 1}).cap["line1"] == line.zeta_n


def test_apply_line_caps_tightens_bounds(two_bus_case):
    obs = observe(two_bus_case, 0)
    bld, vmap = build_base(two_bus_case, 0, obs)
    apply_line_caps(bld, vmap, EffectiveBounds(cap={"line1": 70.0}))
    assert bld.bounds(vmap.flow["line1"]) == (-70.0, 70.0)


def test_observation_validation(two_bus_case):
    with pytest.raises(ValueError, match="outside horizon"):
        observe(two_bus_case, 99)
    bad = Observation(available={}, demand={"load1": -1.0})
    with pytest.raises(ValueError, match="negative observation"):
        build_base(two_bus_case, 0, bad)


def test_lossless_balance_property():
    for seed in range(8):
        case = synthetic_case(int(3 + seed % 5), 7, 4, n_renewables=2, seed=seed)
        obs = observe(case, 0)
        prog, vmap = strict_model(case, 0, obs)
        sol = qp.solve(prog)
        assert sol.status == qp.OPTIMAL
        d = extract_dispatch(sol.x, vmap)
        injected = sum(d.gen.values()) + sum(d.renew.values())
        withdrawn = sum(d.load.values())
        assert injected == pytest.approx(withdrawn, abs=1e-6)


def test_strict_optimum_feasible_in_relaxed_model(two_bus_case):
    obs = observe(two_bus_case, 0)
    prog_s, vmap = strict_model(two_bus_case, 0, obs)
    sol = qp.solve(prog_s)
    bld, vmap2 = period_base(two_bus_case, 0, obs, None, None)
    prog_r = bld.build()
    x = sol.x  # identical variable layout by construction
    assert np.abs(prog_r.A_eq @ x - prog_r.b_eq).max() <= 1e-7
    assert (prog_r.G @ x <= prog_r.h + 1e-7).all()
    assert (x >= prog_r.lb - 1e-7).all() and (x <= prog_r.ub + 1e-7).all()


def test_epigraph_exactness_at_optimum():
    import dataclasses
    from cmpsced.network import RenewableSource
    base = make_two_bus(demand=80.0)
    case = dataclasses.replace(
        base, renewables=(RenewableSource("wind1", "bus1", 300.0, (30.0,) * 3),))
    obs = observe(case, 0)
    prog, vmap = strict_model(case, 0, obs)
    sol = qp.solve(prog)
    assert sol.status == qp.OPTIMAL
    d = extract_dispatch(sol.x, vmap)
    u = sol.x[vmap.curtail_gap["wind1"]]
    v = sol.x[vmap.shed_gap["load1"]]
    assert u == pytest.approx(max(30.0 - d.renew["wind1"], 0.0), abs=1e-6)
    assert v == pytest.approx(max(80.0 - d.load["load1"], 0.0), abs=1e-6)


def test_cost_breakdown_components(two_bus_case):
    dispatch, obs, prog, sol = solve_strict(two_bus_case)
    cost = operating_cost(dispatch, obs, two_bus_case)
    assert cost.generation == pytest.approx(500.0, abs=1e-6)
    assert cost.shedding == pytest.approx(30000.0, abs=1e-4)
    assert cost.curtailment == 0.0
    assert cost.total == pytest.approx(sol.objective, abs=1e-5)


def test_dt_scales_costs():
    case = make_two_bus(demand=40.0, dt=0.25)
    dispatch, obs, prog, sol = solve_strict(case)
    assert sol.objective == pytest.approx(0.25 * 400.0, abs=1e-6)
