import numpy as np
import pytest

from cmpsced.dca import DcaConfig, dca_solve, exact_cmp_objective
from cmpsced.formulation import observe
from cmpsced.horizon import initial_state
from cmpsced.network import synthetic_case
from cmpsced.oracle import ENUMERATION_LIMIT, OracleBudgetError, oracle_solve

from conftest import make_two_bus


def test_stressed_two_bus_global_optimum():
    case = make_two_bus(demand=80.0)
    cfg = DcaConfig(gamma_l=0.5, gamma_s=0.5)
    obs = observe(case, 0)
    state = initial_state(case)
    res = oracle_solve(case, 0, obs, state, cfg)
    assert res.objective == pytest.approx(801.0, abs=1e-5)
    assert res.assignment == {"line1": "ste"}
    assert res.evaluated == 3


def test_unstressed_two_bus_stays_normal():
    case = make_two_bus(demand=40.0)
    cfg = DcaConfig()
    res = oracle_solve(case, 0, observe(case, 0), initial_state(case), cfg)
    assert res.objective == pytest.approx(400.0, abs=1e-6)
    assert res.assignment == {"line1": "normal"}


def test_huge_penalty_prefers_shedding():
    case = make_two_bus(demand=80.0)
    cfg = DcaConfig(gamma_l=1e6, gamma_s=1e6)
    res = oracle_solve(case, 0, observe(case, 0), initial_state(case), cfg)
    assert res.objective == pytest.approx(30500.0, abs=1e-4)
    assert res.assignment == {"line1": "normal"}


def test_oracle_monotone_in_gamma():
    case = make_two_bus(demand=80.0)
    obs = observe(case, 0)
    state = initial_state(case)
    previous = -np.inf
    for gamma in (0.1, 0.5, 2.0, 50.0, 1e4):
        value = oracle_solve(case, 0, obs, state,
                             DcaConfig(gamma_l=gamma, gamma_s=gamma)).objective
        assert value >= previous - 1e-9
        previous = value


def test_budget_refusal():
    case = synthetic_case(8, ENUMERATION_LIMIT + 8, 4, seed=0)
    cfg = DcaConfig()
    with pytest.raises(OracleBudgetError, match="enumeration budget"):
        oracle_solve(case, 0, observe(case, 0),
                     initial_state(case), cfg)


def test_dca_never_beats_oracle():
    cfg = DcaConfig()
    gaps = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        n_buses = int(rng.integers(2, 5))
        n_lines = int(rng.integers(max(1, n_buses - 1), 6))
        case = synthetic_case(n_buses, n_lines, int(rng.integers(1, 4)),
                              n_renewables=int(rng.integers(0, 2)), seed=seed)
        case = __import__("cmpsced").scale_loads(case, float(rng.uniform(1.0, 1.8)))
        obs = observe(case, 0)
        state = initial_state(case)
        oracle = oracle_solve(case, 0, obs, state, cfg)
        dca = dca_solve(case, 0, obs, state, cfg)
        assert dca.dispatch is not None
        value = exact_cmp_objective(dca.dispatch, obs, case, cfg)
        assert value >= oracle.objective - 1e-6
        gaps.append((value - oracle.objective) / max(1.0, abs(oracle.objective)))
    assert np.median(gaps) <= 0.05
