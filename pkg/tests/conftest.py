"""Shared fixtures: canonical hand-sized cases and random program factories."""

import numpy as np
import pytest

from cmpsced import Bus, Case, Generator, Line, Load, validate_case
from cmpsced.qp import ConvexProgram


def make_two_bus(demand=80.0, periods=3, shed_penalty=1000.0, dt=1.0,
                 t_l=16, t_s=1, gen_cost=10.0, gen_pmax=100.0,
                 ratings=(50.0, 70.0, 90.0)) -> Case:
    """One generator feeding one load over a single line, X = 0.1."""
    if np.isscalar(demand):
        series = (float(demand),) * periods
    else:
        series = tuple(float(v) for v in demand)
        periods = len(series)
    case = Case(
        buses=(Bus("bus1", -50.0, 50.0), Bus("bus2", -50.0, 50.0)),
        lines=(Line("line1", "bus1", "bus2", 0.1, *ratings),),
        generators=(Generator("gen1", "bus1", 0.0, gen_pmax, gen_cost,
                              -gen_pmax, gen_pmax),),
        renewables=(),
        loads=(Load("load1", "bus2", shed_penalty, series),),
        horizon=periods, dt=dt, t_l=t_l, t_s=t_s)
    validate_case(case)
    return case


def make_one_bus(demand=100.0, periods=2, gen_pmax=50.0, gen_cost=10.0,
                 shed_penalty=1000.0) -> Case:
    """Single bus with insufficient generation, guaranteed to shed."""
    case = Case(
        buses=(Bus("b1", -1.0, 1.0),),
        lines=(),
        generators=(Generator("g1", "b1", 0.0, gen_pmax, gen_cost),),
        renewables=(),
        loads=(Load("d1", "b1", shed_penalty, (float(demand),) * periods),),
        horizon=periods, dt=1.0, t_l=16, t_s=1)
    validate_case(case)
    return case


@pytest.fixture
def two_bus_case() -> Case:
    return make_two_bus()


def random_bounded_program(rng: np.random.Generator, quadratic: bool,
                           n_max: int = 50) -> ConvexProgram:
    """Feasible compact program built around a known interior point."""
    n = int(rng.integers(2, n_max + 1))
    m_e = int(rng.integers(0, n // 2 + 1))
    m_i = int(rng.integers(1, n + 5))
    x0 = rng.normal(size=n) * 3
    A = rng.normal(size=(m_e, n))
    b = A @ x0
    G = rng.normal(size=(m_i, n))
    h = G @ x0 + rng.uniform(0.1, 5.0, size=m_i)
    lb = x0 - rng.uniform(0.5, 10.0, size=n)
    ub = x0 + rng.uniform(0.5, 10.0, size=n)
    if quadratic:
        B = rng.normal(size=(n, n)) / np.sqrt(n)
        Q = B.T @ B
    else:
        Q = np.zeros((n, n))
    q = rng.normal(size=n) * 2
    return ConvexProgram(n=n, Q=Q, q=q, A_eq=A, b_eq=b, G=G, h=h, lb=lb, ub=ub)
