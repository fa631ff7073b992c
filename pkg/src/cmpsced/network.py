"""Power-system domain model: components, case files, validation.

A :class:`Case` bundles the static grid description (buses, lines with
three-tier thermal ratings, generators) with market data (renewable
availability and load series, shedding penalties) and the horizon metadata
used by the rolling simulator. Cases are frozen after validation and safe
to share across concurrent runs.

Case file format
----------------
Plain text, one section marker per component family, comma-separated rows::

    [meta]        T,dt,T_l,T_s
    [buses]       id,theta_min,theta_max     (bounds optional, default +-pi/2)
    [lines]       id,from,to,x,zeta_n,zeta_l,zeta_s
    [generators]  id,bus,pmin,pmax,cost,ramp_min,ramp_max
    [renewables]  id,bus,penalty,series_file
    [loads]       id,bus,penalty,series_file

Blank lines and lines starting with ``#`` are ignored. Numbers use ``.`` as
the decimal separator; ``inf`` / ``-inf`` are accepted for ramp limits.
Series files are resolved relative to the case file, one value per line.

Units: power in MW, cost rates in $/MWh. A period of ``dt`` hours prices
energy at power * dt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

DEFAULT_THETA_BOUND = math.pi / 2


class CaseError(Exception):
    """Base class for case loading problems."""


class CaseParseError(CaseError):
    """Malformed case or series file."""


class CaseValidationError(CaseError):
    """A structural invariant of the case data is violated."""


@dataclass(frozen=True)
class Bus:
    id: str
    theta_min: float = -DEFAULT_THETA_BOUND  # rad
    theta_max: float = DEFAULT_THETA_BOUND   # rad


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: str
    to_bus: str
    reactance: float  # per unit, > 0
    zeta_n: float     # normal rating, MW
    zeta_l: float     # long-term emergency rating, MW
    zeta_s: float     # short-term emergency rating, MW


@dataclass(frozen=True)
class Generator:
    id: str
    bus: str
    p_min: float  # MW
    p_max: float  # MW
    cost: float   # $/MWh
    ramp_min: float = -math.inf  # MW per period, <= 0
    ramp_max: float = math.inf   # MW per period, >= 0


@dataclass(frozen=True)
class RenewableSource:
    id: str
    bus: str
    curtail_penalty: float             # $/MWh of unused availability
    availability: tuple[float, ...]    # MW per period


@dataclass(frozen=True)
class Load:
    id: str
    bus: str
    shed_penalty: float          # $/MWh of unmet demand
    demand: tuple[float, ...]    # MW per period


@dataclass(frozen=True)
class Case:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    renewables: tuple[RenewableSource, ...]
    loads: tuple[Load, ...]
    horizon: int      # number of periods T covered by a simulation
    dt: float = 1.0   # period length, hours
    t_l: int = 1      # acceptable LTE-zone duration, periods
    t_s: int = 1      # acceptable STE-zone duration, periods

    def bus_ids(self) -> list[str]:
        return [b.id for b in self.buses]


def validate_case(case: Case) -> None:
    """Check every structural invariant; raise on the first violation."""
    seen: set[str] = set()
    for bus in case.buses:
        if bus.id in seen:
            raise CaseValidationError(f"duplicate bus id {bus.id!r}")
        seen.add(bus.id)
        if not bus.theta_min <= bus.theta_max:
            raise CaseValidationError(
                f"bus {bus.id!r}: theta_min {bus.theta_min} > theta_max {bus.theta_max}")
    bus_ids = seen

    seen = set()
    for line in case.lines:
        if line.id in seen:
            raise CaseValidationError(f"duplicate line id {line.id!r}")
        seen.add(line.id)
        for end in (line.from_bus, line.to_bus):
            if end not in bus_ids:
                raise CaseValidationError(f"line {line.id!r}: dangling bus id {end!r}")
        if line.from_bus == line.to_bus:
            raise CaseValidationError(f"line {line.id!r}: both endpoints are {line.from_bus!r}")
        if not line.reactance > 0:
            raise CaseValidationError(f"line {line.id!r}: reactance must be > 0")
        if not (0 < line.zeta_n < line.zeta_l < line.zeta_s):
            raise CaseValidationError(
                f"line {line.id!r}: threshold ordering violated, need "
                f"0 < zeta_n < zeta_l < zeta_s, got "
                f"({line.zeta_n}, {line.zeta_l}, {line.zeta_s})")

    seen = set()
    for gen in case.generators:
        if gen.id in seen:
            raise CaseValidationError(f"duplicate generator id {gen.id!r}")
        seen.add(gen.id)
        if gen.bus not in bus_ids:
            raise CaseValidationError(f"generator {gen.id!r}: dangling bus id {gen.bus!r}")
        if not 0 <= gen.p_min <= gen.p_max:
            raise CaseValidationError(
                f"generator {gen.id!r}: need 0 <= p_min <= p_max, got "
                f"[{gen.p_min}, {gen.p_max}]")
        if not (gen.ramp_min <= 0 <= gen.ramp_max):
            raise CaseValidationError(
                f"generator {gen.id!r}: need ramp_min <= 0 <= ramp_max, got "
                f"[{gen.ramp_min}, {gen.ramp_max}]")

    if case.horizon < 1:
        raise CaseValidationError(f"horizon must be >= 1, got {case.horizon}")
    if not case.dt > 0:
        raise CaseValidationError(f"dt must be > 0, got {case.dt}")
    if case.t_l < 1 or case.t_s < 1:
        raise CaseValidationError(
            f"duration limits must be >= 1, got T_l={case.t_l}, T_s={case.t_s}")
    if case.t_s > case.t_l:
        raise CaseValidationError(
            f"need T_s <= T_l, got T_s={case.t_s} > T_l={case.t_l}")

    seen = set()
    for ren in case.renewables:
        if ren.id in seen:
            raise CaseValidationError(f"duplicate renewable id {ren.id!r}")
        seen.add(ren.id)
        if ren.bus not in bus_ids:
            raise CaseValidationError(f"renewable {ren.id!r}: dangling bus id {ren.bus!r}")
        if ren.curtail_penalty < 0:
            raise CaseValidationError(f"renewable {ren.id!r}: negative curtail penalty")
        if len(ren.availability) < case.horizon:
            raise CaseValidationError(
                f"renewable {ren.id!r}: series has {len(ren.availability)} entries, "
                f"horizon is {case.horizon}")
        if any(v < 0 for v in ren.availability):
            raise CaseValidationError(f"renewable {ren.id!r}: negative availability entry")

    seen = set()
    for load in case.loads:
        if load.id in seen:
            raise CaseValidationError(f"duplicate load id {load.id!r}")
        seen.add(load.id)
        if load.bus not in bus_ids:
            raise CaseValidationError(f"load {load.id!r}: dangling bus id {load.bus!r}")
        if load.shed_penalty < 0:
            raise CaseValidationError(f"load {load.id!r}: negative shed penalty")
        if len(load.demand) < case.horizon:
            raise CaseValidationError(
                f"load {load.id!r}: series has {len(load.demand)} entries, "
                f"horizon is {case.horizon}")
        if any(v < 0 for v in load.demand):
            raise CaseValidationError(f"load {load.id!r}: negative demand entry")


def scale_loads(case: Case, factor: float) -> Case:
    """Return a copy of the case with every demand series multiplied by factor."""
    if not factor > 0:
        raise ValueError(f"load scale factor must be > 0, got {factor}")
    loads = tuple(
        replace(load, demand=tuple(v * factor for v in load.demand))
        for load in case.loads)
    return replace(case, loads=loads)


# ---------------------------------------------------------------------------
# case file I/O
# ---------------------------------------------------------------------------

_SECTIONS = ("meta", "buses", "lines", "generators", "renewables", "loads")


def _parse_float(token: str, where: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise CaseParseError(f"{where}: cannot parse number {token!r}") from None


def _read_series(path: Path, where: str) -> tuple[float, ...]:
    if not path.exists():
        raise CaseParseError(f"{where}: series file {path} does not exist")
    values = []
    for k, raw in enumerate(path.read_text().splitlines(), start=1):
        raw = raw.strip()
        if not raw or raw.startswith("#"):
            continue
        values.append(_parse_float(raw, f"{path}:{k}"))
    return tuple(values)


def load_case(path: str | Path) -> Case:
    """Parse and validate a case file; raises CaseParseError / CaseValidationError."""
    path = Path(path)
    if not path.exists():
        raise CaseParseError(f"case file {path} does not exist")

    sections: dict[str, list[tuple[int, list[str]]]] = {s: [] for s in _SECTIONS}
    current: str | None = None
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        if text.startswith("[") and text.endswith("]"):
            name = text[1:-1].strip()
            if name not in _SECTIONS:
                raise CaseParseError(f"{path}:{lineno}: unknown section [{name}]")
            current = name
            continue
        if current is None:
            raise CaseParseError(f"{path}:{lineno}: data before any section marker")
        sections[current].append((lineno, [tok.strip() for tok in text.split(",")]))

    if len(sections["meta"]) != 1:
        raise CaseParseError(f"{path}: expected exactly one [meta] row, got "
                             f"{len(sections['meta'])}")
    lineno, fields = sections["meta"][0]
    if len(fields) != 4:
        raise CaseParseError(f"{path}:{lineno}: [meta] row needs T,dt,T_l,T_s")
    where = f"{path}:{lineno}"
    horizon = int(_parse_float(fields[0], where))
    dt = _parse_float(fields[1], where)
    t_l = int(_parse_float(fields[2], where))
    t_s = int(_parse_float(fields[3], where))

    buses = []
    for lineno, fields in sections["buses"]:
        where = f"{path}:{lineno}"
        if len(fields) == 1:
            buses.append(Bus(fields[0]))
        elif len(fields) == 3:
            buses.append(Bus(fields[0], _parse_float(fields[1], where),
                             _parse_float(fields[2], where)))
        else:
            raise CaseParseError(f"{where}: bus row needs 1 or 3 fields")

    lines = []
    for lineno, fields in sections["lines"]:
        where = f"{path}:{lineno}"
        if len(fields) != 7:
            raise CaseParseError(f"{where}: line row needs 7 fields")
        lines.append(Line(fields[0], fields[1], fields[2],
                          *(_parse_float(tok, where) for tok in fields[3:])))

    generators = []
    for lineno, fields in sections["generators"]:
        where = f"{path}:{lineno}"
        if len(fields) != 7:
            raise CaseParseError(f"{where}: generator row needs 7 fields")
        generators.append(Generator(fields[0], fields[1],
                                    *(_parse_float(tok, where) for tok in fields[2:])))

    renewables = []
    for lineno, fields in sections["renewables"]:
        where = f"{path}:{lineno}"
        if len(fields) != 4:
            raise CaseParseError(f"{where}: renewable row needs 4 fields")
        series = _read_series(path.parent / fields[3], where)
        renewables.append(RenewableSource(fields[0], fields[1],
                                          _parse_float(fields[2], where), series))

    loads = []
    for lineno, fields in sections["loads"]:
        where = f"{path}:{lineno}"
        if len(fields) != 4:
            raise CaseParseError(f"{where}: load row needs 4 fields")
        series = _read_series(path.parent / fields[3], where)
        loads.append(Load(fields[0], fields[1], _parse_float(fields[2], where), series))

    case = Case(buses=tuple(buses), lines=tuple(lines), generators=tuple(generators),
                renewables=tuple(renewables), loads=tuple(loads),
                horizon=horizon, dt=dt, t_l=t_l, t_s=t_s)
    validate_case(case)
    return case


def write_case(case: Case, path: str | Path) -> None:
    """Write a case (and its series files) in the format load_case reads back."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = []
    out.append("[meta]")
    out.append(f"{case.horizon},{case.dt!r},{case.t_l},{case.t_s}")
    out.append("[buses]")
    for bus in case.buses:
        out.append(f"{bus.id},{bus.theta_min!r},{bus.theta_max!r}")
    out.append("[lines]")
    for ln in case.lines:
        out.append(f"{ln.id},{ln.from_bus},{ln.to_bus},{ln.reactance!r},"
                   f"{ln.zeta_n!r},{ln.zeta_l!r},{ln.zeta_s!r}")
    out.append("[generators]")
    for gen in case.generators:
        out.append(f"{gen.id},{gen.bus},{gen.p_min!r},{gen.p_max!r},{gen.cost!r},"
                   f"{gen.ramp_min!r},{gen.ramp_max!r}")

    def dump_series(name: str, values: tuple[float, ...]) -> str:
        fname = f"{name}.series"
        (path.parent / fname).write_text("".join(f"{v!r}\n" for v in values))
        return fname

    out.append("[renewables]")
    for ren in case.renewables:
        fname = dump_series(ren.id, ren.availability)
        out.append(f"{ren.id},{ren.bus},{ren.curtail_penalty!r},{fname}")
    out.append("[loads]")
    for load in case.loads:
        fname = dump_series(load.id, load.demand)
        out.append(f"{load.id},{load.bus},{load.shed_penalty!r},{fname}")
    path.write_text("\n".join(out) + "\n")


# ---------------------------------------------------------------------------
# synthetic networks for experiments and randomized tests
# ---------------------------------------------------------------------------

def synthetic_case(n_buses: int, n_lines: int, n_generators: int, *,
                   n_renewables: int = 0, n_loads: int | None = None,
                   horizon: int = 4, dt: float = 1.0, t_l: int = 16, t_s: int = 1,
                   shed_penalty: float = 1000.0, curtail_penalty: float = 300.0,
                   seed: int = 0) -> Case:
    """Random connected network with plausible ratings and load profiles.

    The topology is a random spanning tree plus extra random edges, so the
    case is always connected. Generation capacity totals about 1.6x the peak
    system load; line ratings are sized so that moderate load scaling pushes
    some lines into emergency zones. Deterministic for a given seed.
    """
    if n_buses < 2:
        raise ValueError("need at least 2 buses")
    if n_lines < n_buses - 1:
        raise ValueError("need n_lines >= n_buses - 1 for a connected network")
    rng = np.random.default_rng(seed)

    buses = tuple(Bus(f"b{i:03d}", -50.0, 50.0) for i in range(1, n_buses + 1))
    ids = [b.id for b in buses]

    # spanning tree, then extra edges (parallel lines allowed once pairs run out)
    order = rng.permutation(n_buses)
    edges: list[tuple[int, int]] = []
    for k in range(1, n_buses):
        j = int(rng.integers(0, k))
        edges.append((order[j], order[k]))
    used = {tuple(sorted(e)) for e in edges}
    while len(edges) < n_lines:
        i, j = rng.integers(0, n_buses, size=2)
        if i == j:
            continue
        key = tuple(sorted((int(i), int(j))))
        if key in used and len(used) < n_buses * (n_buses - 1) // 2:
            continue
        used.add(key)
        edges.append((int(i), int(j)))

    if n_loads is None:
        n_loads = n_buses
    load_buses = [ids[int(i)] for i in rng.integers(0, n_buses, size=n_loads)]
    loads = []
    peak_total = 0.0
    for k, bus in enumerate(load_buses, start=1):
        base = float(rng.uniform(15.0, 50.0))
        series = tuple(base * float(rng.uniform(0.75, 1.25)) for _ in range(horizon))
        peak_total += max(series)
        loads.append(Load(f"d{k:03d}", bus, shed_penalty, series))

    raw = rng.uniform(0.5, 1.5, size=n_generators)
    caps = raw / raw.sum() * 1.6 * peak_total
    generators = []
    for k in range(n_generators):
        bus = ids[int(rng.integers(0, n_buses))]
        p_max = float(caps[k])
        ramp = float(rng.uniform(0.3, 1.0)) * p_max
        generators.append(Generator(f"g{k + 1:03d}", bus, 0.0, p_max,
                                    float(rng.uniform(5.0, 50.0)), -ramp, ramp))

    renewables = []
    for k in range(n_renewables):
        bus = ids[int(rng.integers(0, n_buses))]
        cap = 0.3 * peak_total / max(1, n_renewables)
        series = tuple(float(rng.uniform(0.0, cap)) for _ in range(horizon))
        renewables.append(RenewableSource(f"r{k + 1:03d}", bus, curtail_penalty, series))

    flow_scale = 1.2 * peak_total / math.sqrt(n_lines)
    lines = []
    for k, (i, j) in enumerate(edges, start=1):
        zn = float(rng.uniform(0.3, 0.7)) * flow_scale
        zl = zn * float(rng.uniform(1.25, 1.45))
        zs = zl * float(rng.uniform(1.2, 1.35))
        lines.append(Line(f"l{k:03d}", ids[int(i)], ids[int(j)],
                          float(rng.uniform(0.02, 0.1)), zn, zl, zs))

    case = Case(buses=buses, lines=tuple(lines), generators=tuple(generators),
                renewables=tuple(renewables), loads=tuple(loads),
                horizon=horizon, dt=dt, t_l=t_l, t_s=t_s)
    validate_case(case)
    return case
