"""SCUC instance data model, JSON loading/validation, and PTDF tables.

The JSON schema (documented in README.md) has top-level keys
``time_periods``, ``penalty_cost``, ``generators[]``, ``buses[]``,
``lines[]``, ``contingencies[]`` and an optional ``ptdf`` block.  Units are
MW, $/MWh and p.u. reactance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

BASE_CASE = "base"
_PTDF_SANITY_EPS = 1e-9


class InstanceError(ValueError):
    """Raised for schema or invariant violations, naming the offending entity."""

    def __init__(self, entity: str, message: str):
        self.entity = entity
        super().__init__(f"{entity}: {message}")


@dataclass(frozen=True)
class Generator:
    gid: str
    bus: str
    p_min: float
    p_max: float
    segment_caps: tuple   # cumulative segment breakpoints, last == p_max
    segment_costs: tuple  # $/MWh per segment
    min_output_cost: float
    min_up: int
    min_down: int
    ramp_up: float
    ramp_down: float
    startup_limit: float
    shutdown_limit: float
    initial_on: int
    initial_power: float
    initial_periods: int

    @property
    def n_segments(self) -> int:
        return len(self.segment_caps)

    @property
    def segment_widths(self) -> tuple:
        prev = self.p_min
        widths = []
        for cap in self.segment_caps:
            widths.append(cap - prev)
            prev = cap
        return tuple(widths)

    def forced_on_window(self, n_periods: int) -> int:
        """Periods at the start of the horizon where the unit must stay on."""
        if not self.initial_on:
            return 0
        return min(n_periods, max(0, self.min_up - self.initial_periods))

    def forced_off_window(self, n_periods: int) -> int:
        if self.initial_on:
            return 0
        return min(n_periods, max(0, self.min_down - self.initial_periods))


@dataclass(frozen=True)
class Bus:
    bid: str
    demand: tuple  # MW per period


@dataclass(frozen=True)
class Line:
    lid: str
    from_bus: str
    to_bus: str
    reactance: float
    limit: float
    emergency_limit: float  # thermal limit under any contingency

    def limit_for(self, cont_key: str) -> float:
        return self.limit if cont_key == BASE_CASE else self.emergency_limit


@dataclass(frozen=True)
class Contingency:
    cid: str
    line: str  # outaged line id


@dataclass(frozen=True)
class Network:
    buses: tuple
    lines: tuple
    contingencies: tuple
    reference_bus: str

    def bus_index(self) -> dict:
        return {b.bid: i for i, b in enumerate(self.buses)}

    def line_index(self) -> dict:
        return {l.lid: i for i, l in enumerate(self.lines)}


@dataclass(frozen=True)
class ScucInstance:
    name: str
    n_periods: int
    penalty_cost: float
    generators: tuple
    network: Network
    ptdf: "PtdfTable | None" = None

    @property
    def buses(self) -> tuple:
        return self.network.buses

    @property
    def lines(self) -> tuple:
        return self.network.lines

    @property
    def contingencies(self) -> tuple:
        return self.network.contingencies

    def demand_matrix(self) -> np.ndarray:
        """Demand as a (n_buses, n_periods) array."""
        return np.array([b.demand for b in self.buses], dtype=np.float64)

    def contingency_keys(self) -> list:
        return [BASE_CASE] + [c.cid for c in self.contingencies]


class PtdfTable:
    """PTDF matrices (n_lines x n_buses) for the base case and each contingency.

    The reference-bus column is identically zero.  For a contingency table
    the outaged line's row is zero (the line carries no flow when out).
    Immutable after construction.
    """

    def __init__(self, tables: dict, line_ids: list, bus_ids: list, reference_bus: str):
        self._tables = {}
        for key, mat in tables.items():
            arr = np.array(mat, dtype=np.float64)
            if arr.shape != (len(line_ids), len(bus_ids)):
                raise InstanceError(f"ptdf[{key}]",
                                    f"shape {arr.shape} does not match "
                                    f"({len(line_ids)}, {len(bus_ids)})")
            arr.setflags(write=False)
            self._tables[key] = arr
        self.line_ids = list(line_ids)
        self.bus_ids = list(bus_ids)
        self.reference_bus = reference_bus

    def keys(self) -> list:
        return list(self._tables)

    def table(self, cont_key: str = BASE_CASE) -> np.ndarray:
        return self._tables[cont_key]

    def flows(self, injections: np.ndarray, cont_key: str = BASE_CASE) -> np.ndarray:
        """Line flows for a bus net-injection vector (MW, summing to zero
        against the reference bus)."""
        return self._tables[cont_key] @ injections


def _connected(n_buses: int, edges: list, skip: int | None = None) -> bool:
    """Breadth-first connectivity over bus indices; `skip` drops one edge."""
    if n_buses == 0:
        return True
    adj = [[] for _ in range(n_buses)]
    for k, (i, j) in enumerate(edges):
        if k == skip:
            continue
        adj[i].append(j)
        adj[j].append(i)
    seen = [False] * n_buses
    stack = [0]
    seen[0] = True
    count = 1
    while stack:
        node = stack.pop()
        for nxt in adj[node]:
            if not seen[nxt]:
                seen[nxt] = True
                count += 1
                stack.append(nxt)
    return count == n_buses


def _ptdf_matrix(network: Network, skip_line: int | None = None) -> np.ndarray:
    """PTDF of the (possibly reduced) topology via one dense factorization
    of the reference-reduced bus susceptance matrix."""
    buses = network.buses
    lines = network.lines
    n_b = len(buses)
    n_l = len(lines)
    bus_idx = network.bus_index()
    ref = bus_idx[network.reference_bus]

    b_full = np.zeros((n_b, n_b))
    for k, line in enumerate(lines):
        if k == skip_line:
            continue
        i, j = bus_idx[line.from_bus], bus_idx[line.to_bus]
        b = 1.0 / line.reactance
        b_full[i, i] += b
        b_full[j, j] += b
        b_full[i, j] -= b
        b_full[j, i] -= b

    keep = [i for i in range(n_b) if i != ref]
    b_red = b_full[np.ix_(keep, keep)]
    # columns of B^-1 give bus angles for unit injections withdrawn at ref
    try:
        theta_red = scipy.linalg.solve(b_red, np.eye(n_b - 1), assume_a="sym")
    except scipy.linalg.LinAlgError as exc:
        raise InstanceError(network.reference_bus,
                            "singular susceptance system (disconnected topology)") from exc
    theta = np.zeros((n_b, n_b))
    theta[np.ix_(keep, keep)] = theta_red

    delta = np.zeros((n_l, n_b))
    for k, line in enumerate(lines):
        if k == skip_line:
            continue
        i, j = bus_idx[line.from_bus], bus_idx[line.to_bus]
        delta[k, :] = (theta[i, :] - theta[j, :]) / line.reactance
    delta[:, ref] = 0.0
    return delta


def compute_ptdf(network: Network) -> PtdfTable:
    """PTDF tables for the base topology and every single-line contingency.

    Contingency tables are recomputed on the reduced topology rather than
    via line-outage update formulas; at the instance sizes handled here a
    fresh factorization per contingency is cheap.
    """
    bus_idx = network.bus_index()
    line_idx = network.line_index()
    n_b = len(network.buses)
    edges = [(bus_idx[l.from_bus], bus_idx[l.to_bus]) for l in network.lines]

    if not _connected(n_b, edges):
        raise InstanceError("network", "base topology is disconnected")

    tables = {BASE_CASE: _ptdf_matrix(network)}
    for cont in network.contingencies:
        k = line_idx[cont.line]
        if not _connected(n_b, edges, skip=k):
            raise InstanceError(cont.cid, f"contingency isolates bus (outage of line {cont.line})")
        tables[cont.cid] = _ptdf_matrix(network, skip_line=k)

    for key, mat in tables.items():
        if np.max(np.abs(mat)) > 1.0 + _PTDF_SANITY_EPS:
            raise InstanceError(f"ptdf[{key}]", "PTDF magnitude exceeds 1; check reactances")
    return PtdfTable(tables, [l.lid for l in network.lines],
                     [b.bid for b in network.buses], network.reference_bus)


def _require(data: dict, key: str, entity: str):
    if key not in data:
        raise InstanceError(entity, f"missing required field '{key}'")
    return data[key]


def _number(data: dict, key: str, entity: str) -> float:
    val = _require(data, key, entity)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise InstanceError(entity, f"field '{key}' must be a number, got {type(val).__name__}")
    return float(val)


def _integer(data: dict, key: str, entity: str) -> int:
    val = _require(data, key, entity)
    if isinstance(val, bool) or not isinstance(val, int):
        raise InstanceError(entity, f"field '{key}' must be an integer, got {type(val).__name__}")
    return val


def _parse_generator(data: dict, n_periods: int) -> Generator:
    gid = str(_require(data, "id", "generator"))
    entity = f"generator {gid}"
    p_min = _number(data, "p_min", entity)
    p_max = _number(data, "p_max", entity)
    if not 0.0 <= p_min <= p_max:
        raise InstanceError(entity, f"power limits must satisfy 0 <= p_min <= p_max, got [{p_min}, {p_max}]")

    segs = _require(data, "segments", entity)
    if not isinstance(segs, list) or not segs:
        raise InstanceError(entity, "'segments' must be a non-empty list")
    caps, costs = [], []
    prev = p_min
    for k, seg in enumerate(segs):
        cap = _number(seg, "p_max", f"{entity} segment {k}")
        cost = _number(seg, "cost", f"{entity} segment {k}")
        if cap <= prev:
            raise InstanceError(entity, f"segment breakpoints must increase strictly from p_min, "
                                        f"got {cap} after {prev}")
        caps.append(cap)
        costs.append(cost)
        prev = cap
    if abs(caps[-1] - p_max) > 1e-9:
        raise InstanceError(entity, f"last segment breakpoint {caps[-1]} must equal p_max {p_max}")

    min_up = _integer(data, "min_up", entity)
    min_down = _integer(data, "min_down", entity)
    if min_up < 1 or min_down < 1:
        raise InstanceError(entity, "min_up and min_down must be >= 1")

    ramp_up = _number(data, "ramp_up", entity)
    ramp_down = _number(data, "ramp_down", entity)
    startup = _number(data, "startup_limit", entity)
    shutdown = _number(data, "shutdown_limit", entity)
    for name, val in (("ramp_up", ramp_up), ("ramp_down", ramp_down),
                      ("startup_limit", startup), ("shutdown_limit", shutdown)):
        if val < 0:
            raise InstanceError(entity, f"{name} must be nonnegative")
    if startup < p_min:
        raise InstanceError(entity, f"startup capacity below minimum power ({startup} < {p_min})")
    if shutdown < p_min:
        raise InstanceError(entity, f"shutdown capacity below minimum power ({shutdown} < {p_min})")

    initial_on = _integer(data, "initial_on", entity)
    if initial_on not in (0, 1):
        raise InstanceError(entity, "initial_on must be 0 or 1")
    initial_power = _number(data, "initial_power", entity)
    if initial_on == 0 and initial_power != 0.0:
        raise InstanceError(entity, "initial_power must be 0 for a unit that starts off")
    if initial_on == 1 and not (p_min - 1e-9 <= initial_power <= p_max + 1e-9):
        raise InstanceError(entity, f"initial_power {initial_power} outside [p_min, p_max]")
    initial_periods = _integer(data, "initial_periods", entity)
    if initial_periods < 1:
        raise InstanceError(entity, "initial_periods must be >= 1")

    return Generator(
        gid=gid, bus=str(_require(data, "bus", entity)),
        p_min=p_min, p_max=p_max,
        segment_caps=tuple(caps), segment_costs=tuple(costs),
        min_output_cost=_number(data, "min_output_cost", entity),
        min_up=min_up, min_down=min_down,
        ramp_up=ramp_up, ramp_down=ramp_down,
        startup_limit=startup, shutdown_limit=shutdown,
        initial_on=initial_on, initial_power=initial_power,
        initial_periods=initial_periods,
    )


def parse_instance(data: dict, name: str = "instance") -> ScucInstance:
    """Validate a parsed JSON document and build an immutable instance."""
    n_periods = _integer(data, "time_periods", name)
    if n_periods < 1:
        raise InstanceError(name, "time_periods must be >= 1")
    penalty = _number(data, "penalty_cost", name)
    if penalty < 0:
        raise InstanceError(name, "penalty_cost must be nonnegative")

    buses = []
    seen = set()
    for raw in _require(data, "buses", name):
        bid = str(_require(raw, "id", "bus"))
        if bid in seen:
            raise InstanceError(f"bus {bid}", "duplicate bus id")
        seen.add(bid)
        demand = _require(raw, "demand", f"bus {bid}")
        if not isinstance(demand, list) or len(demand) != n_periods:
            raise InstanceError(f"bus {bid}", f"demand series must have length {n_periods}")
        if any(d < 0 for d in demand):
            raise InstanceError(f"bus {bid}", "demand must be nonnegative")
        buses.append(Bus(bid=bid, demand=tuple(float(d) for d in demand)))
    if not buses:
        raise InstanceError(name, "at least one bus is required")
    bus_ids = {b.bid for b in buses}

    lines = []
    seen = set()
    for raw in data.get("lines", []):
        lid = str(_require(raw, "id", "line"))
        entity = f"line {lid}"
        if lid in seen:
            raise InstanceError(entity, "duplicate line id")
        seen.add(lid)
        from_bus, to_bus = str(_require(raw, "from", entity)), str(_require(raw, "to", entity))
        for b in (from_bus, to_bus):
            if b not in bus_ids:
                raise InstanceError(entity, f"endpoint bus {b} does not exist")
        if from_bus == to_bus:
            raise InstanceError(entity, "line endpoints must differ")
        reactance = _number(raw, "reactance", entity)
        if reactance <= 0:
            raise InstanceError(entity, "reactance must be positive")
        limit = _number(raw, "limit", entity)
        if limit <= 0:
            raise InstanceError(entity, "thermal limit must be positive")
        emergency = float(raw.get("emergency_limit", limit))
        if emergency <= 0:
            raise InstanceError(entity, "emergency limit must be positive")
        lines.append(Line(lid=lid, from_bus=from_bus, to_bus=to_bus,
                          reactance=reactance, limit=limit, emergency_limit=emergency))
    line_ids = {l.lid for l in lines}

    conts = []
    seen = set()
    for raw in data.get("contingencies", []):
        cid = str(_require(raw, "id", "contingency"))
        if cid in seen:
            raise InstanceError(f"contingency {cid}", "duplicate contingency id")
        seen.add(cid)
        line = str(_require(raw, "line", f"contingency {cid}"))
        if line not in line_ids:
            raise InstanceError(f"contingency {cid}", f"outaged line {line} does not exist")
        conts.append(Contingency(cid=cid, line=line))

    reference = str(data.get("reference_bus", buses[0].bid))
    if reference not in bus_ids:
        raise InstanceError(name, f"reference bus {reference} does not exist")

    generators = []
    seen = set()
    for raw in _require(data, "generators", name):
        gen = _parse_generator(raw, n_periods)
        if gen.gid in seen:
            raise InstanceError(f"generator {gen.gid}", "duplicate generator id")
        seen.add(gen.gid)
        if gen.bus not in bus_ids:
            raise InstanceError(f"generator {gen.gid}", f"bus {gen.bus} does not exist")
        generators.append(gen)

    network = Network(buses=tuple(buses), lines=tuple(lines),
                      contingencies=tuple(conts), reference_bus=reference)

    # connectivity is validated here even when a ptdf block is supplied
    bus_idx = network.bus_index()
    edges = [(bus_idx[l.from_bus], bus_idx[l.to_bus]) for l in lines]
    if not _connected(len(buses), edges):
        raise InstanceError(name, "base topology is disconnected")
    line_pos = network.line_index()
    for cont in conts:
        if not _connected(len(buses), edges, skip=line_pos[cont.line]):
            raise InstanceError(cont.cid, f"contingency isolates bus (outage of line {cont.line})")

    ptdf = None
    if "ptdf" in data:
        tables = data["ptdf"]
        expected = {BASE_CASE} | {c.cid for c in conts}
        if set(tables) != expected:
            raise InstanceError("ptdf", f"ptdf block must carry keys {sorted(expected)}")
        ptdf = PtdfTable(tables, [l.lid for l in lines], [b.bid for b in buses], reference)

    return ScucInstance(name=str(data.get("name", name)), n_periods=n_periods,
                        penalty_cost=penalty, generators=tuple(generators),
                        network=network, ptdf=ptdf)


def load_instance(path) -> ScucInstance:
    """Load and validate an instance from a JSON file."""
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InstanceError(str(path), f"invalid JSON: {exc}") from exc
    return parse_instance(data, name=str(path))


def serialize_instance(inst: ScucInstance) -> dict:
    """Inverse of parse_instance (modulo key ordering)."""
    doc = {
        "name": inst.name,
        "time_periods": inst.n_periods,
        "penalty_cost": inst.penalty_cost,
        "reference_bus": inst.network.reference_bus,
        "buses": [{"id": b.bid, "demand": list(b.demand)} for b in inst.buses],
        "lines": [{"id": l.lid, "from": l.from_bus, "to": l.to_bus,
                   "reactance": l.reactance, "limit": l.limit,
                   "emergency_limit": l.emergency_limit} for l in inst.lines],
        "contingencies": [{"id": c.cid, "line": c.line} for c in inst.contingencies],
        "generators": [{
            "id": g.gid, "bus": g.bus, "p_min": g.p_min, "p_max": g.p_max,
            "segments": [{"p_max": cap, "cost": cost}
                         for cap, cost in zip(g.segment_caps, g.segment_costs)],
            "min_output_cost": g.min_output_cost,
            "min_up": g.min_up, "min_down": g.min_down,
            "ramp_up": g.ramp_up, "ramp_down": g.ramp_down,
            "startup_limit": g.startup_limit, "shutdown_limit": g.shutdown_limit,
            "initial_on": g.initial_on, "initial_power": g.initial_power,
            "initial_periods": g.initial_periods,
        } for g in inst.generators],
    }
    if inst.ptdf is not None:
        doc["ptdf"] = {key: inst.ptdf.table(key).tolist() for key in inst.ptdf.keys()}
    return doc
