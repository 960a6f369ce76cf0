"""Three-phase network data model, feeder document parser and event handling.

Feeder documents are plain text: ``key = value`` header lines followed by
``[section]`` tables.  The first non-comment line of each table names its
columns; every following line is one whitespace-separated row.  ``#`` starts
a comment, ``-`` marks an empty cell.  See ``docs/feeder-format.md``.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

FORMAT_VERSION = 1
PHASES = "abc"

SOURCE_KINDS = ("diesel", "storage", "pv", "utility")
LINE_KINDS = ("fixed", "switch", "tie")
LINE_STATES = ("closed", "open", "faulted")

_LENGTH_UNITS = {"ft": 1.0 / 5280.0, "mile": 1.0, "mi": 1.0, "km": 1.0 / 1.609344, "m": 1.0 / 1609.344}


class FeederError(ValueError):
    """Base class for feeder/event document problems."""


class FeederSyntaxError(FeederError):
    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class FeederReferenceError(FeederError):
    pass


class DuplicateIdError(FeederError):
    pass


class WeightOrderError(FeederError):
    pass


def canonical_phases(text: str) -> str:
    """Return ``text`` as a canonical phase string (subset of ``abc``, sorted)."""
    s = text.strip().lower()
    if not s or any(ch not in PHASES for ch in s) or len(set(s)) != len(s):
        raise ValueError(f"invalid phase set {text!r}")
    return "".join(ph for ph in PHASES if ph in s)


def natural_key(token: str):
    """Sort key placing numeric ids in numeric order before other ids."""
    try:
        return (0, float(token), token)
    except ValueError:
        return (1, 0.0, token)


@dataclass(frozen=True)
class Bus:
    id: str
    phases: str
    vmin: tuple[float, ...]
    vmax: tuple[float, ...]
    is_reference: bool = False
    microgrid: str | None = None


@dataclass(frozen=True)
class Load:
    id: str
    bus: str
    level: int
    # per-phase complex demand in kW + j kvar, keyed by phase letter
    demand: Mapping[str, complex]

    @property
    def phases(self) -> str:
        return "".join(ph for ph in PHASES if ph in self.demand)

    @property
    def p_total(self) -> float:
        return math.fsum(s.real for s in self.demand.values())

    @property
    def q_total(self) -> float:
        return math.fsum(s.imag for s in self.demand.values())


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: str
    to_bus: str
    phases: str
    z: np.ndarray = field(compare=False)  # ohm, referred to the from-bus voltage base
    ampacity: float = math.inf  # A per phase
    flow_limit: float | None = None  # kVA per phase, MILP only
    kind: str = "fixed"
    state: str = "closed"

    def __eq__(self, other):
        if not isinstance(other, Line):
            return NotImplemented
        return (
            (self.id, self.from_bus, self.to_bus, self.phases, self.ampacity, self.flow_limit, self.kind, self.state)
            == (other.id, other.from_bus, other.to_bus, other.phases, other.ampacity, other.flow_limit, other.kind, other.state)
            and np.array_equal(self.z, other.z)
        )

    __hash__ = None

    @property
    def energizable(self) -> bool:
        return self.state != "faulted"

    def endpoints(self) -> tuple[str, str]:
        return self.from_bus, self.to_bus


@dataclass(frozen=True)
class Source:
    id: str
    bus: str
    kind: str
    p_rate: float  # kW
    q_rate: float  # kvar
    microgrid: str | None = None

    @property
    def fixed_active_power(self) -> bool:
        return self.kind == "pv"


@dataclass(frozen=True)
class Network:
    name: str
    buses: dict[str, Bus]
    lines: dict[str, Line]
    loads: dict[str, Load]
    sources: dict[str, Source]
    weights: tuple[float, ...]
    base_kva: float = 1000.0  # per phase
    base_kv: float = 2.4018  # line-to-neutral
    rotation: str = "abc"

    @property
    def level_count(self) -> int:
        return len(self.weights)

    def load_weight(self, load: Load) -> float:
        return self.weights[load.level - 1]

    def loads_at(self, bus: str) -> list[Load]:
        return [ld for ld in self.loads.values() if ld.bus == bus]

    def sources_at(self, bus: str) -> list[Source]:
        return [s for s in self.sources.values() if s.bus == bus]

    @property
    def switches(self) -> set[str]:
        return {ln.id for ln in self.lines.values() if ln.kind in ("switch", "tie")}

    def nominal_phasors(self, phases: str = PHASES) -> np.ndarray:
        """Unit balanced phasors for ``phases`` under the network's phase rotation."""
        step = -120.0 if self.rotation == "abc" else 120.0
        ang = {"a": 0.0, "b": step, "c": -step}
        return np.array([np.exp(1j * np.deg2rad(ang[ph])) for ph in phases])


@dataclass(frozen=True)
class EventSpec:
    faulted_lines: tuple[str, ...] = ()
    unavailable_sources: tuple[str, ...] = ()

    @classmethod
    def from_json(cls, text: str) -> "EventSpec":
        doc = json.loads(text)
        if not isinstance(doc, dict):
            raise FeederError("event document must be a JSON object")
        unknown = set(doc) - {"faulted_lines", "unavailable_sources", "name", "comment"}
        if unknown:
            raise FeederError(f"unknown event keys: {sorted(unknown)}")
        return cls(
            tuple(str(x) for x in doc.get("faulted_lines", [])),
            tuple(str(x) for x in doc.get("unavailable_sources", [])),
        )

    def to_json(self) -> str:
        return json.dumps(
            {"faulted_lines": list(self.faulted_lines), "unavailable_sources": list(self.unavailable_sources)},
            indent=2,
        )


@dataclass(frozen=True)
class PostEventNetwork:
    network: Network
    event: EventSpec

    def __getattr__(self, name):
        # delegate read access to the wrapped network
        if name in ("network", "event") or name.startswith("__"):
            raise AttributeError(name)
        return getattr(self.network, name)


@dataclass
class ValidationReport:
    entries: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.entries

    def __bool__(self) -> bool:
        return self.ok

    def __iter__(self):
        return iter(self.entries)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_SECTIONS = ("linecodes", "buses", "lines", "loads", "sources")
_REQUIRED_COLUMNS = {
    "linecodes": ("id", "phases", "unit", "z"),
    "buses": ("id", "phases"),
    "lines": ("id", "from", "to", "code", "length"),
    "loads": ("bus", "level"),
    "sources": ("id", "bus", "kind", "p_rate"),
}
_OPTIONAL_COLUMNS = {
    "linecodes": (),
    "buses": ("vmin", "vmax", "ref", "mg"),
    "lines": ("kind", "state", "ampacity", "flow_limit"),
    "loads": ("id", "conn", "pa", "qa", "pb", "qb", "pc", "qc"),
    "sources": ("q_rate", "mg"),
}


@dataclass
class _Row:
    lineno: int
    cells: dict[str, str]
    cols: dict[str, int]

    def get(self, key: str, default: str | None = None) -> str | None:
        v = self.cells.get(key)
        if v is None or v == "-":
            return default
        return v

    def err(self, key: str, message: str) -> FeederSyntaxError:
        return FeederSyntaxError(message, self.lineno, self.cols.get(key, 1))

    def number(self, key: str, default: float | None = None) -> float | None:
        v = self.get(key)
        if v is None:
            return default
        try:
            return float(v)
        except ValueError:
            raise self.err(key, f"{key}: expected a number, got {v!r}") from None


def _tokenize(line: str) -> list[tuple[str, int]]:
    return [(m.group(0), m.start() + 1) for m in re.finditer(r"\S+", line)]


def _split_sections(text: str):
    header: dict[str, tuple[str, int]] = {}
    tables: dict[str, list[_Row]] = {}
    current: str | None = None
    columns: list[str] | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.strip()
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise FeederSyntaxError("unterminated section header", lineno, len(line) + 1)
            name = stripped[1:-1].strip().lower()
            if name not in _SECTIONS:
                raise FeederSyntaxError(f"unknown section [{name}]", lineno, line.index("[") + 2)
            if name in tables:
                raise FeederSyntaxError(f"section [{name}] repeated", lineno, 1)
            current, columns = name, None
            tables[name] = []
            continue
        if current is None:
            if "=" not in line:
                raise FeederSyntaxError("expected 'key = value'", lineno, 1)
            key, _, value = line.partition("=")
            key = key.strip().lower()
            if not key:
                raise FeederSyntaxError("empty key", lineno, 1)
            if key in header:
                raise FeederSyntaxError(f"duplicate key {key!r}", lineno, 1)
            header[key] = (value.strip(), lineno)
            continue
        toks = _tokenize(line)
        if columns is None:
            columns = [t.lower() for t, _ in toks]
            allowed = set(_REQUIRED_COLUMNS[current]) | set(_OPTIONAL_COLUMNS[current])
            for t, col in toks:
                if t.lower() not in allowed:
                    raise FeederSyntaxError(f"unknown column {t!r} in [{current}]", lineno, col)
            missing = [c for c in _REQUIRED_COLUMNS[current] if c not in columns]
            if missing:
                raise FeederSyntaxError(f"[{current}] is missing columns {missing}", lineno, 1)
            if len(set(columns)) != len(columns):
                raise FeederSyntaxError(f"repeated column in [{current}]", lineno, 1)
            continue
        if len(toks) != len(columns):
            col = toks[min(len(toks), len(columns)) - 1][1] if toks else 1
            raise FeederSyntaxError(f"expected {len(columns)} cells, found {len(toks)}", lineno, col)
        tables[current].append(
            _Row(lineno, {c: t for c, (t, _) in zip(columns, toks)}, {c: k for c, (_, k) in zip(columns, toks)})
        )
    return header, tables


def _parse_matrix(row: _Row, phases: str) -> np.ndarray:
    text = row.get("z")
    n = len(phases)
    try:
        vals = [complex(tok) for tok in text.split(",")]
    except ValueError:
        raise row.err("z", f"bad impedance entry in {text!r}") from None
    if len(vals) != n * (n + 1) // 2:
        raise row.err("z", f"expected {n * (n + 1) // 2} upper-triangle entries for phases {phases!r}, got {len(vals)}")
    z = np.zeros((n, n), dtype=complex)
    k = 0
    for i in range(n):
        for j in range(i, n):
            z[i, j] = z[j, i] = vals[k]
            k += 1
    return z


def _parse_length(row: _Row, unit: str) -> float:
    text = row.get("length")
    m = re.fullmatch(r"([0-9.eE+-]+)([a-z]*)", text or "")
    if not m:
        raise row.err("length", f"bad length {text!r}")
    try:
        value = float(m.group(1))
    except ValueError:
        raise row.err("length", f"bad length {text!r}") from None
    suffix = m.group(2)
    if unit == "each":
        if suffix:
            raise row.err("length", "length of a lumped ('each') code must be a bare multiplier")
        return value
    if not suffix:
        return value
    if suffix not in _LENGTH_UNITS:
        raise row.err("length", f"unknown length unit {suffix!r}")
    return value * _LENGTH_UNITS[suffix] / _LENGTH_UNITS[unit]


def _delta_to_wye(pairs: dict[str, complex]) -> dict[str, complex]:
    # delta branch "a" = ab, "b" = bc, "c" = ca; each branch split evenly over its two phases
    branch = {"a": "ab", "b": "bc", "c": "ca"}
    out: dict[str, complex] = {}
    for key, s in pairs.items():
        for ph in branch[key]:
            out[ph] = out.get(ph, 0j) + s / 2
    return out


def parse_feeder(text: str) -> Network:
    """Parse a feeder document into a cross-referenced :class:`Network`."""
    header, tables = _split_sections(text)

    def hval(key, default=None):
        return header[key][0] if key in header else default

    version = hval("format", str(FORMAT_VERSION))
    if version != str(FORMAT_VERSION):
        raise FeederSyntaxError(f"unsupported format version {version}", header["format"][1])
    try:
        weights = tuple(float(x) for x in hval("levels", "").split())
    except ValueError:
        raise FeederSyntaxError("levels must be numbers", header["levels"][1]) from None
    if not weights:
        raise FeederSyntaxError("missing 'levels' header", 1)
    if any(b >= a for a, b in zip(weights, weights[1:])) or weights[-1] < 0:
        raise WeightOrderError(f"level weights must be strictly decreasing and nonnegative: {weights}")
    rotation = hval("rotation", "abc")
    if rotation not in ("abc", "acb"):
        raise FeederSyntaxError("rotation must be 'abc' or 'acb'", header["rotation"][1])
    try:
        base_kva = float(hval("base_kva", "1000"))
        base_kv = float(hval("base_kv", "2.4018"))
    except ValueError:
        raise FeederSyntaxError("bad base value", 1) from None

    codes: dict[str, tuple[str, str, np.ndarray]] = {}
    for row in tables.get("linecodes", []):
        cid = row.get("id")
        if cid in codes:
            raise DuplicateIdError(f"line {row.lineno}: duplicate linecode {cid!r}")
        try:
            ph = canonical_phases(row.get("phases"))
        except ValueError as e:
            raise row.err("phases", str(e)) from None
        unit = row.get("unit")
        if unit not in _LENGTH_UNITS and unit != "each":
            raise row.err("unit", f"unknown unit {unit!r}")
        codes[cid] = (ph, unit, _parse_matrix(row, ph))

    buses: dict[str, Bus] = {}
    for row in tables.get("buses", []):
        bid = row.get("id")
        if bid in buses:
            raise DuplicateIdError(f"line {row.lineno}: duplicate bus {bid!r}")
        try:
            ph = canonical_phases(row.get("phases"))
        except ValueError as e:
            raise row.err("phases", str(e)) from None

        def bounds(key, default):
            v = row.get(key)
            if v is None:
                return (default,) * len(ph)
            try:
                vals = tuple(float(x) for x in v.split(","))
            except ValueError:
                raise row.err(key, f"bad {key} {v!r}") from None
            if len(vals) == 1:
                vals = vals * len(ph)
            if len(vals) != len(ph):
                raise row.err(key, f"{key} needs 1 or {len(ph)} values")
            return vals

        ref = (row.get("ref", "no") or "no").lower() in ("yes", "true", "1")
        buses[bid] = Bus(bid, ph, bounds("vmin", 0.95), bounds("vmax", 1.05), ref, row.get("mg"))

    lines: dict[str, Line] = {}
    seen_pairs: dict[frozenset, str] = {}
    for row in tables.get("lines", []):
        lid = row.get("id")
        if lid in lines:
            raise DuplicateIdError(f"line {row.lineno}: duplicate line {lid!r}")
        f, t = row.get("from"), row.get("to")
        for key, b in (("from", f), ("to", t)):
            if b not in buses:
                raise FeederReferenceError(f"line {row.lineno}: line {lid!r} references unknown bus {b!r}")
        code = row.get("code")
        if code not in codes:
            raise FeederReferenceError(f"line {row.lineno}: line {lid!r} references unknown linecode {code!r}")
        ph, unit, zc = codes[code]
        z = zc * _parse_length(row, unit)
        kind = row.get("kind", "fixed")
        if kind not in LINE_KINDS:
            raise row.err("kind", f"line kind must be one of {LINE_KINDS}")
        state = row.get("state", "closed")
        if state not in LINE_STATES:
            raise row.err("state", f"line state must be one of {LINE_STATES}")
        amp = row.number("ampacity", math.inf)
        pair = frozenset((f, t))
        if pair in seen_pairs:
            raise DuplicateIdError(f"line {row.lineno}: parallel line {lid!r} duplicates {seen_pairs[pair]!r}")
        seen_pairs[pair] = lid
        lines[lid] = Line(lid, f, t, ph, z, amp, row.number("flow_limit"), kind, state)

    loads: dict[str, Load] = {}
    for row in tables.get("loads", []):
        bus = row.get("bus")
        if bus not in buses:
            raise FeederReferenceError(f"line {row.lineno}: load references unknown bus {bus!r}")
        lid = row.get("id", bus)
        if lid in loads:
            raise DuplicateIdError(f"line {row.lineno}: duplicate load {lid!r}")
        try:
            level = int(row.get("level"))
        except (TypeError, ValueError):
            raise row.err("level", "level must be an integer") from None
        if not 1 <= level <= len(weights):
            raise row.err("level", f"level {level} outside 1..{len(weights)}")
        raw: dict[str, complex] = {}
        for ph in PHASES:
            p, q = row.number("p" + ph), row.number("q" + ph)
            if p is None and q is None:
                continue
            raw[ph] = complex(p or 0.0, q or 0.0)
        conn = row.get("conn", "wye")
        if conn not in ("wye", "delta"):
            raise row.err("conn", "conn must be 'wye' or 'delta'")
        demand = _delta_to_wye(raw) if conn == "delta" else raw
        loads[lid] = Load(lid, bus, level, dict(sorted(demand.items())))

    sources: dict[str, Source] = {}
    for row in tables.get("sources", []):
        sid = row.get("id")
        if sid in sources:
            raise DuplicateIdError(f"line {row.lineno}: duplicate source {sid!r}")
        bus = row.get("bus")
        if bus not in buses:
            raise FeederReferenceError(f"line {row.lineno}: source {sid!r} references unknown bus {bus!r}")
        kind = row.get("kind")
        if kind not in SOURCE_KINDS:
            raise row.err("kind", f"source kind must be one of {SOURCE_KINDS}")
        p = row.number("p_rate")
        q = row.number("q_rate", p)
        sources[sid] = Source(sid, bus, kind, p, q, row.get("mg"))

    return Network(
        name=hval("feeder", "unnamed"),
        buses=buses,
        lines=lines,
        loads=loads,
        sources=sources,
        weights=weights,
        base_kva=base_kva,
        base_kv=base_kv,
        rotation=rotation,
    )


def load_feeder(path: str | Path) -> Network:
    return parse_feeder(Path(path).read_text(encoding="utf-8"))


def load_event(path: str | Path) -> EventSpec:
    return EventSpec.from_json(Path(path).read_text(encoding="utf-8"))


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else repr(float(x))


def _fmt_c(z: complex) -> str:
    return f"{z.real!r}{z.imag:+}j"


def serialize_feeder(net: Network) -> str:
    """Write ``net`` in canonical form: wye loads, one lumped linecode per line."""
    out = [
        f"feeder = {net.name}",
        f"format = {FORMAT_VERSION}",
        f"base_kva = {net.base_kva!r}",
        f"base_kv = {net.base_kv!r}",
        f"rotation = {net.rotation}",
        "levels = " + " ".join(repr(w) for w in net.weights),
        "",
        "[linecodes]",
        "id phases unit z",
    ]
    for ln in net.lines.values():
        n = len(ln.phases)
        ut = ",".join(_fmt_c(complex(ln.z[i, j])) for i in range(n) for j in range(i, n))
        out.append(f"L:{ln.id} {ln.phases} each {ut}")
    out += ["", "[buses]", "id phases vmin vmax ref mg"]
    for b in net.buses.values():
        out.append(
            f"{b.id} {b.phases} {','.join(map(repr, b.vmin))} {','.join(map(repr, b.vmax))} "
            f"{'yes' if b.is_reference else 'no'} {b.microgrid or '-'}"
        )
    out += ["", "[lines]", "id from to code length kind state ampacity flow_limit"]
    for ln in net.lines.values():
        fl = "-" if ln.flow_limit is None else _fmt(ln.flow_limit)
        out.append(f"{ln.id} {ln.from_bus} {ln.to_bus} L:{ln.id} 1 {ln.kind} {ln.state} {_fmt(ln.ampacity)} {fl}")
    out += ["", "[loads]", "id bus level conn pa qa pb qb pc qc"]
    for ld in net.loads.values():
        cells = []
        for ph in PHASES:
            s = ld.demand.get(ph)
            cells += ["-", "-"] if s is None else [repr(s.real), repr(s.imag)]
        out.append(f"{ld.id} {ld.bus} {ld.level} wye " + " ".join(cells))
    out += ["", "[sources]", "id bus kind p_rate q_rate mg"]
    for s in net.sources.values():
        out.append(f"{s.id} {s.bus} {s.kind} {s.p_rate!r} {s.q_rate!r} {s.microgrid or '-'}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# validation and events
# ---------------------------------------------------------------------------


def validate_network(net: Network) -> ValidationReport:
    rep = ValidationReport()
    w = net.weights
    if any(b >= a for a, b in zip(w, w[1:])):
        rep.entries.append(f"weights not strictly decreasing: {w}")
    if w and w[-1] < 0:
        rep.entries.append(f"negative weight: {w[-1]}")
    for b in net.buses.values():
        for ph, lo, hi in zip(b.phases, b.vmin, b.vmax):
            if lo > hi:
                rep.entries.append(f"bus {b.id} phase {ph}: vmin {lo} > vmax {hi}")
        if b.is_reference and (any(v != 1.0 for v in b.vmin) or any(v != 1.0 for v in b.vmax)):
            rep.entries.append(f"reference bus {b.id} must have vmin = vmax = 1")
    pairs: dict[frozenset, str] = {}
    for ln in net.lines.values():
        for b in ln.endpoints():
            if b not in net.buses:
                rep.entries.append(f"line {ln.id}: unknown bus {b}")
        if ln.from_bus == ln.to_bus:
            rep.entries.append(f"line {ln.id}: self loop")
        key = frozenset(ln.endpoints())
        if key in pairs:
            rep.entries.append(f"line {ln.id}: parallel to {pairs[key]}")
        pairs[key] = ln.id
        n = len(ln.phases)
        if ln.z.shape != (n, n):
            rep.entries.append(f"line {ln.id}: impedance is {ln.z.shape}, phases {ln.phases!r}")
        if not ln.ampacity > 0:
            rep.entries.append(f"line {ln.id}: ampacity must be positive")
        for b in ln.endpoints():
            if b in net.buses and not set(ln.phases) <= set(net.buses[b].phases):
                rep.entries.append(f"line {ln.id}: phases {ln.phases} not on bus {b} ({net.buses[b].phases})")
    for ld in net.loads.values():
        if ld.bus not in net.buses:
            rep.entries.append(f"load {ld.id}: unknown bus {ld.bus}")
            continue
        if not set(ld.phases) <= set(net.buses[ld.bus].phases):
            rep.entries.append(f"load {ld.id}: phase mismatch, demand on {ld.phases} but bus {ld.bus} has {net.buses[ld.bus].phases}")
        if not 1 <= ld.level <= len(w):
            rep.entries.append(f"load {ld.id}: level {ld.level} outside 1..{len(w)}")
    for s in net.sources.values():
        if s.bus not in net.buses:
            rep.entries.append(f"source {s.id}: unknown bus {s.bus}")
        if s.p_rate < 0 or s.q_rate < 0:
            rep.entries.append(f"source {s.id}: negative rating")
        if s.kind not in SOURCE_KINDS:
            rep.entries.append(f"source {s.id}: unknown kind {s.kind}")
    return rep


def apply_event(net: Network, ev: EventSpec) -> PostEventNetwork:
    """Remove faulted lines, unavailable sources and the utility infeed."""
    for lid in ev.faulted_lines:
        if lid not in net.lines:
            raise FeederReferenceError(f"event references unknown line {lid!r}")
    for sid in ev.unavailable_sources:
        if sid not in net.sources:
            raise FeederReferenceError(f"event references unknown source {sid!r}")
    faulted = set(ev.faulted_lines)
    lines = {k: v for k, v in net.lines.items() if k not in faulted and v.state != "faulted"}
    drop = set(ev.unavailable_sources)
    sources = {k: v for k, v in net.sources.items() if k not in drop and v.kind != "utility"}
    return PostEventNetwork(replace(net, lines=lines, sources=sources), ev)


def restrict(net: Network, buses: Iterable[str]) -> Network:
    """Sub-network induced by ``buses``."""
    keep = set(buses)
    return replace(
        net,
        buses={k: v for k, v in net.buses.items() if k in keep},
        lines={k: v for k, v in net.lines.items() if v.from_bus in keep and v.to_bus in keep},
        loads={k: v for k, v in net.loads.items() if v.bus in keep},
        sources={k: v for k, v in net.sources.items() if v.bus in keep},
    )
