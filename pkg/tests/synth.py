"""Small synthetic feeders for tests: balanced three-phase radial networks."""

from __future__ import annotations

import itertools
import math

import numpy as np

from restoration.netmodel import parse_feeder

# symmetric per-mile impedance (self, mutual)
ZS, ZM = 0.30 + 0.60j, 0.10 + 0.25j


def _sym(zs: complex, zm: complex) -> str:
    return ",".join(str(v) for v in (zs, zm, zm, zs, zm, zs))


def balanced_feeder_text(
    rng: np.random.Generator,
    n_bus: int = 6,
    n_loads: int = 5,
    n_sources: int = 2,
    zero_impedance: bool = False,
    extra_edges: int = 0,
    levels: tuple[float, ...] = (100.0, 10.0, 1.0),
    capacity: float = 0.6,
) -> str:
    """Random balanced feeder; total source rating is ``capacity`` times total load."""
    buses = [f"b{k}" for k in range(1, n_bus + 1)]
    edges = []
    for k in range(1, n_bus):
        edges.append((buses[int(rng.integers(0, k))], buses[k]))
    pairs = {frozenset(e) for e in edges}
    tries = 0
    while len(edges) < n_bus - 1 + extra_edges and tries < 100:
        tries += 1
        u, v = rng.choice(buses, 2, replace=False)
        if frozenset((u, v)) not in pairs:
            pairs.add(frozenset((u, v)))
            edges.append((str(u), str(v)))
    load_buses = [str(b) for b in rng.choice(buses, size=min(n_loads, n_bus), replace=False)]
    demand = {b: float(rng.integers(20, 120)) for b in load_buses}
    total = 3 * sum(demand.values())
    src_buses = [str(b) for b in rng.choice(buses, size=n_sources, replace=False)]
    share = rng.dirichlet(np.ones(n_sources)) * capacity * total
    code = "z0" if zero_impedance else "zb"
    out = [
        "feeder = synth",
        "format = 1",
        "base_kva = 1000",
        "base_kv = 2.4018",
        "levels = " + " ".join(repr(w) for w in levels),
        "",
        "[linecodes]",
        "id phases unit z",
        f"z0 abc each {_sym(0j, 0j)}",
        f"zb abc mile {_sym(ZS, ZM)}",
        "",
        "[buses]",
        "id phases vmin vmax",
    ]
    out += [f"{b} abc 0.95 1.05" for b in buses]
    out += ["", "[lines]", "id from to code length kind state"]
    for k, (u, v) in enumerate(edges):
        kind = "fixed" if k < n_bus - 1 else "tie"
        state = "closed" if kind == "fixed" else "open"
        length = "1" if zero_impedance else f"{int(rng.integers(300, 2500))}ft"
        out.append(f"{u}-{v} {u} {v} {code} {length} {kind} {state}")
    out += ["", "[loads]", "id bus level conn pa qa pb qb pc qc"]
    for b in load_buses:
        p = demand[b]
        q = round(0.4 * p, 1)
        lvl = int(rng.integers(1, len(levels) + 1))
        out.append(f"{b} {b} {lvl} wye {p} {q} {p} {q} {p} {q}")
    out += ["", "[sources]", "id bus kind p_rate q_rate"]
    for k, (b, s) in enumerate(zip(src_buses, share)):
        out.append(f"G{k + 1} {b} diesel {s:.1f} {s:.1f}")
    return "\n".join(out) + "\n"


def balanced_feeder(rng, **kw):
    return parse_feeder(balanced_feeder_text(rng, **kw))


def lossless_optima(net) -> list[frozenset[str]]:
    """Maximum-weight load sets under aggregate P/Q capacity only (exact for zero impedance)."""
    loads = sorted(net.loads.values(), key=lambda l: l.id)
    p_cap = sum(s.p_rate for s in net.sources.values())
    q_cap = sum(s.q_rate for s in net.sources.values())
    best, sets = -math.inf, []
    for bits in itertools.product((0, 1), repeat=len(loads)):
        chosen = [l for l, b in zip(loads, bits) if b]
        p = sum(d.real for l in chosen for d in l.demand.values())
        q = sum(d.imag for l in chosen for d in l.demand.values())
        if p > p_cap * (1 - 1e-6) or q > q_cap * (1 - 1e-6):
            continue
        w = math.fsum(net.weights[l.level - 1] for l in chosen)
        if w > best + 1e-9:
            best, sets = w, [frozenset(l.id for l in chosen)]
        elif abs(w - best) <= 1e-9:
            sets.append(frozenset(l.id for l in chosen))
    return sets
