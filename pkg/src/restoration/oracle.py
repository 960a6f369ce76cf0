"""Brute-force ground truth for small instances.

``brute_force_clr`` enumerates load-status vectors in descending order of
weighted value and tests each with a fixed-status SDP solve (the same
relaxation and exactness threshold the engine uses).  ``brute_force_mdst``
enumerates spanning trees by deleting every subset of cyclomatic-number
edges.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .conic import SolverSettings, solve_conic
from .engine import WeightScheme
from .models import RANK_THRESHOLD, ModelOptions, build_clr_sdp, rank1_ratio
from .netmodel import natural_key
from .topology import IslandGraph, SpanningTree, TopologyError, is_connected


class OracleLimitError(ValueError):
    pass


@dataclass
class OracleResult:
    gammas: list[dict[str, int]]
    objective: float
    examined: int
    feasible: int = 0
    statuses: dict[tuple[int, ...], str] = field(default_factory=dict, repr=False)

    @property
    def gamma(self) -> dict[str, int]:
        return self.gammas[0] if self.gammas else {}


def _feasible(args) -> tuple[bool, str]:
    island, tree, weights, fixes, settings, options, threshold = args
    prog, vm = build_clr_sdp(island, tree, weights, fixes, options, objective="min_generation")
    sol = solve_conic(prog, settings)
    if not sol.optimal:
        return False, sol.status
    r = rank1_ratio(sol, vm)
    return r <= threshold, "optimal" if r <= threshold else "inexact"


def brute_force_clr(
    island: IslandGraph,
    tree: SpanningTree,
    ws=None,
    max_loads: int = 16,
    settings: SolverSettings | None = None,
    options: ModelOptions | None = None,
    threshold: float = RANK_THRESHOLD,
    workers: int = 1,
) -> OracleResult:
    """All maximum-weight feasible status vectors.

    Vectors are grouped by value and tested group by group from the top;
    the first group holding a feasible vector is the answer, so lower groups
    are never solved.
    """
    net = island.network
    loads = sorted(net.loads, key=natural_key) if net is not None else []
    if len(loads) > max_loads:
        raise OracleLimitError(f"{len(loads)} loads exceed the oracle limit {max_loads}")
    ws = WeightScheme.of(ws if ws is not None else net.weights)
    w = [ws.w(net.loads[k].level) for k in loads]
    groups: dict[float, list[tuple[int, ...]]] = defaultdict(list)
    for bits in itertools.product((1, 0), repeat=len(loads)):
        groups[math.fsum(wi for wi, b in zip(w, bits) if b)].append(bits)
    settings = settings or SolverSettings()
    res = OracleResult([], 0.0, 0)
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        for value in sorted(groups, reverse=True):
            batch = groups[value]
            jobs = [(island, tree, ws.weights, dict(zip(loads, bits)), settings, options, threshold) for bits in batch]
            outcomes = list(pool.map(_feasible, jobs)) if pool else [_feasible(j) for j in jobs]
            res.examined += len(batch)
            for bits, (ok, status) in zip(batch, outcomes):
                res.statuses[bits] = status
                if ok:
                    res.feasible += 1
                    res.gammas.append(dict(zip(loads, bits)))
            if res.gammas:
                res.objective = value
                break
    finally:
        if pool:
            pool.shutdown()
    return res


def _diameter(vertices, edges) -> float:
    # double sweep; exact on trees with nonnegative lengths
    adj = defaultdict(list)
    for e in edges:
        adj[e.u].append((e.v, e.length))
        adj[e.v].append((e.u, e.length))

    def far(src):
        dist = {src: 0.0}
        stack = [src]
        while stack:
            x = stack.pop()
            for y, l in adj[x]:
                if y not in dist:
                    dist[y] = dist[x] + l
                    stack.append(y)
        if len(dist) != len(vertices):
            return None, -1.0
        v = max(dist, key=dist.get)
        return v, dist[v]

    a, _ = far(vertices[0])
    if a is None:
        return math.inf
    return far(a)[1]


def brute_force_mdst(g: IslandGraph, max_extra_edges: int = 8) -> float:
    """Minimum diameter over every spanning tree of ``g``."""
    n, m = len(g.vertices), len(g.edges)
    if n == 0:
        raise TopologyError("empty graph")
    if not is_connected(g):
        raise TopologyError(f"graph {g.id} is disconnected")
    extra = m - n + 1
    if extra > max_extra_edges:
        raise OracleLimitError(f"{extra} non-tree edges exceed the oracle limit {max_extra_edges}")
    best = math.inf
    for drop in itertools.combinations(range(m), extra):
        gone = set(drop)
        kept = [e for k, e in enumerate(g.edges) if k not in gone]
        best = min(best, _diameter(g.vertices, kept))
    return best
