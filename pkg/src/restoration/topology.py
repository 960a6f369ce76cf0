"""Target islands and the minimum-diameter spanning tree (stage 1).

The MDST is built the classical way: all-pairs shortest paths, the absolute
1-center of the graph (the point, possibly interior to an edge, minimising
the largest distance to any vertex), then the shortest-path tree grown from
that point.  The tree's diameter is twice the absolute radius, which is the
minimum over all spanning trees.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .netmodel import Line, Network, PostEventNetwork, natural_key, restrict

# relative slack used when comparing path lengths built from float sums
_REL = 1e-12


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Edge:
    id: str
    u: str
    v: str
    length: float


@dataclass(frozen=True)
class IslandGraph:
    id: str
    vertices: tuple[str, ...]
    edges: tuple[Edge, ...]
    sources: tuple[str, ...] = ()
    network: Network | None = field(default=None, compare=False, repr=False)

    @property
    def restorable(self) -> bool:
        return bool(self.sources)

    def edge(self, eid: str) -> Edge:
        for e in self.edges:
            if e.id == eid:
                return e
        raise KeyError(eid)

    @classmethod
    def from_edges(cls, edges, vertices=None, id: str = "g") -> "IslandGraph":
        """Convenience constructor from ``(u, v, length)`` or ``(id, u, v, length)`` tuples."""
        out = []
        for k, e in enumerate(edges):
            if len(e) == 3:
                u, v, w = e
                eid = f"{u}-{v}"
            else:
                eid, u, v, w = e
            out.append(Edge(str(eid), str(u), str(v), float(w)))
        verts = set(vertices or ())
        for e in out:
            verts.update((e.u, e.v))
        return cls(id, tuple(sorted(verts, key=natural_key)), tuple(out))


@dataclass(frozen=True)
class SpanningTree:
    island: str
    edges: tuple[str, ...]
    diameter: float
    # switchable lines of the island mapped to "close"/"open"
    actions: dict[str, str] = field(default_factory=dict)
    # fixed (non-switchable) lines the tree leaves out; empty on sane feeders
    opened_fixed: tuple[str, ...] = ()
    # absolute center: (edge id, offset from edge.u) or (None, 0) for a vertex center
    center: tuple[str | None, float] = (None, 0.0)
    root: str | None = None
    parent: dict[str, tuple[str, str]] = field(default_factory=dict)  # bus -> (parent bus, line id)

    def closed_switches(self) -> list[str]:
        return sorted((k for k, a in self.actions.items() if a == "close"), key=natural_key)

    def open_switches(self) -> list[str]:
        return sorted((k for k, a in self.actions.items() if a == "open"), key=natural_key)

    def oriented(self) -> list[tuple[str, str, str]]:
        """Tree lines as ``(line id, upstream bus, downstream bus)`` in BFS order from the root."""
        children: dict[str, list[tuple[str, str]]] = {}
        for b, (p, lid) in self.parent.items():
            children.setdefault(p, []).append((b, lid))
        out, queue = [], [self.root] if self.root is not None else []
        while queue:
            p = queue.pop(0)
            for b, lid in sorted(children.get(p, []), key=lambda t: natural_key(t[0])):
                out.append((lid, p, b))
                queue.append(b)
        return out


def electrical_distance(line: Line) -> float:
    """Mean magnitude of the per-phase self impedances (ohm)."""
    z = np.atleast_2d(np.asarray(line.z, dtype=complex))
    return float(np.mean(np.abs(np.diag(z))))


def find_target_islands(net: PostEventNetwork | Network) -> list[IslandGraph]:
    """Connected components over the energizable lines; sourceless ones are unrestorable."""
    base = net.network if isinstance(net, PostEventNetwork) else net
    buses = sorted(base.buses, key=natural_key)
    index = {b: k for k, b in enumerate(buses)}
    lines = [ln for ln in base.lines.values() if ln.energizable]
    n = len(buses)
    if n == 0:
        return []
    rows = [index[ln.from_bus] for ln in lines]
    cols = [index[ln.to_bus] for ln in lines]
    adj = csr_matrix((np.ones(len(lines)), (rows, cols)), shape=(n, n))
    _, labels = connected_components(adj, directed=False)
    groups: dict[int, list[str]] = {}
    for b in buses:
        groups.setdefault(int(labels[index[b]]), []).append(b)
    islands = []
    for members in sorted(groups.values(), key=lambda m: natural_key(m[0])):
        sub = restrict(base, members)
        edges = tuple(
            Edge(ln.id, ln.from_bus, ln.to_bus, electrical_distance(ln))
            for ln in sorted(sub.lines.values(), key=lambda l: natural_key(l.id))
            if ln.energizable
        )
        srcs = tuple(sorted(sub.sources, key=natural_key))
        islands.append(IslandGraph(f"island-{members[0]}", tuple(members), edges, srcs, sub))
    return islands


def _check_simple(g: IslandGraph) -> None:
    vs = set(g.vertices)
    for e in g.edges:
        if e.u not in vs or e.v not in vs:
            raise TopologyError(f"edge {e.id} leaves the vertex set")
        if e.length < 0 or not math.isfinite(e.length):
            raise TopologyError(f"edge {e.id} has invalid length {e.length}")


def _all_pairs(g: IslandGraph) -> tuple[dict[str, int], np.ndarray]:
    index = {v: k for k, v in enumerate(g.vertices)}
    n = len(g.vertices)
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0.0)
    for e in g.edges:
        i, j = index[e.u], index[e.v]
        if i != j and e.length < d[i, j]:
            d[i, j] = d[j, i] = e.length
    # Floyd-Warshall keeps zero-length edges exact (csgraph drops explicit zeros)
    for k in range(n):
        np.minimum(d, d[:, k : k + 1] + d[k : k + 1, :], out=d)
    return index, d


def is_connected(g: IslandGraph) -> bool:
    if len(g.vertices) <= 1:
        return True
    _, d = _all_pairs(g)
    return bool(np.isfinite(d).all())


def _edge_center(a: np.ndarray, b: np.ndarray, length: float) -> tuple[float, float]:
    """Minimise f(t) = max_x min(a_x + t, b_x + length - t) over t in [0, length]."""
    # dominance pruning: sort by a descending; keep points whose b beats all before
    order = np.lexsort((-b, -a))
    frontier = []
    best_b = -np.inf
    for k in order:
        if b[k] > best_b:
            frontier.append(k)
            best_b = b[k]
    cands = [0.0, length]
    for p, q in zip(frontier, frontier[1:]):
        t = 0.5 * (b[p] + length - a[q])
        if 0.0 < t < length:
            cands.append(t)
    ts = np.array(cands)
    f = np.max(np.minimum(a[None, :] + ts[:, None], b[None, :] + length - ts[:, None]), axis=1)
    k = int(np.argmin(f))
    return float(ts[k]), float(f[k])


def absolute_center(g: IslandGraph) -> tuple[str | None, float, str | float, float]:
    """Return ``(edge id, t, anchor, radius)``; vertex centers come back with edge id None."""
    _check_simple(g)
    index, d = _all_pairs(g)
    if not np.isfinite(d).all():
        raise TopologyError(f"graph {g.id} is disconnected")
    ecc = d.max(axis=1)
    best_v = min(g.vertices, key=lambda v: (ecc[index[v]], natural_key(v)))
    best = (None, 0.0, best_v, float(ecc[index[best_v]]))
    for e in sorted(g.edges, key=lambda e: natural_key(e.id)):
        if e.u == e.v:
            continue
        t, r = _edge_center(d[index[e.u]], d[index[e.v]], e.length)
        if r < best[3] * (1 - 1e-12) - 1e-15:
            best = (e.id, t, e.u, r)
    return best


def _tree_from_point(g: IslandGraph, eid: str | None, t: float, anchor: str) -> tuple[list[str], dict]:
    """Shortest-path tree from a point; ties go to the smallest line id."""
    adj: dict[str, list[Edge]] = {v: [] for v in g.vertices}
    for e in g.edges:
        if e.u != e.v:
            adj[e.u].append(e)
            adj[e.v].append(e)
    dist = {v: math.inf for v in g.vertices}
    via: dict[str, tuple[str, str] | None] = {}
    heap: list = []
    if eid is None:
        dist[anchor] = 0.0
        via[anchor] = None
        heapq.heappush(heap, (0.0, natural_key(anchor), anchor))
    else:
        e = g.edge(eid)
        dist[e.u], dist[e.v] = t, e.length - t
        via[e.u] = via[e.v] = None
        heapq.heappush(heap, (dist[e.u], natural_key(e.u), e.u))
        heapq.heappush(heap, (dist[e.v], natural_key(e.v), e.v))
    done = set()
    while heap:
        du, _, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for e in sorted(adj[u], key=lambda e: natural_key(e.id)):
            if eid is not None and e.id == eid:
                continue
            w = e.v if e.u == u else e.u
            if w in done:
                continue
            nd = du + e.length
            cur = dist[w]
            tol = _REL * max(1.0, abs(cur) if math.isfinite(cur) else 1.0)
            if nd < cur - tol:
                dist[w] = nd
                via[w] = (u, e.id)
                heapq.heappush(heap, (nd, natural_key(w), w))
            elif abs(nd - cur) <= tol and via.get(w) is not None:
                # equal-length alternative: prefer the smaller line id
                if natural_key(e.id) < natural_key(via[w][1]):
                    via[w] = (u, e.id)
    edges = [p[1] for p in via.values() if p is not None]
    if eid is not None:
        edges.append(eid)
    return edges, via


def tree_diameter(t: "SpanningTree | IslandGraph", g: IslandGraph | None = None) -> float:
    """Longest shortest-path distance between two vertices."""
    if isinstance(t, SpanningTree):
        if g is None:
            raise TopologyError("tree_diameter of a SpanningTree needs its island graph")
        keep = set(t.edges)
        sub = IslandGraph(g.id, g.vertices, tuple(e for e in g.edges if e.id in keep))
    else:
        sub = t
    if len(sub.vertices) <= 1:
        return 0.0
    _, d = _all_pairs(sub)
    if not np.isfinite(d).all():
        raise TopologyError(f"graph {sub.id} is disconnected")
    return float(d.max())


def minimum_diameter_spanning_tree(g: IslandGraph) -> SpanningTree:
    _check_simple(g)
    if not is_connected(g):
        raise TopologyError(f"graph {g.id} is disconnected")
    if len(g.vertices) == 1:
        return SpanningTree(g.id, (), 0.0, _actions(g, set()), (), (None, 0.0), g.vertices[0], {})
    eid, t, anchor, radius = absolute_center(g)
    edges, via = _tree_from_point(g, eid, t, anchor)
    keep = set(edges)
    diam = tree_diameter(IslandGraph(g.id, g.vertices, tuple(e for e in g.edges if e.id in keep)))
    keep = _lex_smallest(g, keep, diam)
    # root the tree at the vertex nearest the center; lines point away from it
    if eid is None:
        root = anchor
    else:
        e = g.edge(eid)
        root = e.u if t <= e.length - t else e.v
    parent = _orient(g, keep, root)
    return SpanningTree(
        g.id,
        tuple(sorted(keep, key=natural_key)),
        diam,
        _actions(g, keep),
        _opened_fixed(g, keep),
        (eid, t),
        root,
        parent,
    )


def _tree_adj(g: IslandGraph, keep: set[str]) -> dict[str, list[tuple[str, Edge]]]:
    adj: dict[str, list[tuple[str, Edge]]] = {v: [] for v in g.vertices}
    for e in g.edges:
        if e.id in keep:
            adj[e.u].append((e.v, e))
            adj[e.v].append((e.u, e))
    return adj


def _fast_diameter(g: IslandGraph, keep: set[str]) -> float:
    # double sweep, exact on trees
    adj = _tree_adj(g, keep)

    def far(src):
        dist = {src: 0.0}
        stack = [src]
        while stack:
            x = stack.pop()
            for y, e in adj[x]:
                if y not in dist:
                    dist[y] = dist[x] + e.length
                    stack.append(y)
        v = max(dist, key=dist.get)
        return v, dist[v]

    a, _ = far(g.vertices[0])
    return far(a)[1]


def _tree_path(adj, u: str, v: str) -> list[str]:
    prev: dict[str, tuple[str, str] | None] = {u: None}
    stack = [u]
    while stack:
        x = stack.pop()
        if x == v:
            break
        for y, e in adj[x]:
            if y not in prev:
                prev[y] = (x, e.id)
                stack.append(y)
    path = []
    while prev[v] is not None:
        x, lid = prev[v]
        path.append(lid)
        v = x
    return path


def _lex_smallest(g: IslandGraph, keep: set[str], diam: float) -> set[str]:
    """Equal-diameter edge swaps toward the lexicographically smallest sorted id list.

    Each accepted swap trades a tree edge for a smaller-id non-tree edge on
    its fundamental cycle, so the sorted list strictly decreases and the loop
    ends.  The result is 1-swap minimal.
    """
    limit = diam + _REL * max(1.0, diam)
    keep = set(keep)
    while True:
        adj = _tree_adj(g, keep)
        best = None
        for e in sorted((e for e in g.edges if e.id not in keep and e.u != e.v), key=lambda e: natural_key(e.id)):
            for f in _tree_path(adj, e.u, e.v):
                if not natural_key(e.id) < natural_key(f):
                    continue
                cand = (keep - {f}) | {e.id}
                if _fast_diameter(g, cand) > limit:
                    continue
                key = sorted(cand, key=natural_key)
                if best is None or [natural_key(x) for x in key] < [natural_key(x) for x in best[0]]:
                    best = (key, cand)
        if best is None:
            return keep
        keep = best[1]


def tree_from_edges(g: IslandGraph, edge_ids, root: str | None = None) -> SpanningTree:
    """Wrap an explicit edge set (e.g. a user-supplied topology) as a SpanningTree."""
    keep = set(edge_ids)
    if root is None:
        root = g.vertices[0]
    t = SpanningTree(g.id, tuple(sorted(keep, key=natural_key)), 0.0)
    if not validate_radial(t, g):
        raise TopologyError("edge set is not a spanning tree of the island")
    diam = tree_diameter(t, g)
    return SpanningTree(
        g.id, t.edges, diam, _actions(g, keep), _opened_fixed(g, keep), (None, 0.0), root, _orient(g, keep, root)
    )


def _orient(g: IslandGraph, keep: set[str], root: str) -> dict[str, tuple[str, str]]:
    adj: dict[str, list[tuple[str, str]]] = {v: [] for v in g.vertices}
    for e in g.edges:
        if e.id in keep:
            adj[e.u].append((e.v, e.id))
            adj[e.v].append((e.u, e.id))
    parent = {}
    seen = {root}
    queue = [root]
    while queue:
        u = queue.pop(0)
        for w, lid in sorted(adj[u], key=lambda p: natural_key(p[1])):
            if w not in seen:
                seen.add(w)
                parent[w] = (u, lid)
                queue.append(w)
    return parent


def _line_kind(g: IslandGraph, eid: str) -> str:
    if g.network is not None and eid in g.network.lines:
        return g.network.lines[eid].kind
    return "switch"


def _actions(g: IslandGraph, keep: set[str]) -> dict[str, str]:
    return {
        e.id: ("close" if e.id in keep else "open")
        for e in g.edges
        if _line_kind(g, e.id) in ("switch", "tie")
    }


def _opened_fixed(g: IslandGraph, keep: set[str]) -> tuple[str, ...]:
    if g.network is None:
        return ()
    return tuple(
        sorted((e.id for e in g.edges if e.id not in keep and _line_kind(g, e.id) == "fixed"), key=natural_key)
    )


def validate_radial(t: SpanningTree, g: IslandGraph) -> bool:
    """True iff ``t`` uses island edges only and spans ``g`` without cycles."""
    ids = {e.id: e for e in g.edges}
    if len(set(t.edges)) != len(t.edges) or any(eid not in ids for eid in t.edges):
        return False
    if len(t.edges) != len(g.vertices) - 1:
        return False
    # union-find: n-1 edges and no cycle means connected
    rep = {v: v for v in g.vertices}

    def find(x):
        while rep[x] != x:
            rep[x] = rep[rep[x]]
            x = rep[x]
        return x

    for eid in t.edges:
        e = ids[eid]
        a, b = find(e.u), find(e.v)
        if a == b:
            return False
        rep[a] = b
    return True
