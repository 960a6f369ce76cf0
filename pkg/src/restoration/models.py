"""Restoration formulations over a chosen radial topology.

Three builders share one variable layout convention:

* ``build_clr_sdp``    multiphase branch-flow SDP relaxation (rank constraint dropped)
* ``build_clr_misocp`` single-phase / balanced branch-flow SOCP
* ``build_clr_milp``   lossless linearised multiphase flow

Everything is assembled in per unit: power on ``base_kva`` per phase, voltage
on ``base_kv`` line-to-neutral.  Load statuses are continuous in [0, 1] for the
SDP and binary (or relaxed on request) for the other two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .conic import Affine, CMatrix, ConicProgram, ConicSolution
from .netmodel import PHASES, Load, Network, natural_key
from .topology import IslandGraph, SpanningTree, validate_radial

ALPHA = np.exp(-2j * np.pi / 3)
DELTA = np.array(
    [[1, ALPHA**2, ALPHA], [ALPHA, 1, ALPHA**2], [ALPHA**2, ALPHA, 1]],
    dtype=complex,
)

RANK_THRESHOLD = 1e-4


class ModelError(ValueError):
    pass


class UnbalancedNetworkError(ModelError):
    pass


class RecoveryError(ModelError):
    pass


@dataclass(frozen=True)
class ModelOptions:
    # regularisation added to the restoration objective, relative to the smallest weight
    gen_penalty: float = 1e-3
    current_penalty: float = 1e-5
    pv_mode: str = "fixed"  # or "curtailable"
    reference: str | None = None
    # CLR-misocp loss weight; None means 1e-3 times the smallest level weight
    w0: float | None = None
    relax_binaries: bool = False


@dataclass
class VarMap:
    kind: str
    network: Network
    tree: SpanningTree
    reference: str
    weights: tuple[float, ...]
    bus_phases: dict[str, str]  # energized phases only; dead buses are absent
    lines: list[tuple[str, str, str, str]]  # (line id, from, to, energized phases), oriented
    z_pu: dict[str, np.ndarray]
    zbase: float
    ibase: float
    gamma: dict[str, Affine] = field(default_factory=dict)
    gen_p: dict[str, Affine] = field(default_factory=dict)  # per phase of the source bus
    gen_q: dict[str, Affine] = field(default_factory=dict)
    V: dict[str, object] = field(default_factory=dict)  # CMatrix (sdp) / Affine (milp diag, socp scalar)
    S: dict[str, object] = field(default_factory=dict)
    I: dict[str, object] = field(default_factory=dict)  # sdp: CMatrix, socp: Affine (ell)
    Lam: dict[str, tuple[Affine, Affine]] = field(default_factory=dict)
    vsq_bounds: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    isq_max: dict[str, np.ndarray] = field(default_factory=dict)
    blocks: dict[str, CMatrix] = field(default_factory=dict)
    per_phase_scale: float = 1.0  # socp positive-sequence models: quantities are per phase
    dead_loads: frozenset[str] = frozenset()  # loads with a phase the tree cannot energize

    @property
    def buses(self) -> list[str]:
        return list(self.bus_phases)

    @property
    def load_ids(self) -> list[str]:
        return list(self.gamma)

    def load_weight(self, lid: str) -> float:
        return self.weights[self.network.loads[lid].level - 1]

    def gamma_values(self, sol: ConicSolution) -> dict[str, float]:
        return {k: float(sol.value(g)[0]) for k, g in self.gamma.items()}

    def weighted_sum(self, sol: ConicSolution) -> float:
        g = self.gamma_values(sol)
        return math.fsum(self.load_weight(k) * v for k, v in g.items())

    def symbols(self) -> list[str]:
        out = [f"gamma[{k}]" for k in self.gamma]
        out += [f"V[{k}]" for k in self.V]
        out += [f"S[{k}]" for k in self.S]
        out += [f"I[{k}]" for k in self.I]
        out += [f"Lambda[{k}]" for k in self.Lam]
        out += [f"gen[{k}]" for k in self.gen_p]
        return out


@dataclass
class PhasorProfile:
    reference: str
    voltages: dict[str, dict[str, complex]]  # p.u. phasors
    sources: dict[str, tuple[float, float]]  # kW, kvar
    losses: float  # kW
    currents: dict[str, dict[str, complex]] = field(default_factory=dict)  # p.u., oriented

    def magnitude(self, bus: str, phase: str) -> float:
        return abs(self.voltages[bus][phase])

    def angle(self, bus: str, phase: str) -> float:
        return math.degrees(np.angle(self.voltages[bus][phase]))

    def table(self) -> list[tuple[str, str, float, float]]:
        rows = []
        for bus in sorted(self.voltages, key=natural_key):
            for ph in PHASES:
                if ph in self.voltages[bus]:
                    rows.append((bus, ph, self.magnitude(bus, ph), self.angle(bus, ph)))
        return rows


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def level_weights(weights, net: Network) -> tuple[float, ...]:
    if weights is None:
        return tuple(net.weights)
    if hasattr(weights, "weights"):
        weights = weights.weights
    return tuple(float(w) for w in weights)


def choose_reference(net: Network, override: str | None = None) -> str:
    """Bus of the largest-rated source (ties: smallest bus id), unless overridden."""
    if override is not None:
        if override not in net.buses:
            raise ModelError(f"reference bus {override!r} not in island")
        return override
    marked = [b.id for b in net.buses.values() if b.is_reference]
    if marked:
        return sorted(marked, key=natural_key)[0]
    if not net.sources:
        raise ModelError("island has no source")
    best = min(net.sources.values(), key=lambda s: (-s.p_rate, natural_key(s.bus)))
    return best.bus


def _prepare(island: IslandGraph, tree: SpanningTree, weights, opts: ModelOptions):
    net = island.network
    if net is None:
        raise ModelError("island carries no network data")
    if not net.sources:
        raise ModelError(f"island {island.id} has no source")
    if not validate_radial(tree, island):
        raise ModelError(f"tree does not span island {island.id}")
    ws = level_weights(weights, net)
    for ld in net.loads.values():
        if not 1 <= ld.level <= len(ws):
            raise ModelError(f"load {ld.id} level {ld.level} outside the weight scheme")
    ref = choose_reference(net, opts.reference)
    zbase = net.base_kv**2 * 1000.0 / net.base_kva
    ibase = net.base_kva / net.base_kv
    live = energized_phases(net, tree, ref)
    oriented = []
    z_pu = {}
    for lid, i, j in tree.oriented():
        ln = net.lines[lid]
        ph = "".join(q for q in ln.phases if q in live[i])
        if not ph:
            continue
        keep = _idx(ph, ln.phases)
        oriented.append((lid, i, j, ph))
        z = np.atleast_2d(np.asarray(ln.z, dtype=complex)) / zbase
        z_pu[lid] = z[np.ix_(keep, keep)]
    bus_phases = {b: live[b] for b in island.vertices if live[b]}
    dead = frozenset(
        ld.id for ld in net.loads.values() if not set(ld.phases) <= set(live.get(ld.bus, ""))
    )
    vm = VarMap(
        kind="",
        network=net,
        tree=tree,
        reference=ref,
        weights=ws,
        bus_phases=bus_phases,
        lines=oriented,
        z_pu=z_pu,
        zbase=zbase,
        ibase=ibase,
        dead_loads=dead,
    )
    for b, ph in bus_phases.items():
        bus = net.buses[b]
        keep = _idx(ph, bus.phases)
        lo = np.array([bus.vmin[k] ** 2 for k in keep])
        hi = np.array([bus.vmax[k] ** 2 for k in keep])
        if b == ref:
            lo = hi = np.ones(len(ph))
        vm.vsq_bounds[b] = (lo, hi)
    for lid, _, _, ph in oriented:
        ln = net.lines[lid]
        if math.isfinite(ln.ampacity):
            vm.isq_max[lid] = np.full(len(ph), (ln.ampacity / ibase) ** 2)
    return net, vm


def energized_phases(net: Network, tree: SpanningTree, ref: str) -> dict[str, str]:
    """Phases of each bus reachable from the reference along tree lines carrying them."""
    live = {b: set() for b in net.buses}
    live[ref] = set(net.buses[ref].phases)
    adj: dict[str, list[tuple[str, str]]] = {b: [] for b in net.buses}
    for lid in tree.edges:
        ln = net.lines[lid]
        adj[ln.from_bus].append((ln.to_bus, ln.phases))
        adj[ln.to_bus].append((ln.from_bus, ln.phases))
    stack = [ref]
    while stack:
        x = stack.pop()
        for y, ph in adj[x]:
            new = (live[x] & set(ph)) - live[y]
            if new:
                live[y] |= new
                stack.append(y)
    return {b: "".join(q for q in net.buses[b].phases if q in live[b]) for b in net.buses}


def _sorted_loads(net: Network) -> list[Load]:
    return sorted(net.loads.values(), key=lambda l: natural_key(l.id))


def _add_gamma(p: ConicProgram, vm: VarMap, net: Network, binary: bool, fixes):
    fixes = dict(fixes or {})
    for lid in fixes:
        if lid not in net.loads:
            raise ModelError(f"fix references unknown load {lid!r}")
    for ld in _sorted_loads(net):
        g = p.add_binary(1, f"gamma[{ld.id}]") if binary else p.add_var(1, f"gamma[{ld.id}]")
        vm.gamma[ld.id] = g
        if not binary:
            p.add_nonneg(g, f"gamma[{ld.id}]>=0")
            p.add_nonneg(1.0 - g, f"gamma[{ld.id}]<=1")
        if ld.id in fixes:
            p.add_eq(g - float(fixes[ld.id]), f"fix[{ld.id}]")
        if ld.id in vm.dead_loads:
            p.add_eq(g, f"dead[{ld.id}]")


def _add_sources(p: ConicProgram, vm: VarMap, net: Network, opts: ModelOptions, scale: float = 1.0, phases=None):
    """Per-phase generation with aggregate (sum over phases) caps."""
    kva = net.base_kva
    for src in sorted(net.sources.values(), key=lambda s: natural_key(s.id)):
        ph = phases if phases is not None else vm.bus_phases.get(src.bus, "")
        if not ph:
            continue  # bus not energized by the tree
        P = p.add_var(len(ph), f"gen_p[{src.id}]")
        Q = p.add_var(len(ph), f"gen_q[{src.id}]")
        vm.gen_p[src.id], vm.gen_q[src.id] = P, Q
        prate, qrate = src.p_rate / kva * scale, src.q_rate / kva * scale
        if src.fixed_active_power and opts.pv_mode == "fixed":
            p.add_eq(P.sum() - prate, f"pv[{src.id}]")
        else:
            p.add_nonneg(P.sum(), f"p>=0[{src.id}]")
            p.add_nonneg(prate - P.sum(), f"p<=rate[{src.id}]")
        p.add_nonneg(Q.sum(), f"q>=0[{src.id}]")
        p.add_nonneg(qrate - Q.sum(), f"q<=rate[{src.id}]")


def _injection(vm: VarMap, net: Network, bus: str, phases: str):
    """Per-phase complex injection (generation minus gamma-weighted demand), p.u."""
    m = len(phases)
    re, im = Affine.zeros(m), Affine.zeros(m)
    for src in net.sources_at(bus):
        re = re + vm.gen_p[src.id]
        im = im + vm.gen_q[src.id]
    for ld in net.loads_at(bus):
        d = np.array([ld.demand.get(ph, 0j) for ph in phases]) / net.base_kva
        g = vm.gamma[ld.id]
        re = re - g.repeat(m) * d.real
        im = im - g.repeat(m) * d.imag
    return re, im


def _idx(sub: str, full: str) -> list[int]:
    return [full.index(ph) for ph in sub]


def _penalty_scale(ws: Sequence[float]) -> float:
    positive = [w for w in ws if w > 0]
    return min(positive) if positive else 1.0


# ---------------------------------------------------------------------------
# CLR-sdp
# ---------------------------------------------------------------------------


def build_clr_sdp(
    island: IslandGraph,
    tree: SpanningTree,
    weights=None,
    fixes: Mapping[str, int] | None = None,
    options: ModelOptions | None = None,
    objective: str = "restore",
) -> tuple[ConicProgram, VarMap]:
    """Multiphase SDP relaxation.

    ``objective="restore"`` maximises the weighted restored load (minus a
    tiny generation/current regulariser that selects the loss-minimal,
    rank-one point among equal-weight optima); ``"min_generation"`` is the
    fixed-status dispatch problem.
    """
    opts = options or ModelOptions()
    net, vm = _prepare(island, tree, weights, opts)
    vm.kind = "sdp"
    p = ConicProgram(f"clr-sdp:{island.id}")
    _add_gamma(p, vm, net, False, fixes)
    _add_sources(p, vm, net, opts)

    for b in vm.buses:
        m = len(vm.bus_phases[b])
        vm.V[b] = p.add_hermitian(m, f"V[{b}]")
    for lid, i, j, ph in vm.lines:
        k = len(ph)
        vm.S[lid] = p.add_complex((k, k), f"S[{lid}]")
        vm.I[lid] = p.add_hermitian(k, f"I[{lid}]")

    # reference: V = u u^H under the feeder's phase rotation
    ref = vm.reference
    u = net.nominal_phasors(vm.bus_phases[ref])
    Vr = vm.V[ref]
    target = np.outer(u, u.conj())
    p.add_eq(Affine.vstack([Vr.re - target.real.ravel(), Vr.im - target.imag.ravel()]), "reference")

    # voltage bounds
    for b in vm.buses:
        if b == ref:
            continue
        lo, hi = vm.vsq_bounds[b]
        d = vm.V[b].diag()[0]
        p.add_nonneg(d - lo, f"vmin[{b}]")
        p.add_nonneg(hi - d, f"vmax[{b}]")

    # line blocks, Ohm's law, ampacity
    covered: set[str] = {ref}
    for lid, i, j, ph in vm.lines:
        Z = vm.z_pu[lid]
        S, I = vm.S[lid], vm.I[lid]
        ii = _idx(ph, vm.bus_phases[i])
        jj = _idx(ph, vm.bus_phases[j])
        Vi = vm.V[i].principal(ii)
        Vj = vm.V[j].principal(jj)
        ZS = S.rmul(Z.conj().T)  # S Z^H
        drop = ZS + ZS.H
        ZIZ = I.lmul(Z).rmul(Z.conj().T)
        ohm = Vj - Vi + drop - ZIZ
        p.add_eq(Affine.vstack([ohm.re, ohm.im]), f"ohm[{lid}]")
        block = CMatrix.bmat([[Vi, S], [S.H, I]])
        vm.blocks[lid] = block
        p.add_psd(block, f"block[{lid}]")
        if len(ph) == len(vm.bus_phases[i]):
            covered.add(i)
        if lid in vm.isq_max:
            p.add_nonneg(vm.isq_max[lid] - I.diag()[0], f"amp[{lid}]")
    for b in vm.buses:
        if b not in covered:
            p.add_psd(vm.V[b], f"Vpsd[{b}]")

    # power balance: sum_out diag(S) - sum_in diag(S - Z I) = s_i
    out_re = {b: Affine.zeros(len(vm.bus_phases[b])) for b in vm.buses}
    out_im = {b: Affine.zeros(len(vm.bus_phases[b])) for b in vm.buses}
    for lid, i, j, ph in vm.lines:
        S, I, Z = vm.S[lid], vm.I[lid], vm.z_pu[lid]
        sre, sim = S.diag()
        recv = S - I.lmul(Z)
        rre, rim = recv.diag()
        ii = _idx(ph, vm.bus_phases[i])
        jj = _idx(ph, vm.bus_phases[j])
        Pi = _scatter(ii, len(vm.bus_phases[i]))
        Pj = _scatter(jj, len(vm.bus_phases[j]))
        out_re[i] = out_re[i] + sre.lmul(Pi)
        out_im[i] = out_im[i] + sim.lmul(Pi)
        out_re[j] = out_re[j] - rre.lmul(Pj)
        out_im[j] = out_im[j] - rim.lmul(Pj)
    for b in vm.buses:
        sre, sim = _injection(vm, net, b, vm.bus_phases[b])
        p.add_eq(Affine.vstack([out_re[b] - sre, out_im[b] - sim]), f"balance[{b}]")

    eps = opts.gen_penalty * _penalty_scale(vm.weights)
    gen = Affine.zeros(1)
    for P in vm.gen_p.values():
        gen = gen + P.sum()
    cur = Affine.zeros(1)
    for I in vm.I.values():
        cur = cur + I.diag()[0].sum()
    if objective == "restore":
        obj = Affine.zeros(1)
        for lid, g in vm.gamma.items():
            obj = obj + g * vm.load_weight(lid)
        p.maximize(obj - gen * eps - cur * (opts.current_penalty * _penalty_scale(vm.weights)))
    elif objective == "min_generation":
        p.maximize(-gen - cur * opts.current_penalty)
    else:
        raise ModelError(f"unknown objective {objective!r}")
    return p, vm


def _scatter(idx: list[int], m: int) -> np.ndarray:
    P = np.zeros((m, len(idx)))
    for k, r in enumerate(idx):
        P[r, k] = 1.0
    return P


def block_values(sol: ConicSolution, vm: VarMap) -> dict[str, np.ndarray]:
    """Numeric line blocks.

    On zero-impedance lines the current matrix only appears in its own PSD
    block (and the ampacity bound), so any feasible value may be replaced by
    the smallest one, the Schur complement ``S^H V^+ S``.  That keeps every
    constraint satisfied and removes the slack an interior-point solver
    leaves in an otherwise undetermined variable.
    """
    out = {}
    for lid, blk in vm.blocks.items():
        M = blk.value(sol.x)
        if not np.any(vm.z_pu[lid]):
            k = vm.z_pu[lid].shape[0]
            V, S = M[:k, :k], M[:k, k:]
            M = M.copy()
            M[k:, k:] = S.conj().T @ np.linalg.pinv(V, rcond=1e-10, hermitian=True) @ S
        out[lid] = M
    return out


def _ratio(M: np.ndarray) -> float:
    lam = np.linalg.eigvalsh(0.5 * (M + M.conj().T))
    lam = np.sort(np.abs(lam))[::-1]
    if lam[0] <= 0:
        return 0.0
    return float(lam[1] / lam[0]) if lam.size > 1 else 0.0


def rank1_ratio(sol: ConicSolution, vm: VarMap) -> float:
    """Largest |lambda2|/|lambda1| over the line blocks [[V_i, S], [S^H, I]]."""
    if not vm.blocks:
        return 0.0
    return max(_ratio(M) for M in block_values(sol, vm).values())


def _leading(M: np.ndarray) -> np.ndarray:
    M = 0.5 * (M + M.conj().T)
    lam, U = np.linalg.eigh(M)
    return math.sqrt(max(lam[-1], 0.0)) * U[:, -1]


def recover_phasors(
    sol: ConicSolution, vm: VarMap, tree: SpanningTree | None = None, reference: str | None = None,
    threshold: float = RANK_THRESHOLD,
) -> PhasorProfile:
    """Voltage phasors from the leading eigenvectors of the line blocks.

    Each block gives ``[v_i; i_ij]`` up to a common rotation; the rotation is
    fixed by whichever endpoint is already known, starting from the reference
    bus and sweeping along the tree.
    """
    if vm.kind != "sdp":
        raise ModelError("phasor recovery needs an SDP solution")
    if not sol.optimal:
        raise RecoveryError(f"solution status {sol.status}")
    ratio = rank1_ratio(sol, vm)
    if ratio > threshold:
        raise RecoveryError(f"rank-one ratio {ratio:.3g} exceeds {threshold:g}; recovery refused")
    net = vm.network
    ref = reference or vm.reference
    Vref = vm.V[ref].value(sol.x)
    phr = vm.bus_phases[ref]
    known: dict[str, dict[str, complex]] = {b: {} for b in vm.bus_phases}
    # reference phasors: magnitudes from the diagonal, angles relative to phase a
    vref = _leading(Vref)
    if abs(vref[0]) > 0:
        vref = vref * np.exp(-1j * np.angle(vref[0]))
    if ref == vm.reference:
        vref = np.sqrt(np.real(np.diag(Vref))) * np.exp(1j * np.angle(net.nominal_phasors(phr)))
    for k, ph in enumerate(phr):
        known[ref][ph] = complex(vref[k])
    currents: dict[str, dict[str, complex]] = {}
    pending = list(vm.lines)
    blocks = block_values(sol, vm)
    while pending:
        progressed = False
        rest = []
        for lid, i, j, ph in pending:
            ki = [p_ for p_ in ph if p_ in known[i]]
            kj = [p_ for p_ in ph if p_ in known[j]]
            if not ki and not kj:
                rest.append((lid, i, j, ph))
                continue
            x = _leading(blocks[lid])
            n = len(ph)
            xv, xi = x[:n], x[n:]
            xw = xv - vm.z_pu[lid] @ xi
            if ki:
                ref_vals = np.array([known[i][q] for q in ki])
                cand = np.array([xv[ph.index(q)] for q in ki])
            else:
                ref_vals = np.array([known[j][q] for q in kj])
                cand = np.array([xw[ph.index(q)] for q in kj])
            rot = np.vdot(cand, ref_vals)
            rot = rot / abs(rot) if abs(rot) > 0 else 1.0
            xv, xw, xi = xv * rot, xw * rot, xi * rot
            for k, q in enumerate(ph):
                known[i].setdefault(q, complex(xv[k]))
                known[j].setdefault(q, complex(xw[k]))
            currents[lid] = {q: complex(xi[k]) for k, q in enumerate(ph)}
            progressed = True
        if not progressed:
            raise RecoveryError("tree is not connected to the reference bus")
        pending = rest
    kva = net.base_kva
    sources = {}
    total_gen = 0.0
    for sid in vm.gen_p:
        P = float(np.sum(sol.value(vm.gen_p[sid]))) * kva
        Q = float(np.sum(sol.value(vm.gen_q[sid]))) * kva
        sources[sid] = (P, Q)
        total_gen += P
    demand = math.fsum(
        float(sol.value(g)[0]) * net.loads[lid].p_total for lid, g in vm.gamma.items()
    )
    return PhasorProfile(ref, known, sources, total_gen - demand, currents)


def balance_residual(profile: PhasorProfile, sol: ConicSolution, vm: VarMap) -> float:
    """Largest per-bus per-phase mismatch (p.u.) between recovered phasors and injections."""
    net = vm.network
    net_out: dict[str, dict[str, complex]] = {b: {q: 0j for q in vm.bus_phases[b]} for b in vm.bus_phases}
    for lid, i, j, ph in vm.lines:
        cur = profile.currents[lid]
        for q in ph:
            vi = profile.voltages[i][q]
            vj = profile.voltages[j][q]
            net_out[i][q] += vi * np.conj(cur[q])
            net_out[j][q] -= vj * np.conj(cur[q])
    worst = 0.0
    for b, phs in vm.bus_phases.items():
        re, im = _injection(vm, net, b, phs)
        s = sol.value(re) + 1j * sol.value(im)
        for k, q in enumerate(phs):
            worst = max(worst, abs(net_out[b][q] - s[k]))
    return worst


# ---------------------------------------------------------------------------
# CLR-misocp
# ---------------------------------------------------------------------------


def _single_phase_view(net: Network, vm: VarMap):
    """Return (phase string, per-phase scale, impedance map) for a single-phase equivalent."""
    phase_sets = {b.phases for b in net.buses.values()}
    if all(len(ps) == 1 for ps in phase_sets):
        if len({ps for ps in phase_sets}) != 1:
            raise UnbalancedNetworkError("single-phase buses on different phases")
        z = {lid: complex(zz[0, 0]) for lid, zz in vm.z_pu.items()}
        return next(iter(phase_sets)), 1.0, z
    if phase_sets != {"abc"}:
        raise UnbalancedNetworkError("misocp needs all-single-phase or all-three-phase buses")
    for ld in net.loads.values():
        d = [ld.demand.get(ph, 0j) for ph in "abc"]
        if max(abs(x - d[0]) for x in d) > 1e-9 * max(1.0, abs(d[0])):
            raise UnbalancedNetworkError(f"load {ld.id} is unbalanced")
    z = {}
    for lid, zz in vm.z_pu.items():
        if zz.shape != (3, 3):
            raise UnbalancedNetworkError(f"line {lid} is not three-phase")
        diag = np.diag(zz)
        off = zz[~np.eye(3, dtype=bool)]
        tol = 1e-9 * max(1.0, float(np.abs(zz).max()))
        if np.abs(diag - diag[0]).max() > tol or np.abs(off - off[0]).max() > tol:
            raise UnbalancedNetworkError(f"line {lid} impedance is not symmetric")
        z[lid] = complex(diag[0] - off[0])
    return "a", 1.0 / 3.0, z


def build_clr_misocp(
    island: IslandGraph,
    tree: SpanningTree,
    weights=None,
    w0: float | None = None,
    fixes: Mapping[str, int] | None = None,
    options: ModelOptions | None = None,
    objective: str = "restore",
) -> tuple[ConicProgram, VarMap]:
    """Single-phase branch-flow SOCP (balanced three-phase networks use one phase).

    ``objective="min_generation"`` (statuses normally all fixed) minimises the
    total injection, which drives every current variable onto its cone.
    """
    opts = options or ModelOptions()
    net, vm = _prepare(island, tree, weights, opts)
    vm.kind = "socp"
    phase, scale, z = _single_phase_view(net, vm)
    vm.per_phase_scale = scale
    if w0 is None:
        w0 = opts.w0 if opts.w0 is not None else 1e-3 * _penalty_scale(vm.weights)
    p = ConicProgram(f"clr-misocp:{island.id}")
    _add_gamma(p, vm, net, not opts.relax_binaries, fixes)
    # balanced networks: the represented phase carries a third of each rating
    _add_sources(p, vm, net, opts, scale=scale, phases=phase)
    for b in vm.buses:
        vm.V[b] = p.add_var(1, f"v[{b}]")
    for lid, *_ in vm.lines:
        vm.S[lid] = p.add_var(2, f"S[{lid}]")
        vm.I[lid] = p.add_var(1, f"l[{lid}]")
    ref = vm.reference
    p.add_eq(vm.V[ref] - 1.0, "reference")
    for b in vm.buses:
        if b == ref:
            continue
        lo, hi = vm.vsq_bounds[b]
        p.add_nonneg(vm.V[b] - float(lo.max()), f"vmin[{b}]")
        p.add_nonneg(float(hi.min()) - vm.V[b], f"vmax[{b}]")
    flow_re = {b: Affine.zeros(1) for b in vm.buses}
    flow_im = {b: Affine.zeros(1) for b in vm.buses}
    for lid, i, j, _ in vm.lines:
        zz = z[lid]
        P, Q, ell = vm.S[lid][0], vm.S[lid][1], vm.I[lid]
        # v_j = v_i - 2 Re(S z*) + |z|^2 l
        p.add_eq(vm.V[j] - vm.V[i] + (P * zz.real + Q * zz.imag) * 2.0 - ell * abs(zz) ** 2, f"ohm[{lid}]")
        # l v_i >= P^2 + Q^2  as  ||(2P, 2Q, l - v_i)|| <= l + v_i
        p.add_soc(ell + vm.V[i], Affine.vstack([P * 2.0, Q * 2.0, ell - vm.V[i]]), f"soc[{lid}]")
        p.add_nonneg(ell, f"l>=0[{lid}]")
        if lid in vm.isq_max:
            p.add_nonneg(float(vm.isq_max[lid][0]) - ell, f"amp[{lid}]")
        flow_re[i] = flow_re[i] + P
        flow_im[i] = flow_im[i] + Q
        flow_re[j] = flow_re[j] - (P - ell * zz.real)
        flow_im[j] = flow_im[j] - (Q - ell * zz.imag)
    total_inj = Affine.zeros(1)
    for b in vm.buses:
        sre, sim = _injection(vm, net, b, phase)
        p.add_eq(Affine.vstack([flow_re[b] - sre, flow_im[b] - sim]), f"balance[{b}]")
        total_inj = total_inj + sre.sum()
    if objective == "restore":
        obj = Affine.zeros(1)
        for lid, g in vm.gamma.items():
            obj = obj + g * vm.load_weight(lid)
        p.maximize(obj - total_inj * w0)
    elif objective == "min_generation":
        p.maximize(-total_inj)
    else:
        raise ModelError(f"unknown objective {objective!r}")
    return p, vm


def socp_exactness(sol: ConicSolution, vm: VarMap) -> float:
    """max over lines of |l v_i - |S|^2| / max(1, |S|^2)."""
    if vm.kind != "socp":
        raise ModelError("socp_exactness needs a misocp solution")
    worst = 0.0
    for lid, i, _, _ in vm.lines:
        P, Q = sol.value(vm.S[lid])
        ell = float(sol.value(vm.I[lid])[0])
        v = float(sol.value(vm.V[i])[0])
        s2 = P * P + Q * Q
        worst = max(worst, abs(ell * v - s2) / max(1.0, s2))
    return worst


def socp_residual_at(point: Mapping[str, tuple[float, float, float, float]]) -> float:
    """Eq.-style residual for hand-built points ``{line: (P, Q, l, v_i)}``."""
    worst = 0.0
    for P, Q, ell, v in point.values():
        s2 = P * P + Q * Q
        worst = max(worst, abs(ell * v - s2) / max(1.0, s2))
    return worst


# ---------------------------------------------------------------------------
# CLR-milp
# ---------------------------------------------------------------------------


def delta_matrix(phases: str) -> np.ndarray:
    idx = [PHASES.index(ph) for ph in phases]
    return DELTA[np.ix_(idx, idx)]


def build_clr_milp(
    island: IslandGraph,
    tree: SpanningTree,
    weights=None,
    fixes: Mapping[str, int] | None = None,
    options: ModelOptions | None = None,
) -> tuple[ConicProgram, VarMap]:
    """Lossless linear multiphase flow with binary load statuses.

    The line matrix is rebuilt from its diagonal as ``S = delta . DIAG(Lambda)``
    (column ``k`` of delta scaled by ``Lambda_k``), which is the
    nearly-balanced approximation of ``v_i i_ij^H``.
    """
    opts = options or ModelOptions()
    net, vm = _prepare(island, tree, weights, opts)
    vm.kind = "milp"
    p = ConicProgram(f"clr-milp:{island.id}")
    _add_gamma(p, vm, net, not opts.relax_binaries, fixes)
    _add_sources(p, vm, net, opts)
    for b in vm.buses:
        vm.V[b] = p.add_var(len(vm.bus_phases[b]), f"v[{b}]")
    ref = vm.reference
    for b in vm.buses:
        lo, hi = vm.vsq_bounds[b]
        if b == ref:
            p.add_eq(vm.V[b] - 1.0, "reference")
            continue
        p.add_nonneg(vm.V[b] - lo, f"vmin[{b}]")
        p.add_nonneg(hi - vm.V[b], f"vmax[{b}]")
    flow_re = {b: Affine.zeros(len(vm.bus_phases[b])) for b in vm.buses}
    flow_im = {b: Affine.zeros(len(vm.bus_phases[b])) for b in vm.buses}
    for lid, i, j, ph in vm.lines:
        k = len(ph)
        lam = p.add_var(2 * k, f"Lambda[{lid}]")
        lre, lim = lam[:k], lam[k:]
        vm.Lam[lid] = (lre, lim)
        # S = delta * broadcast(Lambda): entry (m, n) is delta[m, n] * Lambda[n]
        d = delta_matrix(ph)
        sel = np.zeros((k * k, k))
        for m_ in range(k):
            for n_ in range(k):
                sel[m_ * k + n_, n_] = 1.0
        bre, bim = lre.lmul(sel), lim.lmul(sel)
        S = CMatrix(bre, bim, (k, k)).hadamard(d)
        vm.S[lid] = S
        Z = vm.z_pu[lid]
        SZ = S.rmul(Z.conj().T)
        drop = SZ + SZ.H
        ii = _idx(ph, vm.bus_phases[i])
        jj = _idx(ph, vm.bus_phases[j])
        # only the diagonal of V enters the bounds, so only it is modelled
        p.add_eq(vm.V[j][jj] - vm.V[i][ii] + drop.diag()[0], f"lpf[{lid}]")
        smax = _flow_limit(net, lid)
        if smax is not None:
            for part, tag in ((lre, "P"), (lim, "Q")):
                p.add_nonneg(smax - part, f"smax{tag}+[{lid}]")
                p.add_nonneg(part + smax, f"smax{tag}-[{lid}]")
        Pi = _scatter(ii, len(vm.bus_phases[i]))
        Pj = _scatter(jj, len(vm.bus_phases[j]))
        flow_re[i] = flow_re[i] + lre.lmul(Pi)
        flow_im[i] = flow_im[i] + lim.lmul(Pi)
        flow_re[j] = flow_re[j] - lre.lmul(Pj)
        flow_im[j] = flow_im[j] - lim.lmul(Pj)
    for b in vm.buses:
        sre, sim = _injection(vm, net, b, vm.bus_phases[b])
        p.add_eq(Affine.vstack([flow_re[b] - sre, flow_im[b] - sim]), f"balance[{b}]")
    obj = Affine.zeros(1)
    for lid, g in vm.gamma.items():
        obj = obj + g * vm.load_weight(lid)
    p.maximize(obj)
    return p, vm


def _flow_limit(net: Network, lid: str) -> float | None:
    ln = net.lines[lid]
    if ln.flow_limit is not None:
        return ln.flow_limit / net.base_kva
    if math.isfinite(ln.ampacity):
        return ln.ampacity * net.base_kv / net.base_kva
    return None


def restored_set(gamma: Mapping[str, float], tol: float = 1e-4) -> frozenset[str]:
    return frozenset(k for k, v in gamma.items() if v > 1 - tol)
