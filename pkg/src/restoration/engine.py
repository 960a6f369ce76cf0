"""Stage 2: iterative SDP rounding with an optimality certificate.

Each round solves the relaxation, secures the loads already at 1 and fixes
at least one fractional load to 0 (``add_constraints``).  The per-round
bounds ``W_sdp`` (relaxation value) and ``W_int`` (value of the loads at 1)
feed the trace-level optimality criterion.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import numpy as np

from .conic import ConicSolution, SolverSettings, solve_conic, solve_mip
from .models import (
    RANK_THRESHOLD,
    RecoveryError,
    ModelOptions,
    PhasorProfile,
    VarMap,
    UnbalancedNetworkError,
    build_clr_milp,
    build_clr_misocp,
    build_clr_sdp,
    rank1_ratio,
    recover_phasors,
    socp_exactness,
)
from .netmodel import Load, Network, PostEventNetwork, WeightOrderError, natural_key, restrict
from .topology import IslandGraph, SpanningTree, find_target_islands, minimum_diameter_spanning_tree

log = logging.getLogger(__name__)

VERIFIED = "verified_global"
UNVERIFIED = "unverified"

TERMINAL, STEP3, STEP4, STEP5, FALLBACK = "terminal", "step3", "step4", "step5", "fallback"


class EngineError(RuntimeError):
    pass


class InfeasibleError(EngineError):
    """A relaxation or the fixed-status dispatch has no (certified) solution."""


@dataclass(frozen=True)
class WeightScheme:
    weights: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        object.__setattr__(self, "weights", w)
        if not w:
            raise WeightOrderError("weight scheme needs at least one level")
        if any(x < 0 or not math.isfinite(x) for x in w):
            raise WeightOrderError("weights must be finite and nonnegative")
        if any(a <= b for a, b in zip(w, w[1:])):
            raise WeightOrderError("weights not strictly decreasing")

    @property
    def n(self) -> int:
        return len(self.weights)

    def w(self, k: int) -> float:
        """Level weight with the virtual levels w^0 = inf and w^(n+1) = 0."""
        if k <= 0:
            return math.inf
        if k > self.n:
            return 0.0
        return self.weights[k - 1]

    @classmethod
    def of(cls, obj) -> "WeightScheme":
        if isinstance(obj, WeightScheme):
            return obj
        if isinstance(obj, Network):
            return cls(obj.weights)
        return cls(tuple(obj))


@dataclass
class WeightReport:
    condition1: bool
    condition2: bool
    violations: list[str] = field(default_factory=list)
    margin: float = 10.0

    @property
    def ok(self) -> bool:
        return self.condition1 and self.condition2


def validate_weights(ws, loads: Iterable[Load], margin: float = 10.0) -> WeightReport:
    """Check the two weight-separation conditions.

    Condition 2 (``w^j > sum_{k>j} w^k |L^k|``) is exact.  Condition 1 asks
    ``w^k1 / P_i >> w^k2 / P_j``; ">>" is read as "at least ``margin`` times".
    """
    ws = WeightScheme.of(ws)
    by_level: dict[int, list[Load]] = {}
    for ld in loads:
        by_level.setdefault(ld.level, []).append(ld)
    rep = WeightReport(True, True, margin=margin)
    for j in range(1, ws.n + 1):
        tail = math.fsum(ws.w(k) * len(by_level.get(k, ())) for k in range(j + 1, ws.n + 1))
        if not ws.w(j) > tail:
            rep.condition2 = False
            rep.violations.append(f"condition 2: w^{j} = {ws.w(j):g} is not above {tail:g}")

    def ratio(w, ld):
        return math.inf if ld.p_total <= 0 else w / ld.p_total

    levels = sorted(by_level)
    for a in levels:
        for b in levels:
            if b <= a:
                continue
            lo = min(ratio(ws.w(a), ld) for ld in by_level[a])
            hi = max(ratio(ws.w(b), ld) for ld in by_level[b])
            if not lo >= margin * hi:
                rep.condition1 = False
                rep.violations.append(
                    f"condition 1: min w/P at level {a} ({lo:.4g}) is below {margin:g} x max at level {b} ({hi:.4g})"
                )
    return rep


def identify_k_star(Wsdp: float, Wint: float, ws, tol: float = 0.0) -> int:
    """Level K* with ``w^K* <= Wsdp - Wint < w^(K*-1)``.

    A gap within ``tol`` below a level weight counts as reaching it, so a
    boundary case resolves to the smaller K*: step 3 then never prunes a
    level the relaxation cannot actually rule out.
    """
    ws = WeightScheme.of(ws)
    gap = Wsdp - Wint
    if gap < 0:
        if gap < -max(tol, 1e-9 * max(1.0, abs(Wsdp))):
            raise ValueError(f"relaxation value {Wsdp} below integer value {Wint}")
        gap = 0.0
    for k in range(1, ws.n + 2):
        if ws.w(k) <= gap + tol or (k == ws.n + 1):
            return k
    return ws.n + 1  # pragma: no cover


def compute_n_re(Wsdp: float, Wint: float, wK: float, tol: float = 0.0) -> int:
    """``floor((Wsdp - Wint + tol) / wK)``; at least 1 whenever K* was chosen by the sandwich."""
    if not wK > 0:
        raise ValueError("n_re is undefined at the virtual level (w = 0)")
    q = (Wsdp - Wint + tol) / wK
    # absorb float noise from sums of weights (e.g. 0.6/0.2 = 2.9999999999999996)
    return int(math.floor(q + 1e-9))


@dataclass
class ConstraintBatch:
    ones: frozenset[str]
    zeros: frozenset[str]
    branch: str
    k_star: int
    n_re: int = 0
    L_ni: frozenset[str] = frozenset()
    L_c1: frozenset[str] = frozenset()
    L_c2: frozenset[str] = frozenset()
    L_c3: frozenset[str] = frozenset()
    L_c4: frozenset[str] = frozenset()
    L_c1z: frozenset[str] = frozenset()  # zero-status companions of a step-3 batch


@dataclass
class IterState:
    index: int
    fixes: dict[str, int]  # constraints in force when this relaxation was solved
    gamma: dict[str, float]
    W_sdp: float
    W_int: float
    L_one: frozenset[str]
    L_ni: frozenset[str]
    rank_ratio: float
    status: str
    solve_time: float
    batch: ConstraintBatch | None = None

    @property
    def branch(self) -> str:
        return self.batch.branch if self.batch else TERMINAL

    @property
    def k_star(self) -> int | None:
        return self.batch.k_star if self.batch else None

    @property
    def n_re(self) -> int:
        return self.batch.n_re if self.batch else 0


@dataclass
class IterationTrace:
    states: list[IterState] = field(default_factory=list)
    reason: str = ""

    @property
    def iterations(self) -> int:
        """Number of constraint rounds (the initial solve is round 0)."""
        return max(0, len(self.states) - 1)

    @property
    def max_rank_ratio(self) -> float:
        return max((s.rank_ratio for s in self.states), default=0.0)


@dataclass(frozen=True)
class EngineConfig:
    weights: tuple[float, ...] | None = None
    integrality_eps: float = 1e-4
    binding_tol: float = 1e-4
    rank_threshold: float = RANK_THRESHOLD
    solver: SolverSettings = field(default_factory=SolverSettings)
    model: ModelOptions = field(default_factory=ModelOptions)
    recover: bool = True
    # step 3 also fixes unfixed loads at gamma = 0 whose weight is >= w^(K*-1)
    prune_zero: bool = True


def _load_order(vm: VarMap, gamma: Mapping[str, float]):
    # smallest gamma, then largest kW, then smallest id
    net = vm.network
    return lambda lid: (gamma[lid], -net.loads[lid].p_total, natural_key(lid))


def _binding_loads(sol: ConicSolution, vm: VarMap, candidates, tol: float) -> set[str]:
    net = vm.network
    hot_bus: set[str] = set()
    for b, V in vm.V.items():
        if b == vm.reference:
            continue
        d = sol.value(V.diag()[0])
        lo, hi = vm.vsq_bounds[b]
        if np.any(np.abs(d - lo) <= tol * lo) or np.any(np.abs(d - hi) <= tol * hi):
            hot_bus.add(b)
    hot_line_bus: set[str] = set()
    for lid, i, j, _ in vm.lines:
        if lid not in vm.isq_max:
            continue
        d = sol.value(vm.I[lid].diag()[0])
        cap = vm.isq_max[lid]
        if np.any(np.abs(d - cap) <= tol * cap):
            hot_line_bus.update((i, j))
    return {lid for lid in candidates if net.loads[lid].bus in hot_bus | hot_line_bus}


def add_constraints(
    st: IterState,
    sol: ConicSolution,
    vm: VarMap,
    ws=None,
    binding_tol: float = 1e-4,
    boundary_tol: float | None = None,
    prune_zero: bool = True,
) -> ConstraintBatch:
    """One ADDCONSTRAINTS round: secure loads at 1, then step 3, 4 or 5.

    With ``prune_zero`` a step-3 batch also fixes the unfixed loads sitting
    at gamma = 0 with weight >= w^(K*-1): restoring any of them would lift
    the objective above the relaxation bound, the same argument that rules
    out the fractional ones.
    """
    ws = WeightScheme.of(ws if ws is not None else vm.weights)
    if not st.L_ni:
        raise EngineError("add_constraints called without fractional loads")
    gamma = st.gamma
    weight = {lid: vm.load_weight(lid) for lid in gamma}
    if boundary_tol is None:
        boundary_tol = 1e-7 * max(1.0, abs(st.W_sdp))
    k = identify_k_star(st.W_sdp, st.W_int, ws, tol=boundary_tol)
    order = _load_order(vm, gamma)
    ones = frozenset(st.L_one)
    ni = frozenset(st.L_ni)
    eps = 1e-4
    c1 = frozenset(i for i in ni if weight[i] >= ws.w(k - 1))
    if c1:
        c1z = frozenset()
        if prune_zero:
            c1z = frozenset(
                i for i, g in gamma.items() if g < eps and weight[i] >= ws.w(k - 1) and i not in st.fixes
            )
        return ConstraintBatch(ones, c1 | c1z, STEP3, k, 0, ni, c1, L_c1z=c1z)
    level_k = {i for i in ni if weight[i] == ws.w(k)}
    c2 = frozenset(_binding_loads(sol, vm, level_k, binding_tol))
    if c2:
        pick = min(c2, key=order)
        return ConstraintBatch(ones, frozenset([pick]), STEP4, k, 0, ni, c1, c2)
    n_re = compute_n_re(st.W_sdp, st.W_int, ws.w(k), boundary_tol)
    drop = max(0, len(ni) - n_re)
    c3 = frozenset(sorted(ni, key=order)[:drop])
    c4 = frozenset(
        i for i, g in gamma.items() if weight[i] == ws.w(k) and g < eps and st.fixes.get(i) != 0
    )
    return ConstraintBatch(ones, c3 | c4, STEP5, k, n_re, ni, c1, c2, c3, c4)


def _solve_round(island, tree, ws, fixes, cfg: EngineConfig, index: int):
    loads = island.network.loads if island.network is not None else {}
    # with every status fixed the restore objective is flat up to its small
    # penalties; minimising generation gives the same feasible set a
    # well-posed (rank-one) optimum
    objective = "min_generation" if loads and all(k in fixes for k in loads) else "restore"
    prog, vm = build_clr_sdp(island, tree, ws.weights, fixes, cfg.model, objective=objective)
    t0 = time.perf_counter()
    sol = solve_conic(prog, cfg.solver)
    dt = time.perf_counter() - t0
    if not sol.optimal:
        raise InfeasibleError(f"relaxation at round {index} ended with status {sol.status}")
    gamma = vm.gamma_values(sol)
    eps = cfg.integrality_eps
    one = frozenset(k for k, g in gamma.items() if g > 1 - eps)
    ni = frozenset(k for k, g in gamma.items() if eps <= g <= 1 - eps)
    W_sdp = math.fsum(vm.load_weight(k) * g for k, g in gamma.items())
    W_int = math.fsum(vm.load_weight(k) for k in one)
    st = IterState(index, dict(fixes), gamma, W_sdp, W_int, one, ni, rank1_ratio(sol, vm), sol.status, dt)
    return st, sol, vm


def iterate(island: IslandGraph, tree: SpanningTree, ws, cfg: EngineConfig | None = None):
    """Run the rounding loop; returns ``(final gamma as 0/1 dict, IterationTrace)``."""
    cfg = cfg or EngineConfig()
    ws = WeightScheme.of(ws)
    fixes: dict[str, int] = {}
    trace = IterationTrace()
    n_loads = len(island.network.loads) if island.network is not None else 0
    while True:
        st, sol, vm = _solve_round(island, tree, ws, fixes, cfg, len(trace.states))
        trace.states.append(st)
        if not st.L_ni:
            trace.reason = "integral"
            break
        if len(trace.states) > n_loads + 1:
            raise EngineError("iteration count exceeded the number of loads")
        batch = add_constraints(st, sol, vm, ws, cfg.binding_tol, prune_zero=cfg.prune_zero)
        new = {i: 1 for i in batch.ones if fixes.get(i) != 1}
        new.update({i: 0 for i in batch.zeros if fixes.get(i) != 0})
        if not any(i not in fixes for i in new):
            # nothing new would be fixed: drop the least restored fractional load
            pick = min(st.L_ni, key=_load_order(vm, st.gamma))
            batch = ConstraintBatch(batch.ones, frozenset([pick]), FALLBACK, batch.k_star, 0, batch.L_ni)
            new[pick] = 0
            log.warning("round %d fixed nothing new; falling back to dropping load %s", st.index, pick)
        st.batch = batch
        fixes.update(new)
    final = {k: (1 if g > 1 - cfg.integrality_eps else 0) for k, g in trace.states[-1].gamma.items()}
    return final, trace


def check_optimality_criterion(tr: IterationTrace, ws) -> str:
    """verified_global iff no step-4 (or fallback) round and the W_int gain bound holds every round."""
    ws = WeightScheme.of(ws)
    if not tr.states:
        return UNVERIFIED
    for j, st in enumerate(tr.states[:-1]):
        if st.branch in (STEP4, FALLBACK):
            return UNVERIFIED
        nxt = tr.states[j + 1]
        w = ws.w(st.k_star) if st.branch == STEP5 else 0.0
        need = st.W_int + w * st.n_re
        if nxt.W_int < need - 1e-9 * max(1.0, abs(need)):
            return UNVERIFIED
    return VERIFIED


@dataclass
class ConditionReport:
    condition1: bool
    condition2: bool
    notes: list[str] = field(default_factory=list)
    heuristic: bool = True

    @property
    def ok(self) -> bool:
        return self.condition1 and self.condition2


def check_sufficient_conditions(
    island: IslandGraph, ws=None, current_multiple: float = 2.0, rel_gap: float = 0.01
) -> ConditionReport:
    """Heuristic proxies for the two sufficient conditions (flagged as heuristics)."""
    net = island.network
    rep = ConditionReport(True, True)
    if net is None:
        return rep
    per_phase = {ph: 0.0 for ph in "abc"}
    for ld in net.loads.values():
        for ph, s in ld.demand.items():
            per_phase[ph] += abs(s)
    demand_current = max(per_phase.values()) / net.base_kv  # A
    for ln in sorted(net.lines.values(), key=lambda l: natural_key(l.id)):
        if ln.ampacity < current_multiple * demand_current:
            rep.condition1 = False
            rep.notes.append(
                f"condition 1: line {ln.id} ampacity {ln.ampacity:g} A < {current_multiple:g} x {demand_current:.1f} A"
            )
    by_level: dict[int, list[Load]] = {}
    for ld in net.loads.values():
        by_level.setdefault(ld.level, []).append(ld)
    for lvl, lds in sorted(by_level.items()):
        lds = sorted(lds, key=lambda l: natural_key(l.id))
        for a in range(len(lds)):
            for b in range(a + 1, len(lds)):
                pa, pb = lds[a].p_total, lds[b].p_total
                if abs(pa - pb) < rel_gap * max(pa, pb):
                    rep.condition2 = False
                    rep.notes.append(f"condition 2: loads {lds[a].id} and {lds[b].id} (level {lvl}) have near-equal kW")
    rep.notes.append("proxies are heuristic; the conditions are sufficient, not necessary")
    return rep


def final_dispatch(
    island: IslandGraph, tree: SpanningTree, gamma: Mapping[str, int], cfg: EngineConfig | None = None, ws=None
) -> tuple[PhasorProfile | None, ConicSolution, VarMap]:
    """Minimum-generation OPF with every status fixed, then phasor recovery."""
    cfg = cfg or EngineConfig()
    bad = [k for k, v in gamma.items() if v not in (0, 1)]
    if bad:
        raise EngineError(f"final dispatch needs integral statuses; got fractional {bad}")
    weights = ws.weights if isinstance(ws, WeightScheme) else ws
    prog, vm = build_clr_sdp(island, tree, weights, dict(gamma), cfg.model, objective="min_generation")
    sol = solve_conic(prog, cfg.solver)
    if not sol.optimal:
        raise InfeasibleError(f"fixed-status dispatch ended with status {sol.status}")
    profile = recover_phasors(sol, vm, threshold=cfg.rank_threshold) if cfg.recover else None
    return profile, sol, vm


def _dispatch_or_none(isl, tree, gamma, cfg, ws):
    # a refused recovery leaves the statuses standing but uncertified
    try:
        return (*final_dispatch(isl, tree, gamma, cfg, ws), None)
    except RecoveryError as exc:
        nocfg = replace(cfg, recover=False)
        _, sol, vm = final_dispatch(isl, tree, gamma, nocfg, ws)
        return None, sol, vm, str(exc)


@dataclass
class RestorationPlan:
    island: str
    buses: tuple[str, ...]
    tree: SpanningTree | None
    restored: tuple[str, ...]
    objective: float
    gamma: dict[str, int]
    profile: PhasorProfile | None
    trace: IterationTrace | None
    verdict: str
    rank_ratio: float = 0.0  # of the dispatch solution the phasors come from
    relaxation_rank_ratio: float = 0.0  # worst over the rounding rounds
    error: str | None = None
    status: str = "solved"
    elapsed: float = 0.0

    @property
    def iterations(self) -> int:
        return self.trace.iterations if self.trace else 0

    @property
    def closed_switches(self) -> list[str]:
        return self.tree.closed_switches() if self.tree else []

    @property
    def open_switches(self) -> list[str]:
        return self.tree.open_switches() if self.tree else []


def _empty_plan(isl: IslandGraph, status: str, tree=None, error=None) -> RestorationPlan:
    loads = sorted(isl.network.loads, key=natural_key) if isl.network is not None else []
    return RestorationPlan(
        isl.id, isl.vertices, tree, (), 0.0, {k: 0 for k in loads}, None, None, UNVERIFIED, error=error, status=status
    )


def solve_island(isl: IslandGraph, cfg: EngineConfig | None = None, tree: SpanningTree | None = None) -> RestorationPlan:
    cfg = cfg or EngineConfig()
    t0 = time.perf_counter()
    if not isl.restorable:
        return _empty_plan(isl, "unrestorable")
    net = isl.network
    ws = WeightScheme(cfg.weights if cfg.weights is not None else net.weights)
    try:
        tree = tree or minimum_diameter_spanning_tree(isl)
        gamma, trace = iterate(isl, tree, ws, cfg)
        verdict = check_optimality_criterion(trace, ws)
        profile, dsol, dvm, note = _dispatch_or_none(isl, tree, gamma, cfg, ws)
        if note:
            verdict = UNVERIFIED
        restored = tuple(sorted((k for k, v in gamma.items() if v == 1), key=natural_key))
        objective = math.fsum(ws.w(net.loads[k].level) for k in restored)
        return RestorationPlan(
            isl.id,
            isl.vertices,
            tree,
            restored,
            objective,
            gamma,
            profile,
            trace,
            verdict,
            rank1_ratio(dsol, dvm),
            trace.max_rank_ratio,
            error=note,
            status="inexact" if note else "solved",
            elapsed=time.perf_counter() - t0,
        )
    except Exception as exc:  # one island's failure must not abort the others
        log.error("island %s failed: %s", isl.id, exc)
        status = "infeasible" if isinstance(exc, InfeasibleError) else "error"
        plan = _empty_plan(isl, status, tree, f"{type(exc).__name__}: {exc}")
        plan.elapsed = time.perf_counter() - t0
        return plan


def solve_restoration(net: PostEventNetwork | Network, cfg: EngineConfig | None = None) -> list[RestorationPlan]:
    """MDST, rounding loop, certificate and dispatch for every target island."""
    cfg = cfg or EngineConfig()
    return [solve_island(isl, cfg) for isl in find_target_islands(net)]


@dataclass
class FormulationComparison:
    island: str
    sdp: frozenset[str] | None
    milp: frozenset[str] | None
    misocp: frozenset[str] | None
    notes: dict[str, str] = field(default_factory=dict)

    def same(self, a: str = "sdp", b: str = "milp") -> bool | None:
        x, y = getattr(self, a), getattr(self, b)
        return None if x is None or y is None else x == y


@dataclass
class MisocpResult:
    restored: frozenset[str]
    gamma: dict[str, int]
    objective: float
    residual: float  # worst normalized |l v - |S|^2| at the polished point
    solution: ConicSolution = field(repr=False)
    varmap: VarMap = field(repr=False)


def solve_misocp(isl: IslandGraph, tree: SpanningTree, cfg: EngineConfig | None = None) -> MisocpResult:
    """CLR-misocp by branch and bound, then a fixed-status loss-minimising polish.

    The restore objective only penalises generation lightly, so the B&B optimum
    may leave slack in the cones; the polish keeps the statuses and removes it.
    """
    cfg = cfg or EngineConfig()
    prog, vm = build_clr_misocp(isl, tree, cfg.weights, options=cfg.model)
    sol = solve_mip(prog, cfg.solver)
    if not sol.optimal:
        raise InfeasibleError(f"misocp {isl.id}: {sol.status}")
    gamma = {k: int(round(v)) for k, v in vm.gamma_values(sol).items()}
    prog2, vm2 = build_clr_misocp(isl, tree, cfg.weights, fixes=gamma, options=cfg.model, objective="min_generation")
    sol2 = solve_conic(prog2, cfg.solver, relax=True)  # statuses are all fixed
    if not sol2.optimal:
        raise InfeasibleError(f"misocp polish {isl.id}: {sol2.status}")
    objective = math.fsum(vm.load_weight(k) for k, v in gamma.items() if v)
    return MisocpResult(frozenset(k for k, v in gamma.items() if v), gamma, objective, socp_exactness(sol2, vm2), sol2, vm2)


def compare_formulations(
    isl: IslandGraph,
    cfg: EngineConfig | None = None,
    tree: SpanningTree | None = None,
    sdp_plan: RestorationPlan | None = None,
    formulations=("milp", "misocp"),
) -> FormulationComparison:
    """Restored sets of the SDP engine, the linear MILP and (balanced inputs only) the MISOCP."""
    cfg = cfg or EngineConfig()
    tree = tree or (sdp_plan.tree if sdp_plan and sdp_plan.tree else minimum_diameter_spanning_tree(isl))
    plan = sdp_plan or solve_island(isl, cfg, tree)
    weights = cfg.weights
    ok = plan.status in ("solved", "inexact")
    out = FormulationComparison(isl.id, frozenset(plan.restored) if ok else None, None, None)
    if not ok:
        out.notes["sdp"] = plan.status
    for name in formulations:
        if name == "misocp":
            try:
                out.misocp = solve_misocp(isl, tree, cfg).restored
            except UnbalancedNetworkError as exc:
                out.notes[name] = f"not applicable: {exc}"
            except Exception as exc:
                out.notes[name] = f"{type(exc).__name__}: {exc}"
            continue
        try:
            prog, vm = build_clr_milp(isl, tree, weights, options=cfg.model)
        except UnbalancedNetworkError as exc:
            out.notes[name] = f"not applicable: {exc}"
            continue
        try:
            sol = solve_mip(prog, cfg.solver)
        except Exception as exc:
            out.notes[name] = f"{type(exc).__name__}: {exc}"
            continue
        if not sol.optimal:
            out.notes[name] = sol.status
            continue
        g = vm.gamma_values(sol)
        setattr(out, name, frozenset(k for k, v in g.items() if v > 0.5))
    return out


def solve_islanded(net: PostEventNetwork | Network, cfg: EngineConfig | None = None) -> dict[str, list[RestorationPlan]]:
    """Each microgrid restores only its own buses (boundary lines left open)."""
    cfg = cfg or EngineConfig()
    base = net.network if isinstance(net, PostEventNetwork) else net
    groups: dict[str, list[str]] = {}
    for b in base.buses.values():
        if b.microgrid not in (None, "", "-"):
            groups.setdefault(b.microgrid, []).append(b.id)
    return {mg: solve_restoration(restrict(base, groups[mg]), cfg) for mg in sorted(groups, key=natural_key)}
