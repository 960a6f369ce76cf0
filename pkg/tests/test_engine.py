import math
from dataclasses import replace
from importlib import resources

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from restoration.engine import (
    FALLBACK,
    STEP3,
    STEP4,
    STEP5,
    UNVERIFIED,
    VERIFIED,
    ConstraintBatch,
    EngineConfig,
    IterationTrace,
    IterState,
    WeightScheme,
    check_optimality_criterion,
    check_sufficient_conditions,
    compute_n_re,
    identify_k_star,
    iterate,
    solve_island,
    solve_restoration,
    validate_weights,
)
from restoration.netmodel import EventSpec, Load, WeightOrderError, apply_event, load_event, load_feeder, parse_feeder
from restoration.oracle import brute_force_clr
from restoration.topology import find_target_islands, minimum_diameter_spanning_tree

from synth import balanced_feeder

DATA = resources.files("restoration") / "data"
W13 = (100, 10, 0.2)


@pytest.fixture(scope="module")
def ieee13():
    return load_feeder(DATA / "ieee13_mg.feeder")


@pytest.fixture(scope="module")
def case1_plans(ieee13):
    return solve_restoration(apply_event(ieee13, load_event(DATA / "ieee13_case1.event")))


def _restorable(net, ev=EventSpec()):
    return [i for i in find_target_islands(apply_event(net, ev)) if i.restorable]


def test_weight_scheme():
    ws = WeightScheme(W13)
    assert ws.n == 3 and ws.w(0) == math.inf and ws.w(4) == 0
    with pytest.raises(WeightOrderError):
        WeightScheme((1, 2))


def test_validate_weights_examples(ieee13):
    loads = [l for l in ieee13.loads.values() if l.id != "652"]
    rep = validate_weights(W13, loads)
    assert rep.condition2
    two = [Load(str(k), "x", 2, {"a": 10}) for k in range(6)] + [Load("h", "x", 1, {"a": 10})]
    assert not validate_weights((5, 1), two).condition2
    assert validate_weights((1,), [Load("a", "x", 1, {"a": 1})]).ok


def test_identify_k_star_examples():
    assert identify_k_star(214.86, 210, W13) == 3
    assert identify_k_star(210.31, 210.2, W13) == 4
    assert identify_k_star(400, 210, W13) == 1
    # negative gap inside tolerance is clamped
    assert identify_k_star(210.2 - 1e-12, 210.2, W13) == 4
    with pytest.raises(ValueError):
        identify_k_star(200, 210, W13)


def test_identify_k_star_boundary():
    # a gap a hair below a level weight still reaches that level
    assert identify_k_star(10 - 1e-9, 0, W13, tol=1e-7) == 2
    assert identify_k_star(10 - 1e-9, 0, W13) == 3


def test_compute_n_re_examples():
    assert compute_n_re(214.86, 210, 0.2) == 24
    assert compute_n_re(10.2, 10, 0.2) == 1
    assert compute_n_re(215.0, 210, 10) == 0  # outside the K* sandwich
    with pytest.raises(ValueError):
        compute_n_re(1, 0, 0.0)


@given(st.floats(0, 500), st.floats(0, 500))
def test_k_star_sandwich(a, b):
    hi, lo = max(a, b), min(a, b)
    ws = WeightScheme(W13)
    k = identify_k_star(hi, lo, ws)
    assert ws.w(k) <= hi - lo < ws.w(k - 1)
    if k <= ws.n:
        assert compute_n_re(hi, lo, ws.w(k)) >= 1


def _state(i, W_sdp, W_int, branch=None, k=None, n_re=0):
    st_ = IterState(i, {}, {}, W_sdp, W_int, frozenset(), frozenset(), 0.0, "optimal", 0.0)
    if branch:
        st_.batch = ConstraintBatch(frozenset(), frozenset(), branch, k, n_re)
    return st_


def test_optimality_criterion_examples():
    ok = IterationTrace([_state(0, 214.86, 210, STEP3, 3), _state(1, 210.31, 210.2, STEP3, 4), _state(2, 210.2, 210.2)])
    assert check_optimality_criterion(ok, W13) == VERIFIED
    s4 = IterationTrace([_state(0, 214.86, 210, STEP4, 3), _state(1, 210.2, 210.2)])
    assert check_optimality_criterion(s4, W13) == UNVERIFIED
    fb = IterationTrace([_state(0, 214.86, 210, FALLBACK, 3), _state(1, 210.2, 210.2)])
    assert check_optimality_criterion(fb, W13) == UNVERIFIED
    # step 5 promises n_re * w^K* = 2 * 0.2 of gain; only 0.2 arrives
    stall = IterationTrace([_state(0, 210.5, 210, STEP5, 3, 2), _state(1, 210.2, 210.2)])
    assert check_optimality_criterion(stall, W13) == UNVERIFIED
    good5 = IterationTrace([_state(0, 210.5, 210, STEP5, 3, 2), _state(1, 210.4, 210.4)])
    assert check_optimality_criterion(good5, W13) == VERIFIED


def test_case1_engine(case1_plans):
    plan = [p for p in case1_plans if p.status == "solved"][0]
    assert plan.restored == ("632", "645", "646", "675")
    assert plan.objective == 210.2
    assert plan.verdict == VERIFIED
    assert plan.iterations == 2
    assert plan.closed_switches == ["632-645", "633-671", "671-692"]
    assert plan.open_switches == ["634-675"]
    tr = plan.trace
    assert [s.branch for s in tr.states] == [STEP3, STEP3, "terminal"]
    first = tr.states[0].batch
    assert first.ones == {"675", "645", "646"} and "634" in first.zeros and first.k_star == 3
    second = tr.states[1].batch
    assert "611" in second.zeros and second.k_star == 4
    assert [s.W_int for s in tr.states] == [210.0, 210.2, 210.2]


def test_case1_other_island_unrestorable(case1_plans):
    other = [p for p in case1_plans if p.status != "solved"]
    assert other and all(p.status == "unrestorable" and not p.restored for p in other)


def test_everything_faulted(ieee13):
    plans = solve_restoration(apply_event(ieee13, EventSpec(tuple(ieee13.lines))))
    assert all(not p.restored for p in plans)


def _toy(p1, p2, cap, lvl=(1, 1)):
    return parse_feeder(
        f"""
levels = 10 1
[linecodes]
id phases unit z
z0 abc each 0j,0j,0j,0j,0j,0j
[buses]
id phases
s abc
x abc
y abc
[lines]
id from to code length
s-x s x z0 1
s-y s y z0 1
[loads]
bus level pa qa pb qb pc qc
x {lvl[0]} {p1} 0 {p1} 0 {p1} 0
y {lvl[1]} {p2} 0 {p2} 0 {p2} 0
[sources]
id bus kind p_rate q_rate
G s diesel {cap} {cap}
"""
    )


def test_symmetric_toy():
    net = _toy(30, 30, 90)
    isl = _restorable(net)[0]
    tree = minimum_diameter_spanning_tree(isl)
    gamma, tr = iterate(isl, tree, net.weights)
    g0 = tr.states[0].gamma
    assert g0["x"] == pytest.approx(0.5, abs=1e-3) and g0["y"] == pytest.approx(0.5, abs=1e-3)
    b = tr.states[0].batch
    assert b.branch == STEP5 and b.n_re == 1 and len(b.L_c3) == 1
    assert sum(gamma.values()) == 1
    oracle = brute_force_clr(isl, tree)
    assert oracle.objective == 10 and len(oracle.gammas) == 2
    assert gamma in oracle.gammas


def test_integral_first_round():
    net = _toy(20, 30, 500)
    plan = solve_island(_restorable(net)[0])
    assert plan.iterations == 0 and plan.restored == ("x", "y") and plan.verdict == VERIFIED


def test_sufficient_conditions():
    rep = check_sufficient_conditions(_restorable(_toy(20, 30, 500))[0])
    assert rep.condition1 and rep.condition2
    rep = check_sufficient_conditions(_restorable(_toy(30, 30, 500))[0])
    assert not rep.condition2
    net = _toy(20, 30, 500)
    net = replace(net, lines={k: replace(l, ampacity=1.0) if k == "s-x" else l for k, l in net.lines.items()})
    assert not check_sufficient_conditions(_restorable(net)[0]).condition1


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=10, deadline=None)
def test_sandwich_and_monotone(seed):
    net = balanced_feeder(np.random.default_rng(seed), n_bus=5, n_loads=4)
    for isl in _restorable(net):
        plan = solve_island(isl)
        if plan.status not in ("solved", "inexact"):
            continue
        s = plan.trace.states
        tol = 1e-6 * max(1.0, abs(s[0].W_sdp))
        assert s[0].W_sdp + tol >= plan.objective >= s[0].W_int - tol
        for a, b in zip(s, s[1:]):
            assert b.W_sdp <= a.W_sdp + tol
            new = {k for k in b.fixes if k not in a.fixes}
            assert new  # every round fixes something new
        assert plan.iterations <= len(isl.network.loads)
