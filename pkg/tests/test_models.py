import math
from importlib import resources

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from restoration.conic import solve_conic, solve_mip
from restoration.engine import EngineConfig, final_dispatch, solve_misocp
from restoration.models import (
    ModelOptions,
    UnbalancedNetworkError,
    _ratio,
    balance_residual,
    build_clr_milp,
    build_clr_misocp,
    build_clr_sdp,
    rank1_ratio,
    restored_set,
    socp_exactness,
    socp_residual_at,
)
from restoration.netmodel import EventSpec, apply_event, load_event, load_feeder, parse_feeder
from restoration.topology import find_target_islands, minimum_diameter_spanning_tree

from synth import balanced_feeder

DATA = resources.files("restoration") / "data"
CASE1_GAMMA = {"632": 1, "634": 0, "671": 0, "675": 1, "645": 1, "646": 1, "611": 0}


def _island(net, event=EventSpec()):
    isl = [i for i in find_target_islands(apply_event(net, event)) if i.restorable]
    assert len(isl) == 1
    return isl[0], minimum_diameter_spanning_tree(isl[0])


@pytest.fixture(scope="module")
def case1():
    net = load_feeder(DATA / "ieee13_mg.feeder")
    return _island(net, load_event(DATA / "ieee13_case1.event"))


def _tiny(p_load, p_rate, z="0.2+0.4j", phases="abc", extra=""):
    n = len(phases)
    zz = ",".join([z if i == j else "0j" for i in range(n) for j in range(i, n)])
    cells = " ".join(f"{p_load} {0.3 * p_load}" if ph in phases else "- -" for ph in "abc")
    return parse_feeder(
        f"""
levels = 10 1
[linecodes]
id phases unit z
c {phases} mile {zz}
[buses]
id phases
s {phases}
l {phases}
{extra}
[lines]
id from to code length
s-l s l c 0.5
[loads]
bus level pa qa pb qb pc qc
l 1 {cells}
[sources]
id bus kind p_rate
G s diesel {p_rate}
"""
    )


def test_case1_initial_relaxation(case1):
    isl, tree = case1
    prog, vm = build_clr_sdp(isl, tree, None)
    sol = solve_conic(prog)
    g = vm.gamma_values(sol)
    w = math.fsum(vm.load_weight(k) * v for k, v in g.items())
    assert w == pytest.approx(214.86, abs=0.01)
    assert g["634"] == pytest.approx(0.49, abs=0.01)
    assert len(vm.gamma) == len(isl.network.loads)


def test_all_fixed_zero(case1):
    isl, tree = case1
    prog, vm = build_clr_sdp(isl, tree, None, {k: 0 for k in isl.network.loads})
    sol = solve_conic(prog)
    assert sol.optimal
    for P in vm.gen_p.values():
        assert abs(sol.value(P).sum()) < 1e-4  # p.u., solver-tolerance level


def test_single_load_within_rating():
    net = _tiny(30, 200)
    isl, tree = _island(net)
    prog, vm = build_clr_sdp(isl, tree, None)
    sol = solve_conic(prog)
    assert restored_set(vm.gamma_values(sol)) == {"l"}


def test_misocp_over_rating():
    isl, tree = _island(_tiny(100, 200))  # 300 kW load, 200 kW source
    prog, vm = build_clr_misocp(isl, tree)
    sol = solve_mip(prog)
    assert vm.gamma_values(sol)["l"] == pytest.approx(0.0, abs=1e-6)


def test_lossless_misocp_equals_sdp():
    isl, tree = _island(_tiny(30, 200, z="0j"))
    a = solve_conic(build_clr_sdp(isl, tree, None)[0])
    pm, vm = build_clr_misocp(isl, tree)
    b = solve_mip(pm)
    ws = vm.gamma_values(b)
    assert ws["l"] == pytest.approx(1.0, abs=1e-6)
    pa, va = build_clr_sdp(isl, tree, None)
    assert restored_set(va.gamma_values(solve_conic(pa))) == restored_set(ws)


def test_misocp_rejects_unbalanced(case1):
    isl, tree = case1
    with pytest.raises(UnbalancedNetworkError):
        build_clr_misocp(isl, tree)


def test_three_bus_lossy_residual():
    rng = np.random.default_rng(5)
    net = balanced_feeder(rng, n_bus=3, n_loads=2, n_sources=1)
    isl, tree = _island(net)
    res = solve_misocp(isl, tree)
    assert res.residual <= 1e-6


def test_milp_infeasible_band():
    net = _tiny(30, 200, extra="")
    bad = net.buses["l"]
    from dataclasses import replace

    net = replace(net, buses={**net.buses, "l": replace(bad, vmin=(1.05,) * 3, vmax=(0.95,) * 3)})
    isl, tree = _island(net)
    prog, _ = build_clr_milp(isl, tree, None)
    assert not solve_mip(prog).optimal


def test_rank_ratio_examples():
    v = np.array([1.0, 0.5j, -0.2])
    assert _ratio(np.outer(v, v.conj())) == pytest.approx(0.0, abs=1e-12)
    assert _ratio(np.eye(3)) == pytest.approx(1.0)


def test_socp_residual_examples():
    assert socp_residual_at({"x": (0.0, 0.0, 0.0, 1.0)}) == 0.0
    # P^2+Q^2 = 0.25 with v = 1 gives l = 0.25; inflate l by 0.1
    assert socp_residual_at({"x": (0.3, 0.4, 0.35, 1.0)}) == pytest.approx(0.1)


def test_case1_dispatch(case1):
    isl, tree = case1
    prof, sol, vm = final_dispatch(isl, tree, CASE1_GAMMA)
    assert prof.reference == "633"
    assert prof.losses == pytest.approx(1.30, abs=0.3)
    assert prof.magnitude("675", "a") == pytest.approx(0.9976, abs=0.002)
    assert prof.angle("675", "a") == pytest.approx(-0.0724, abs=0.05)
    assert balance_residual(prof, sol, vm) <= 1e-6
    assert rank1_ratio(sol, vm) <= 1e-5


def test_zero_restoration_dispatch(case1):
    isl, tree = case1
    prof, _, _ = final_dispatch(isl, tree, {k: 0 for k in CASE1_GAMMA})
    assert all(abs(p) < 1e-3 for p, _ in prof.sources.values())


def test_two_bus_balance():
    isl, tree = _island(_tiny(30, 200))
    prof, sol, vm = final_dispatch(isl, tree, {"l": 1})
    gen = sum(p for p, _ in prof.sources.values())
    assert gen == pytest.approx(90 + prof.losses, abs=1e-3)
    assert prof.losses > 0
    assert balance_residual(prof, sol, vm) <= 1e-6


def test_single_bus_island():
    net = parse_feeder(
        """
levels = 1
[linecodes]
id phases unit z
[buses]
id phases
s abc
[loads]
bus level pa qa pb qb pc qc
s 1 10 1 10 1 10 1
[sources]
id bus kind p_rate
G s diesel 100
"""
    )
    isl, tree = _island(net)
    prof, _, _ = final_dispatch(isl, tree, {"s": 1})
    assert list(prof.voltages) == ["s"]
    assert abs(prof.voltages["s"]["a"] - 1) < 1e-9


@given(st.integers(0, 2**32 - 1), st.data())
@settings(max_examples=8, deadline=None)
def test_more_fixes_never_help(seed, data):
    net = balanced_feeder(np.random.default_rng(seed), n_bus=5, n_loads=4)
    isl, tree = _island(net)
    loads = sorted(net.loads)
    f1 = {k: data.draw(st.sampled_from([0, 1])) for k in data.draw(st.lists(st.sampled_from(loads), unique=True))}
    extra = [k for k in loads if k not in f1]
    f2 = dict(f1)
    if extra:
        f2[extra[0]] = 0
    opts = ModelOptions()
    objs = []
    for fixes in (f1, f2):
        prog, vm = build_clr_sdp(isl, tree, None, fixes, opts)
        sol = solve_conic(prog)
        if not sol.optimal:
            objs.append(-math.inf)
            continue
        g = vm.gamma_values(sol)
        assert all(-1e-6 <= v <= 1 + 1e-6 for v in g.values())
        objs.append(math.fsum(vm.load_weight(k) * v for k, v in g.items()))
    if objs[0] == -math.inf:
        assert objs[1] == -math.inf
    else:
        assert objs[1] <= objs[0] + 1e-6 * max(1.0, abs(objs[0]))
