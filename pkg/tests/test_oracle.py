from importlib import resources

import pytest

from restoration.netmodel import EventSpec, apply_event, load_event, load_feeder, parse_feeder
from restoration.oracle import OracleLimitError, brute_force_clr, brute_force_mdst
from restoration.topology import IslandGraph, find_target_islands, minimum_diameter_spanning_tree

DATA = resources.files("restoration") / "data"


def _island(net, ev=EventSpec()):
    isl = [i for i in find_target_islands(apply_event(net, ev)) if i.restorable][0]
    return isl, minimum_diameter_spanning_tree(isl)


def test_case1_oracle():
    net = load_feeder(DATA / "ieee13_mg.feeder")
    isl, tree = _island(net, load_event(DATA / "ieee13_case1.event"))
    res = brute_force_clr(isl, tree)
    assert res.objective == 210.2
    optima = [{k for k, v in g.items() if v} for g in res.gammas]
    assert {"632", "645", "646", "675"} in optima
    # 611 and 632 are both level 3 and interchangeable here
    assert all(len(s) == 4 and {"645", "646", "675"} <= s for s in optima)


def test_single_load():
    net = parse_feeder(
        """
levels = 1
[linecodes]
id phases unit z
c a mile 0.1+0.1j
[buses]
id phases
s a
l a
[lines]
id from to code length
s-l s l c 1
[loads]
bus level pa qa
l 1 10 2
[sources]
id bus kind p_rate
G s diesel 50
"""
    )
    isl, tree = _island(net)
    res = brute_force_clr(isl, tree)
    assert res.gammas == [{"l": 1}] and res.examined == 1


def test_load_limit():
    net = load_feeder(DATA / "ieee13_mg.feeder")
    isl, tree = _island(net, load_event(DATA / "ieee13_case1.event"))
    with pytest.raises(OracleLimitError):
        brute_force_clr(isl, tree, max_loads=3)


def test_mdst_oracle_examples():
    tree = IslandGraph.from_edges([(1, 2, 1), (2, 3, 2.5)])
    assert brute_force_mdst(tree) == 3.5
    many = IslandGraph.from_edges([(a, b, 1) for a in range(1, 7) for b in range(a + 1, 7)])
    with pytest.raises(OracleLimitError):
        brute_force_mdst(many, max_extra_edges=8)
