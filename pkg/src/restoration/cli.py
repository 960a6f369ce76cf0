"""Command-line front end.

    restoration solve FEEDER EVENT [--out r.json] [--phasors v.csv] [--trajectory t.csv]
    restoration sweep FEEDER [--scenarios 200] [--seed 0] [--compare-milp] [--oracle]
    restoration oracle FEEDER EVENT
    restoration compare FEEDER EVENT [--islanded] [--fig7-csv f.csv]
    restoration validate FEEDER [--event EVENT] [--result r.json]

Exit codes: 0 success, 2 infeasible island, 1 any other failure.  Default
solver/engine settings come from the JSON file named by
``RESTORATION_SETTINGS`` (or ``--settings``); flags override it.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .conic import SolverSettings
from .engine import (
    UNVERIFIED,
    VERIFIED,
    EngineConfig,
    RestorationPlan,
    WeightScheme,
    check_sufficient_conditions,
    compare_formulations,
    solve_island,
    solve_islanded,
    solve_restoration,
    validate_weights,
)
from .models import ModelOptions
from .netmodel import EventSpec, FeederError, Network, apply_event, load_event, load_feeder, natural_key, validate_network
from .oracle import OracleLimitError, brute_force_clr
from .topology import find_target_islands

log = logging.getLogger("restoration")

ENV_SETTINGS = "RESTORATION_SETTINGS"
SCHEMA_VERSION = "1"
EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2


class CliError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# settings
# ---------------------------------------------------------------------------


def _pick(cls, doc: dict, where: str) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise CliError(f"unknown {where} settings: {sorted(unknown)}")
    return doc


def load_settings(path: str | os.PathLike | None) -> EngineConfig:
    """EngineConfig from a JSON file ``{"solver": {...}, "engine": {...}, "model": {...}}``."""
    if not path:
        return EngineConfig()
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read settings file {path}: {exc}") from None
    unknown = set(doc) - {"solver", "engine", "model"}
    if unknown:
        raise CliError(f"unknown settings sections: {sorted(unknown)}")
    solver = SolverSettings(**_pick(SolverSettings, doc.get("solver", {}), "solver"))
    model = ModelOptions(**_pick(ModelOptions, doc.get("model", {}), "model"))
    engine = _pick(EngineConfig, doc.get("engine", {}), "engine")
    engine.pop("solver", None)
    engine.pop("model", None)
    if "weights" in engine and engine["weights"] is not None:
        engine["weights"] = tuple(engine["weights"])
    return EngineConfig(solver=solver, model=model, **engine)


def _parse_weights(text: str | None):
    if text is None:
        return None
    try:
        w = tuple(float(x) for x in text.replace(",", " ").split())
    except ValueError:
        raise CliError(f"bad weight list {text!r}") from None
    WeightScheme(w)  # validates ordering
    return w


def config_from_args(args) -> EngineConfig:
    cfg = load_settings(args.settings or os.environ.get(ENV_SETTINGS))
    solver = cfg.solver
    if args.tol is not None:
        solver = replace(solver, tol=args.tol)
    model = cfg.model
    if args.reference is not None:
        model = replace(model, reference=args.reference)
    over = {"solver": solver, "model": model}
    if args.weights is not None:
        over["weights"] = _parse_weights(args.weights)
    if args.eps is not None:
        over["integrality_eps"] = args.eps
    if args.binding_tol is not None:
        over["binding_tol"] = args.binding_tol
    if args.rank_threshold is not None:
        over["rank_threshold"] = args.rank_threshold
    return replace(cfg, **over)


# ---------------------------------------------------------------------------
# documents
# ---------------------------------------------------------------------------


def _ids(xs) -> list[str]:
    return sorted((str(x) for x in xs), key=natural_key)


def _num(x: float) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise CliError(f"non-finite number in result: {x}")
    return 0.0 if x == 0 else x  # no negative zero in documents


def plan_to_dict(plan: RestorationPlan, timings: bool = True) -> dict:
    out = {
        "island": plan.island,
        "buses": _ids(plan.buses),
        "status": plan.status,
        "error": plan.error,
        "restored": list(plan.restored),
        "objective": _num(plan.objective),
        "verdict": plan.verdict,
        "iterations": plan.iterations,
        "rank_ratio": _num(plan.rank_ratio),
        "relaxation_rank_ratio": _num(plan.relaxation_rank_ratio),
        "gamma": {k: int(plan.gamma[k]) for k in _ids(plan.gamma)},
        "topology": None,
        "trajectory": [],
        "dispatch": None,
    }
    if plan.tree is not None:
        out["topology"] = {
            "edges": list(plan.tree.edges),
            "diameter": _num(plan.tree.diameter),
            "closed_switches": plan.closed_switches,
            "open_switches": plan.open_switches,
            "opened_fixed": list(plan.tree.opened_fixed),
        }
    if plan.trace is not None:
        for st in plan.trace.states:
            b = st.batch
            out["trajectory"].append(
                {
                    "round": st.index,
                    "W_sdp": _num(st.W_sdp),
                    "W_int": _num(st.W_int),
                    "branch": st.branch,
                    "k_star": st.k_star,
                    "n_re": st.n_re,
                    "fractional": _ids(st.L_ni),
                    "fixed_zero": _ids(b.zeros) if b else [],
                    "fixed_one": _ids(b.ones) if b else [],
                    "rank_ratio": _num(st.rank_ratio),
                }
            )
    if plan.profile is not None:
        pr = plan.profile
        out["dispatch"] = {
            "reference": pr.reference,
            "sources": {k: {"p_kw": _num(v[0]), "q_kvar": _num(v[1])} for k, v in sorted(pr.sources.items())},
            "losses_kw": _num(pr.losses),
            "voltages": {
                bus: {ph: {"magnitude": _num(mag), "angle_deg": _num(ang)} for _, ph, mag, ang in rows}
                for bus, rows in _group_rows(pr.table()).items()
            },
        }
    if timings:
        out["timings"] = {"elapsed_s": plan.elapsed}
        if plan.trace is not None:
            out["timings"]["solver_s"] = math.fsum(s.solve_time for s in plan.trace.states)
    return out


def _group_rows(rows):
    out: dict[str, list] = {}
    for r in rows:
        out.setdefault(r[0], []).append(r)
    return out


def _schema():
    return json.loads(resources.files("restoration").joinpath("data/result.schema.json").read_text())


def validate_document(doc: dict) -> list[str]:
    """Schema violations of ``doc`` (empty when valid).  Needs ``jsonschema``."""
    import jsonschema

    v = jsonschema.Draft202012Validator(_schema())
    return [f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}" for e in v.iter_errors(doc)]


def _emit(doc: dict, path: str | None) -> None:
    try:
        problems = validate_document(doc)
    except ImportError:
        problems = []
    if problems:
        raise CliError("result document fails the schema: " + "; ".join(problems[:5]))
    text = json.dumps(doc, indent=2, allow_nan=False) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _load_case(feeder: str, event: str | None):
    net = load_feeder(feeder)
    ev = load_event(event) if event else EventSpec()
    return net, ev, apply_event(net, ev)


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def run_solve(args) -> int:
    cfg = config_from_args(args)
    t0 = time.perf_counter()
    net, ev, post = _load_case(args.feeder, args.event)
    plans = solve_restoration(post, cfg)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "solve",
        "feeder": net.name,
        "event": json.loads(ev.to_json()),
        "plans": [plan_to_dict(p, not args.no_timings) for p in plans],
        "summary": {
            "objective": _num(math.fsum(p.objective for p in plans)),
            "restored": _ids(k for p in plans for k in p.restored),
            "islands": len(plans),
        },
    }
    if not args.no_timings:
        doc["timings"] = {"total_s": time.perf_counter() - t0}
    _emit(doc, args.out)
    if args.phasors:
        rows = []
        for p in plans:
            if p.profile is not None:
                rows += [(p.island, bus, ph, f"{mag:.6f}", f"{ang:.4f}") for bus, ph, mag, ang in p.profile.table()]
        _write_csv(args.phasors, ["island", "bus", "phase", "magnitude_pu", "angle_deg"], rows)
    if args.trajectory:
        rows = []
        for p in plans:
            for st in p.trace.states if p.trace else []:
                rows.append((p.island, st.index, repr(st.W_sdp), repr(st.W_int), st.branch, st.k_star or "", st.n_re))
        _write_csv(args.trajectory, ["island", "round", "W_sdp", "W_int", "branch", "k_star", "n_re"], rows)
    for p in plans:
        if p.status in ("error", "infeasible"):
            print(f"island {p.island}: {p.status}: {p.error}", file=sys.stderr)
    if any(p.status == "error" for p in plans):
        return EXIT_ERROR
    if any(p.status == "infeasible" for p in plans):
        return EXIT_INFEASIBLE
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    feeder: str
    scenarios: int = 200
    seed: int = 0
    max_faults: int = 2
    rating_range: tuple[float, float] = (0.5, 1.5)
    p_unavailable: float = 0.1
    shuffle_levels: bool = True
    compare_milp: bool = False
    oracle: bool = False
    oracle_max_loads: int = 10
    workers: int = 1
    timings: bool = True

    def __post_init__(self):
        if self.scenarios < 0 or self.max_faults < 0 or self.workers < 1:
            raise CliError("scenario count, fault count and workers must be nonnegative (workers >= 1)")
        lo, hi = self.rating_range
        if not 0 <= lo <= hi:
            raise CliError("rating range must satisfy 0 <= lo <= hi")
        if not 0 <= self.p_unavailable <= 1:
            raise CliError("unavailability probability must lie in [0, 1]")


def make_scenario(net: Network, spec: SweepSpec, index: int) -> tuple[Network, EventSpec, dict]:
    """Scenario ``index`` of the sweep; a pure function of (feeder, spec, seed, index)."""
    rng = np.random.default_rng([spec.seed, index])
    candidates = sorted((l.id for l in net.lines.values() if l.kind == "fixed" and l.energizable), key=natural_key)
    k = int(rng.integers(1, spec.max_faults + 1)) if spec.max_faults and candidates else 0
    faults = sorted((str(x) for x in rng.choice(candidates, size=min(k, len(candidates)), replace=False)), key=natural_key)
    sources = {}
    unavailable = []
    lo, hi = spec.rating_range
    for sid in sorted(net.sources, key=natural_key):
        s = net.sources[sid]
        if s.kind == "utility":
            sources[sid] = s
            continue
        f = float(rng.uniform(lo, hi))
        sources[sid] = replace(s, p_rate=round(s.p_rate * f, 1), q_rate=round(s.q_rate * f, 1))
        if rng.random() < spec.p_unavailable:
            unavailable.append(sid)
    load_ids = sorted(net.loads, key=natural_key)
    levels = [net.loads[i].level for i in load_ids]
    if spec.shuffle_levels:
        levels = [int(x) for x in rng.permutation(levels)]
    loads = {i: replace(net.loads[i], level=lv) for i, lv in zip(load_ids, levels)}
    scen = replace(net, sources=sources, loads=loads)
    ev = EventSpec(tuple(faults), tuple(unavailable))
    info = {
        "levels": {i: lv for i, lv in zip(load_ids, levels)},
        "ratings": {sid: _num(sources[sid].p_rate) for sid in sorted(sources, key=natural_key) if sources[sid].kind != "utility"},
    }
    return scen, ev, info


def _island_record(isl, plan: RestorationPlan, spec: SweepSpec, cfg: EngineConfig) -> dict:
    n_loads = len(isl.network.loads) if isl.network is not None else 0
    rec = {
        "island": isl.id,
        "status": plan.status,
        "error": plan.error,
        "loads": n_loads,
        "restored": list(plan.restored),
        "objective": _num(plan.objective),
        "verdict": plan.verdict,
        "iterations": plan.iterations,
        "rank_ratio": _num(plan.rank_ratio),
    }
    usable = plan.status in ("solved", "inexact")
    if spec.compare_milp:
        if usable:
            cmp = compare_formulations(isl, cfg, sdp_plan=plan, formulations=("milp",))
            milp = None if cmp.milp is None else _ids(cmp.milp)
            rec["milp"] = {
                "restored": milp,
                "same": cmp.same("sdp", "milp"),
                "superset": None if cmp.milp is None else bool(cmp.milp > cmp.sdp),
            }
            if "milp" in cmp.notes:
                rec["milp"]["note"] = cmp.notes["milp"]
        else:
            rec["milp"] = {"restored": None, "same": None, "superset": None, "note": f"sdp {plan.status}"}
    if spec.oracle:
        if not usable:
            rec["oracle"] = {"objective": None, "optima": [], "examined": 0, "same": None, "note": f"sdp {plan.status}"}
        elif n_loads > spec.oracle_max_loads:
            rec["oracle"] = {"objective": None, "optima": [], "examined": 0, "same": None, "note": "over load limit"}
        else:
            res = brute_force_clr(isl, plan.tree, cfg.weights, spec.oracle_max_loads, cfg.solver, cfg.model, cfg.rank_threshold)
            obj = res.objective if res.gammas else None
            rec["oracle"] = {
                "objective": None if obj is None else _num(obj),
                "optima": [_ids(k for k, v in g.items() if v) for g in res.gammas],
                "examined": res.examined,
                "same": None if obj is None else objectives_equal(plan.objective, obj),
            }
    return rec


def objectives_equal(a: float, b: float) -> bool:
    # both sides are fsums of level weights; only float summation order can differ
    return math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-12)


def _run_scenario(job) -> dict:
    net, spec, cfg, index = job
    t0 = time.perf_counter()
    scen, ev, info = make_scenario(net, spec, index)
    rec = {"index": index, "event": json.loads(ev.to_json()), **info, "islands": [], "error": None}
    try:
        post = apply_event(scen, ev)
        for isl in find_target_islands(post):
            if not isl.restorable:
                continue
            plan = solve_island(isl, cfg)
            rec["islands"].append(_island_record(isl, plan, spec, cfg))
    except Exception as exc:  # the sweep carries on
        log.error("scenario %d failed: %s", index, exc)
        rec["error"] = f"{type(exc).__name__}: {exc}"
    good = [r for r in rec["islands"] if r["status"] in ("solved", "inexact")]
    rec["iterations"] = max((r["iterations"] for r in good), default=0)
    rec["verified"] = all(r["verdict"] == VERIFIED for r in good)
    if spec.timings:
        rec["timings"] = {"elapsed_s": time.perf_counter() - t0}
    return rec


def _scenario_ok(rec: dict) -> bool:
    return rec["error"] is None and all(r["status"] in ("solved", "inexact") for r in rec["islands"])


def aggregate(records: list[dict], spec: SweepSpec) -> dict:
    ok = [r for r in records if _scenario_ok(r)]
    hist: dict[int, int] = {}
    for r in ok:
        hist[r["iterations"]] = hist.get(r["iterations"], 0) + 1
    agg = {
        "iteration_histogram": {str(k): hist[k] for k in sorted(hist)},
        "verified_rate": (sum(r["verified"] for r in ok) / len(ok)) if ok else None,
        "solved_scenarios": len(ok),
        "failed_scenarios": len(records) - len(ok),
        "max_iterations": max((r["iterations"] for r in ok), default=0),
        "iterations_within_loads": all(i["iterations"] <= i["loads"] for r in records for i in r["islands"]),
    }
    if spec.compare_milp:
        cmp = [r for r in ok if any(i.get("milp", {}).get("same") is not None for i in r["islands"])]
        same = [r for r in cmp if all(i["milp"]["same"] in (True, None) for i in r["islands"])]
        sup = [r for r in cmp if any(i["milp"].get("superset") for i in r["islands"])]
        agg["milp"] = {"compared": len(cmp), "same": len(same), "different": len(cmp) - len(same), "superset": len(sup)}
    if spec.oracle:
        isl = [i for r in ok for i in r["islands"] if i.get("oracle", {}).get("same") is not None]
        ver = [i for i in isl if i["verdict"] == VERIFIED]
        agg["oracle"] = {
            "checked": len(isl),
            "agree": sum(i["oracle"]["same"] for i in isl),
            "verified_checked": len(ver),
            "verified_agree": sum(i["oracle"]["same"] for i in ver),
            "verified_disagree": sum(not i["oracle"]["same"] for i in ver),
        }
    return agg


def run_sweep_spec(spec: SweepSpec, cfg: EngineConfig) -> dict:
    net = load_feeder(spec.feeder)
    t0 = time.perf_counter()
    jobs = [(net, spec, cfg, i) for i in range(spec.scenarios)]
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            records = list(pool.map(_run_scenario, jobs))  # map keeps index order
    else:
        records = [_run_scenario(j) for j in jobs]
    spec_doc = {k: v for k, v in asdict(spec).items() if k not in ("feeder", "workers", "timings")}
    spec_doc["rating_range"] = list(spec.rating_range)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "sweep",
        "feeder": net.name,
        "seed": spec.seed,
        "scenarios": spec.scenarios,
        "spec": spec_doc,
        "records": records,
        "aggregate": aggregate(records, spec),
    }
    if spec.timings:
        doc["timings"] = {"total_s": time.perf_counter() - t0}
    return doc


def run_sweep(args) -> int:
    cfg = config_from_args(args)
    spec = SweepSpec(
        feeder=args.feeder,
        scenarios=args.scenarios,
        seed=args.seed,
        max_faults=args.max_faults,
        rating_range=tuple(args.rating_range),
        p_unavailable=args.p_unavailable,
        shuffle_levels=not args.no_shuffle_levels,
        compare_milp=args.compare_milp,
        oracle=args.oracle,
        oracle_max_loads=args.oracle_max_loads,
        workers=args.workers,
        timings=not args.no_timings,
    )
    doc = run_sweep_spec(spec, cfg)
    _emit(doc, args.out)
    a = doc["aggregate"]
    print(
        f"{a['solved_scenarios']}/{spec.scenarios} scenarios solved; iterations {a['iteration_histogram']}; "
        f"verified rate {a['verified_rate']}",
        file=sys.stderr,
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# oracle / compare / validate
# ---------------------------------------------------------------------------


def run_oracle(args) -> int:
    cfg = config_from_args(args)
    t0 = time.perf_counter()
    net, ev, post = _load_case(args.feeder, args.event)
    islands = []
    for isl in find_target_islands(post):
        if not isl.restorable:
            continue
        plan = solve_island(isl, cfg)
        entry = {"island": isl.id, "objective": None, "optima": [], "examined": 0, "feasible": 0}
        if plan.tree is None:
            entry["note"] = f"sdp {plan.status}: {plan.error}"
            islands.append(entry)
            continue
        try:
            res = brute_force_clr(isl, plan.tree, cfg.weights, args.max_loads, cfg.solver, cfg.model, cfg.rank_threshold)
        except OracleLimitError as exc:
            raise CliError(str(exc)) from None
        entry.update(
            objective=_num(res.objective) if res.gammas else None,
            optima=[_ids(k for k, v in g.items() if v) for g in res.gammas],
            examined=res.examined,
            feasible=res.feasible,
            engine_objective=_num(plan.objective) if plan.status in ("solved", "inexact") else None,
            engine_verdict=plan.verdict,
        )
        if res.gammas and entry["engine_objective"] is not None:
            entry["agree"] = objectives_equal(plan.objective, res.objective)
        else:
            entry["agree"] = None
        islands.append(entry)
    doc = {"schema_version": SCHEMA_VERSION, "kind": "oracle", "feeder": net.name, "islands": islands}
    if not args.no_timings:
        doc["timings"] = {"total_s": time.perf_counter() - t0}
    _emit(doc, args.out)
    return EXIT_OK


def _by_level(net: Network, coordinated, islanded, weights) -> list[dict]:
    ws = WeightScheme.of(weights if weights is not None else net.weights)
    rows = []
    for lvl in range(1, ws.n + 1):
        rows.append(
            {
                "level": lvl,
                "weight": ws.w(lvl),
                "loads": sum(1 for l in net.loads.values() if l.level == lvl),
                "coordinated": sum(1 for k in coordinated if net.loads[k].level == lvl),
                "islanded": sum(1 for k in islanded if net.loads[k].level == lvl),
            }
        )
    return rows


def run_compare(args) -> int:
    cfg = config_from_args(args)
    t0 = time.perf_counter()
    net, ev, post = _load_case(args.feeder, args.event)
    islands = []
    plans = []
    for isl in find_target_islands(post):
        if not isl.restorable:
            continue
        plan = solve_island(isl, cfg)
        plans.append(plan)
        cmp = compare_formulations(isl, cfg, sdp_plan=plan)
        islands.append(
            {
                "island": isl.id,
                "sdp": None if cmp.sdp is None else _ids(cmp.sdp),
                "milp": None if cmp.milp is None else _ids(cmp.milp),
                "misocp": None if cmp.misocp is None else _ids(cmp.misocp),
                "sdp_milp_same": cmp.same("sdp", "milp"),
                "milp_superset": None if cmp.milp is None or cmp.sdp is None else bool(cmp.milp > cmp.sdp),
                "sdp_misocp_same": cmp.same("sdp", "misocp"),
                "notes": dict(sorted(cmp.notes.items())),
            }
        )
    doc = {"schema_version": SCHEMA_VERSION, "kind": "compare", "feeder": net.name, "islands": islands}
    if args.islanded:
        iso = solve_islanded(post, cfg)
        coord_set = [k for p in plans for k in p.restored]
        iso_set = [k for ps in iso.values() for p in ps for k in p.restored]
        coord = math.fsum(p.objective for p in plans)
        alone = math.fsum(p.objective for ps in iso.values() for p in ps)
        rows = _by_level(net, coord_set, iso_set, cfg.weights)
        doc["coordination"] = {
            "coordinated": _num(coord),
            "islanded": _num(alone),
            "improvement": _num((coord - alone) / alone) if alone > 0 else None,
            "by_level": rows,
        }
        if args.fig7_csv:
            _write_csv(
                args.fig7_csv,
                ["level", "weight", "loads", "coordinated", "islanded"],
                [(r["level"], r["weight"], r["loads"], r["coordinated"], r["islanded"]) for r in rows],
            )
    if not args.no_timings:
        doc["timings"] = {"total_s": time.perf_counter() - t0}
    _emit(doc, args.out)
    return EXIT_OK


def run_validate(args) -> int:
    if args.result:
        try:
            doc = json.loads(Path(args.result).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read result {args.result}: {exc}") from None
        problems = validate_document(doc)
        for p in problems:
            print(p, file=sys.stderr)
        return EXIT_OK if not problems else EXIT_ERROR
    net = load_feeder(args.feeder)
    rep = validate_network(net)
    warnings = []
    weights = _parse_weights(args.weights) if args.weights else net.weights
    wr = validate_weights(weights, net.loads.values(), margin=args.margin)
    warnings += wr.violations
    islands = []
    if args.event:
        post = apply_event(net, load_event(args.event))
        for isl in find_target_islands(post):
            if not isl.restorable:
                continue
            cr = check_sufficient_conditions(isl, weights)
            islands.append({"island": isl.id, "condition1": cr.condition1, "condition2": cr.condition2, "notes": cr.notes})
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "validate",
        "feeder": net.name,
        "ok": rep.ok,
        "errors": list(rep.entries),
        "warnings": warnings,
        "weights": {"values": list(weights), "condition1": wr.condition1, "condition2": wr.condition2, "margin": wr.margin},
        "islands": islands,
    }
    _emit(doc, args.out)
    return EXIT_OK if rep.ok else EXIT_ERROR


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", "-o", help="result JSON path (default: stdout)")
    p.add_argument("--settings", help=f"settings JSON (default: ${ENV_SETTINGS})")
    p.add_argument("--weights", help="level weights, e.g. '100,10,0.2'")
    p.add_argument("--reference", help="reference bus override")
    p.add_argument("--tol", type=float, help="conic solver tolerance")
    p.add_argument("--eps", type=float, help="integrality tolerance for gamma")
    p.add_argument("--binding-tol", type=float, help="relative tolerance for binding V/I limits")
    p.add_argument("--rank-threshold", type=float, help="rank-one ratio above which recovery is refused")
    p.add_argument("--no-timings", action="store_true", help="omit wall-clock fields (byte-stable output)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="restoration", description="Critical load restoration with coordinated sources.")
    ap.add_argument("--log-level", default="WARNING")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="restore one event")
    p.add_argument("feeder")
    p.add_argument("event")
    p.add_argument("--phasors", help="CSV of recovered voltage phasors")
    p.add_argument("--trajectory", help="CSV of per-round W_sdp / W_int")
    _common(p)
    p.set_defaults(func=run_solve)

    p = sub.add_parser("sweep", help="randomized scenario sweep")
    p.add_argument("feeder")
    p.add_argument("--scenarios", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-faults", type=int, default=2)
    p.add_argument("--rating-range", type=float, nargs=2, default=(0.5, 1.5), metavar=("LO", "HI"))
    p.add_argument("--p-unavailable", type=float, default=0.1)
    p.add_argument("--no-shuffle-levels", action="store_true")
    p.add_argument("--compare-milp", action="store_true")
    p.add_argument("--oracle", action="store_true", help="brute-force check of small islands")
    p.add_argument("--oracle-max-loads", type=int, default=10)
    p.add_argument("--workers", type=int, default=1)
    _common(p)
    p.set_defaults(func=run_sweep)

    p = sub.add_parser("oracle", help="brute-force load statuses")
    p.add_argument("feeder")
    p.add_argument("event")
    p.add_argument("--max-loads", type=int, default=16)
    _common(p)
    p.set_defaults(func=run_oracle)

    p = sub.add_parser("compare", help="SDP vs MILP vs MISOCP restored sets")
    p.add_argument("feeder")
    p.add_argument("event")
    p.add_argument("--islanded", action="store_true", help="also solve each microgrid alone")
    p.add_argument("--fig7-csv", help="per-level restored counts, coordinated vs islanded")
    _common(p)
    p.set_defaults(func=run_compare)

    p = sub.add_parser("validate", help="check a feeder (and event) or a result document")
    p.add_argument("feeder", nargs="?")
    p.add_argument("--event")
    p.add_argument("--result", help="validate this result JSON against the schema instead")
    p.add_argument("--margin", type=float, default=10.0, help="dominance margin for weight condition 1")
    _common(p)
    p.set_defaults(func=run_validate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING), stream=sys.stderr)
    if args.command == "validate" and not (args.feeder or args.result):
        ap.error("validate needs a feeder or --result")
    try:
        return args.func(args)
    except (CliError, FeederError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
