"""Write the modified 123-node feeder used for the coordinated-restoration case.

Line, configuration and load tables are the standard 123-node test feeder
values; microgrids, sources and load priorities are added on top.  Run from
the repository root: ``python3 tools/make_ieee123.py``.
"""

from pathlib import Path

CONFIGS = {
    # ohm/mile, upper triangle row-major
    "1": ("abc", "0.4576+1.0780j,0.1560+0.5017j,0.1535+0.3849j,0.4666+1.0482j,0.1580+0.4236j,0.4615+1.0651j"),
    "2": ("abc", "0.4666+1.0482j,0.1580+0.4236j,0.1560+0.5017j,0.4615+1.0651j,0.1535+0.3849j,0.4576+1.0780j"),
    "3": ("abc", "0.4615+1.0651j,0.1535+0.3849j,0.1580+0.4236j,0.4576+1.0780j,0.1560+0.5017j,0.4666+1.0482j"),
    "4": ("abc", "0.4615+1.0651j,0.1580+0.4236j,0.1535+0.3849j,0.4666+1.0482j,0.1560+0.5017j,0.4576+1.0780j"),
    "5": ("abc", "0.4666+1.0482j,0.1560+0.5017j,0.1580+0.4236j,0.4576+1.0780j,0.1535+0.3849j,0.4615+1.0651j"),
    "6": ("abc", "0.4576+1.0780j,0.1535+0.3849j,0.1560+0.5017j,0.4615+1.0651j,0.1580+0.4236j,0.4666+1.0482j"),
    "7": ("ac", "0.4576+1.0780j,0.1535+0.3849j,0.4615+1.0651j"),
    "8": ("ab", "0.4576+1.0780j,0.1535+0.3849j,0.4615+1.0651j"),
    "9": ("a", "1.3292+1.3475j"),
    "10": ("b", "1.3292+1.3475j"),
    "11": ("c", "1.3292+1.3475j"),
    "12": ("abc", "1.5209+0.7521j,0.5198+0.2775j,0.4924+0.2157j,1.5329+0.7162j,0.5198+0.2775j,1.5209+0.7521j"),
}
AMPACITY = {**{k: 530 for k in "12345678"}, "9": 230, "10": 230, "11": 230, "12": 230}

SEGMENTS = """
1 2 175 10; 1 3 250 11; 1 7 300 1; 3 4 200 11; 3 5 325 11; 5 6 250 11; 7 8 200 1; 8 12 225 10;
8 9 225 9; 8 13 300 1; 9 14 425 9; 13 34 150 11; 13 18 825 2; 14 11 250 9; 14 10 250 9; 15 16 375 11;
15 17 350 11; 18 19 250 9; 18 21 300 2; 19 20 325 9; 21 22 525 10; 21 23 250 2; 23 24 550 11; 23 25 275 2;
25 26 350 7; 25 28 200 2; 26 27 275 7; 26 31 225 11; 27 33 500 9; 28 29 300 2; 29 30 350 2; 30 250 200 2;
31 32 300 11; 34 15 100 11; 35 36 650 8; 35 40 250 1; 36 37 300 9; 36 38 250 10; 38 39 325 10; 40 41 325 11;
40 42 250 1; 42 43 500 10; 42 44 200 1; 44 45 200 9; 44 47 250 1; 45 46 300 9; 47 48 150 4; 47 49 250 4;
49 50 250 4; 50 51 250 4; 51 151 500 4; 52 53 200 1; 53 54 125 1; 54 55 275 3; 54 57 350 3; 55 56 275 3;
57 58 250 10; 57 60 750 3; 58 59 250 10; 60 61 550 5; 60 62 250 12; 62 63 175 12; 63 64 350 12; 64 65 425 12;
65 66 325 12; 67 68 200 9; 67 72 275 3; 67 97 250 3; 68 69 275 9; 69 70 325 9; 70 71 275 9; 72 73 275 11;
72 76 200 3; 73 74 350 11; 74 75 400 11; 76 77 400 6; 76 86 700 3; 77 78 100 6; 78 79 225 6; 78 80 475 6;
80 81 475 6; 81 82 250 6; 81 84 675 11; 82 83 250 6; 84 85 475 11; 86 87 450 6; 87 88 175 9; 87 89 275 6;
89 90 225 10; 89 91 225 6; 91 92 300 11; 91 93 225 6; 93 94 275 9; 93 95 300 6; 95 96 200 10; 97 98 275 3;
98 99 550 3; 99 100 300 3; 100 450 800 3; 101 102 225 11; 101 105 275 3; 102 103 325 11; 103 104 700 11;
105 106 225 10; 105 108 325 3; 106 107 575 10; 108 109 450 9; 108 300 1000 3; 109 110 300 9; 110 111 575 9;
110 112 125 9; 112 113 525 9; 113 114 325 9; 135 35 375 4; 149 1 400 1; 152 52 400 1; 160 67 350 6;
197 101 250 3
"""

# (from, to, kind, state); switches carry no impedance
SWITCHES = [
    ("13", "152", "switch", "closed"),
    ("18", "135", "switch", "closed"),
    ("60", "160", "switch", "closed"),
    ("97", "197", "switch", "closed"),
    ("149", "150", "switch", "closed"),
    ("151", "300", "switch", "open"),
    ("54", "94", "tie", "open"),
    ("250", "251", "tie", "open"),
    ("300", "350", "tie", "open"),
    ("450", "451", "tie", "open"),
]
# lines at microgrid boundaries become switchable (open in islanded operation)
MG_BOUNDARY = {("13", "18"), ("160", "67"), ("67", "97")}

# (bus, conn, {phase: (kW, kvar)}); delta keys a/b/c mean ab/bc/ca
LOADS_RAW = """
1 wye a 40 20; 2 wye b 20 10; 4 wye c 40 20; 5 wye c 20 10; 6 wye c 40 20; 7 wye a 20 10; 9 wye a 40 20;
10 wye a 20 10; 11 wye a 40 20; 12 wye b 20 10; 16 wye c 40 20; 17 wye c 20 10; 19 wye a 40 20;
20 wye a 40 20; 22 wye b 40 20; 24 wye c 40 20; 28 wye a 40 20; 29 wye a 40 20; 30 wye c 40 20;
31 wye c 20 10; 32 wye c 20 10; 33 wye a 40 20; 34 wye c 40 20; 35 delta a 40 20; 37 wye a 40 20;
38 wye b 20 10; 39 wye b 20 10; 41 wye c 20 10; 42 wye a 20 10; 43 wye b 40 20; 45 wye a 20 10;
46 wye a 20 10; 47 wye abc 35 25 35 25 35 25; 48 wye abc 70 50 70 50 70 50; 49 wye abc 35 25 70 50 35 20;
50 wye c 40 20; 51 wye a 20 10; 52 wye a 40 20; 53 wye a 40 20; 55 wye a 20 10; 56 wye b 20 10;
58 wye b 20 10; 59 wye b 20 10; 60 wye a 20 10; 62 wye c 40 20; 63 wye a 40 20; 64 wye b 75 35;
65 delta abc 35 25 35 25 70 50; 66 wye c 75 35; 68 wye a 20 10; 69 wye a 40 20; 70 wye a 20 10;
71 wye a 40 20; 72 wye abc 20 10 20 10 20 10; 73 wye c 40 20; 74 wye c 40 20; 75 wye c 40 20;
76 delta abc 105 80 70 50 70 50; 77 wye b 40 20; 79 wye a 40 20; 80 wye b 40 20; 82 wye a 40 20;
83 wye c 20 10; 84 wye c 20 10; 85 wye c 40 20; 86 wye b 20 10; 87 wye b 40 20; 88 wye a 40 20;
90 wye b 40 20; 92 wye c 40 20; 94 wye a 40 20; 95 wye b 20 10; 96 wye b 20 10; 98 wye a 40 20;
99 wye b 40 20; 100 wye c 40 20; 102 wye c 20 10; 103 wye c 40 20; 104 wye c 40 20; 106 wye b 40 20;
107 wye b 40 20; 109 wye a 40 20; 111 wye a 20 10; 112 wye a 20 10; 113 wye a 40 20; 114 wye a 20 10
"""

LEVEL1 = {"39", "50", "51", "106", "109", "112", "72", "76", "86", "87", "88", "1", "60"}
LEVEL2 = {"7", "52", "55", "59", "62", "104", "107", "94", "95"}

MG1 = set("18 19 20 21 22 23 24 25 26 27 28 29 30 31 32 33 35 36 37 38 39 40 41 42 43 44 45 46 47 48 49 50 51 135 151 250 251".split())
MG2 = set("300 350 101 102 103 104 105 106 107 108 109 110 111 112 113 114 97 98 99 100 197 450 451".split())
MG3 = {str(b) for b in range(67, 97)}

SOURCES = [
    # id, bus, kind, kW, kvar, mg
    ("DG1", "151", "diesel", 230, 172.5, "1"),
    ("DG2", "50", "pv", 25, 0, "1"),
    ("DG3", "49", "storage", 35, 26.25, "1"),
    ("DG4", "300", "diesel", 140, 105, "2"),
    ("DG5", "108", "diesel", 70, 52.5, "2"),
    ("DG6", "105", "pv", 30, 0, "2"),
    ("DG7", "109", "pv", 15, 0, "2"),
    ("DG8", "72", "diesel", 140, 105, "3"),
    ("DG9", "86", "pv", 170, 0, "3"),
]


def key(b):
    return (len(b), b)


def main(out="src/restoration/data/ieee123_mg.feeder"):
    segs = [s.split() for s in SEGMENTS.replace("\n", " ").split(";") if s.strip()]
    phases: dict[str, set] = {}
    rows = []
    for a, b, ft, cfg in segs:
        ph = CONFIGS[cfg][0]
        for x in (a, b):
            phases.setdefault(x, set()).update(ph)
        kind = "switch" if (a, b) in MG_BOUNDARY else "fixed"
        state = "open" if kind == "switch" else "closed"
        rows.append((f"{a}-{b}", a, b, cfg, f"{ft}ft", kind, state, AMPACITY[cfg]))
    sw_codes = set()
    for a, b, kind, state in SWITCHES:
        # a switch carries the phases both ends have (an end known only through it takes the other's)
        known = [phases[x] for x in (a, b) if x in phases]
        ph = "".join(q for q in "abc" if all(q in k for k in known))
        for x in (a, b):
            phases.setdefault(x, set()).update(ph)
        sw_codes.add(ph)
        rows.append((f"{a}-{b}", a, b, f"sw{ph}", "1", kind, state, 530))
    rows.append(("61-610", "61", "610", "xfm1", "1", "fixed", "closed", 40))
    phases.setdefault("610", set()).update("abc")
    phases["61"].update("abc")

    loads = []
    for item in LOADS_RAW.replace("\n", " ").split(";"):
        t = item.split()
        if not t:
            continue
        bus, conn, ph, nums = t[0], t[1], t[2], [float(x) for x in t[3:]]
        pq = {p: (nums[2 * k], nums[2 * k + 1]) for k, p in enumerate(ph)}
        level = 1 if bus in LEVEL1 else 2 if bus in LEVEL2 else 3
        loads.append((bus, level, conn, pq))

    def mg(b):
        return "1" if b in MG1 else "2" if b in MG2 else "3" if b in MG3 else "-"

    out_lines = [
        "# Modified IEEE 123-node test feeder with three microgrids.",
        "#",
        "# Generated by tools/make_ieee123.py from the standard 123-node line,",
        "# configuration and load tables.",
        "#",
        "# Reconstruction notes:",
        "#  * voltage regulators are plain lines (no taps); shunt capacitors and",
        "#    line charging are not modelled; load models are constant power;",
        "#  * XFM-1 (150 kVA, 1.27 + j2.72 %) is a lumped impedance referred to 4.16 kV;",
        "#  * microgrid 1 = zone 18-51/135/151/250/251, microgrid 2 = zone",
        "#    97-114/197/300/350/450/451, microgrid 3 = buses 67-96; the lines",
        "#    where they meet the feeder (13-18, 160-67, 67-97) and 151-300 are",
        "#    switchable and open in islanded operation;",
        "#  * a 60 kW three-phase load is added at bus 72;",
        "#  * diesel and storage units get 0.8 power factor capability, PV units",
        "#    run at unity power factor with fixed active output;",
        "#  * load priorities are placed by hand (13 level-1, 9 level-2 loads).",
        "",
        "feeder = ieee123-mg",
        "format = 1",
        "base_kva = 1000",
        "base_kv = 2.401777",
        "rotation = abc",
        "levels = 100 10 0.1",
        "",
        "[linecodes]",
        "id     phases unit  z",
    ]
    for cid, (ph, z) in CONFIGS.items():
        out_lines.append(f"{cid:<6} {ph:<6} mile  {z}")
    for ph in sorted(sw_codes, key=lambda x: (-len(x), x)):
        n = len(ph) * (len(ph) + 1) // 2
        out_lines.append(f"{'sw' + ph:<6} {ph:<6} each  " + ",".join(["0j"] * n))
    out_lines.append("xfm1   abc    each  1.4652+3.1379j,0j,0j,1.4652+3.1379j,0j,1.4652+3.1379j")
    out_lines += ["", "[buses]", "id     phases  vmin  vmax  mg"]
    for b in sorted(phases, key=key):
        ph = "".join(p for p in "abc" if p in phases[b])
        out_lines.append(f"{b:<6} {ph:<7} 0.95  1.05  {mg(b)}")
    out_lines += ["", "[lines]", "id        from  to    code  length  kind    state   ampacity"]
    for r in rows:
        out_lines.append(f"{r[0]:<9} {r[1]:<5} {r[2]:<5} {r[3]:<5} {r[4]:<7} {r[5]:<7} {r[6]:<7} {r[7]}")
    out_lines += ["", "[loads]", "id   bus  level conn  pa     qa     pb     qb     pc     qc"]
    for bus, level, conn, pq in loads:
        cells = []
        for p in "abc":
            if p in pq:
                cells += [f"{pq[p][0]:g}", f"{pq[p][1]:g}"]
            else:
                cells += ["-", "-"]
        out_lines.append(f"{bus:<4} {bus:<4} {level:<5} {conn:<5} " + " ".join(f"{c:<6}" for c in cells).rstrip())
    out_lines += ["", "[sources]", "id    bus   kind     p_rate  q_rate  mg"]
    for sid, bus, kind, p, q, m in SOURCES:
        out_lines.append(f"{sid:<5} {bus:<5} {kind:<8} {p:<7g} {q:<7g} {m}")
    out_lines.append("UTILITY 150 utility 5000 5000 -")
    Path(out).write_text("\n".join(out_lines) + "\n")


if __name__ == "__main__":
    main()
