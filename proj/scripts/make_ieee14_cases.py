#!/usr/bin/env python3
"""Generate the IEEE 14-bus case files under data/.

  ieee14_ac.json           unmodified IEEE 14-bus system, AC only
  ieee14_ac_reference.json voltages from PYPOWER's Newton solver for that case
  ieee14_acdc.json         14-bus system with a three-terminal VSC-MTDC grid

The hybrid case needs two passes. The first writes the files; then solve
the hybrid case (acdcopf powerflow) and rerun with --slack-p <G1 output in
p.u.> so that G1's constant cost term makes the base-point generation cost
come out at BASE_COST:

    python3 scripts/make_ieee14_cases.py
    python3 scripts/make_ieee14_cases.py --slack-p 2.4455

Requires PYPOWER (pip install pypower). Run from the repository root.
"""

import json
import math
import pathlib
import sys

from pypower.api import case14, ppoption, runpf

DATA = pathlib.Path(__file__).resolve().parent.parent / "data"
BASE = 100.0


def ac_only():
    c = case14()
    buses = []
    kinds = {1: "PQ", 2: "PV", 3: "slack"}
    for row in c["bus"]:
        buses.append({
            "id": int(row[0]),
            "type": kinds[int(row[1])],
            "p_load": row[2] / BASE,
            "q_load": row[3] / BASE,
            "voltage": row[7],
            "angle": math.radians(row[8]),
            "v_min": 0.9,
            "v_max": 1.1,
        })
    shunts = [{"bus": int(r[0]), "q": r[5] / BASE} for r in c["bus"] if r[5] != 0.0]
    branches = []
    for row in c["branch"]:
        br = {"from": int(row[0]), "to": int(row[1]), "r": row[2], "x": row[3], "charging": row[4]}
        if row[8] != 0.0:
            br["tap"] = row[8]
        branches.append(br)
    gens = []
    for k, row in enumerate(c["gen"]):
        gens.append({
            "name": f"G{k + 1}",
            "bus": int(row[0]),
            "p": row[1] / BASE,
            "p_min": row[9] / BASE,
            "p_max": row[8] / BASE,
            "v_setpoint": row[5],
        })
    doc = {
        "schema": "acdc-case/1",
        "name": "ieee14-ac",
        "base_mva": BASE,
        "provenance": {"source": "IEEE 14-bus test system as distributed with MATPOWER/PYPOWER case14"},
        "ac_buses": buses,
        "ac_branches": branches,
        "generators": gens,
        "shunts": shunts,
    }
    return c, doc


def reference_solution(c):
    opt = ppoption(PF_TOL=1e-12, VERBOSE=0, OUT_ALL=0)
    res, ok = runpf(c, opt)
    assert ok
    return {
        "solver": "PYPOWER runpf (Newton, PF_TOL=1e-12)",
        "bus": [int(b) for b in res["bus"][:, 0]],
        "voltage": [float(v) for v in res["bus"][:, 7]],
        "angle": [math.radians(float(a)) for a in res["bus"][:, 8]],
        "slack_p": float(res["gen"][0, 1]) / BASE,
    }


def snap(value, lo, step):
    return round(lo + round((value - lo) / step) * step, 10)


# Line ratings of the hybrid case (p.u.), keyed by terminal buses.
RATINGS = {
    (1, 2): 2.30, (1, 5): 1.20, (2, 3): 2.15, (3, 4): 1.15, (4, 7): 0.45, (4, 9): 0.35,
    (5, 6): 1.05, (6, 11): 0.50, (6, 12): 0.25, (6, 13): 0.40, (7, 8): 0.45, (8, 9): 0.45,
    (9, 10): 0.35, (9, 14): 0.25, (10, 11): 0.45, (12, 13): 0.20, (13, 14): 0.35,
}

# Quadratic cost coefficients ($/h per p.u.^2, $/h per p.u., $/h).
COSTS = {
    "G1": (1800.0, 500.0),
    "G2": (1500.0, 500.0),
    "G3": (1000.0, 1000.0),
    "G4": (1000.0, 1000.0),
    "G5": (1000.0, 1000.0),
}
BASE_COST = 12602.30

Q_LIMITS = {"G1": (-0.5, 1.0), "G2": (-0.4, 0.6), "G3": (-0.2, 0.6), "G4": (-0.2, 0.4), "G5": (-0.2, 0.4)}
P_MAX = {"G1": 3.324, "G2": 1.4, "G3": 1.0, "G4": 1.0, "G5": 1.0}


def hybrid(ac_doc):
    doc = json.loads(json.dumps(ac_doc))
    doc["name"] = "ieee14-acdc"
    removed = {(2, 4), (2, 5), (4, 5)}
    branches = []
    for br in doc["ac_branches"]:
        key = (br["from"], br["to"])
        if key in removed:
            continue
        if key == (7, 9):
            br["from"], br["to"] = 8, 9
            key = (8, 9)
        if "tap" in br:
            br["tap"] = snap(br["tap"], 0.9, 0.0125)
            br["tap_min"], br["tap_max"], br["tap_step"] = 0.9, 1.1, 0.0125
        br["flow_max"] = RATINGS[key]
        branches.append(br)
    for k, br in enumerate(branches):
        br["label"] = f"L{k + 1}({br['from']}-{br['to']})"
    doc["ac_branches"] = branches

    setpoints = {g["bus"]: g["v_setpoint"] for g in doc["generators"]}
    for b in doc["ac_buses"]:
        b["v_target"] = setpoints.get(b["id"], 1.0)

    for g in doc["generators"]:
        a, b = COSTS[g["name"]]
        g["cost_a"], g["cost_b"], g["cost_c"] = a, b, 0.0
        g["q_min"], g["q_max"] = Q_LIMITS[g["name"]]
        g["p_max"] = P_MAX[g["name"]]
        g["v_set_min"], g["v_set_max"] = 0.9, 1.1

    doc["shunts"] = [{"bus": 9, "q": 0.19, "q_min": 0.0, "q_max": 0.5, "q_step": 0.01}]

    schedule = [("VSC1", 4, 1, -0.8620, 0.0111), ("VSC2", 2, 2, 0.9680, -0.1237), ("VSC3", 5, 3, -0.1296, 0.1353)]
    doc["converters"] = [{
        "name": name, "ac_bus": ac, "dc_bus": dc,
        "r": 0.0016, "x": 0.2764,
        "p_s": p, "q_s": q, "p_s_min": -1.0, "p_s_max": 1.0, "q_s_min": -1.0, "q_s_max": 1.0,
        "loss_a": 0.011, "loss_b": 0.003, "loss_c": 0.0043,
        "cap_p0": 0.0, "cap_q0": 0.0, "cap_r_min": 0.0, "cap_r_max": 1.2,
        "mode": "droop", "droop": 0.005, "droop_min": -10.0, "droop_max": 10.0,
        "v_dc_ref": 1.0, "v_dc_ref_min": 0.9, "v_dc_ref_max": 1.1,
    } for name, ac, dc, p, q in schedule]
    doc["dc_buses"] = [{"id": i, "v_min": 0.9, "v_max": 1.1, "v_target": 1.0} for i in (1, 2, 3)]
    doc["dc_branches"] = [
        {"from": 1, "to": 2, "r": 0.052, "i_max": 1.5, "p_max": 1.5},
        {"from": 2, "to": 3, "r": 0.052, "i_max": 1.5, "p_max": 1.5},
        {"from": 1, "to": 3, "r": 0.073, "i_max": 1.5, "p_max": 1.5},
    ]
    doc["limits"] = {"alarm_widening": 0.05, "corrective_fraction": 0.15}
    doc["provenance"] = {
        "ac_network": "IEEE 14-bus (MATPOWER case14) with lines 2-4, 2-5 and 4-5 replaced by the DC grid; "
                      "line 7-9 reconnected as 8-9 so that no single AC outage islands a bus",
        "taps": "original ratios snapped to the 0.9..1.1 grid with step 0.0125",
        "converters": "coupling r/x = transformer + phase reactor of the MATACDC five-bus example; "
                      "loss coefficients a/b/c = 0.011/0.003/0.0043 p.u.; schedule P_s, Q_s, U_dc0, R of the reference "
                      "operating point of the modified 14-bus system",
        "dc_lines": "resistances of the MATACDC five-bus DC grid",
        "costs": "G1 is the expensive unit; its constant term is set so that the base point costs 12602.30 $/h",
        "ratings": "flow_max chosen so that several outages are in alarm or insecure at the base point but "
                   "remain correctable",
        "bands": "security band = operating limits, alarm band = security band widened by 5% of its range",
    }
    return doc


def main():
    c, ac_doc = ac_only()
    DATA.mkdir(exist_ok=True)
    (DATA / "ieee14_ac.json").write_text(json.dumps(ac_doc, indent=2) + "\n")
    (DATA / "ieee14_ac_reference.json").write_text(json.dumps(reference_solution(c), indent=2) + "\n")
    doc = hybrid(ac_doc)
    if "--slack-p" in sys.argv:
        # Second pass: set G1's constant cost from the solved base point.
        slack = float(sys.argv[sys.argv.index("--slack-p") + 1])
        var = 0.0
        for g in doc["generators"]:
            p = slack if g["name"] == "G1" else g["p"]
            var += g["cost_a"] * p * p + g["cost_b"] * p
        doc["generators"][0]["cost_c"] = round(BASE_COST - var, 4)
    (DATA / "ieee14_acdc.json").write_text(json.dumps(doc, indent=2) + "\n")


if __name__ == "__main__":
    main()
