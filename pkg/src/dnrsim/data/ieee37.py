"""
Derivation of the bundled ``ieee37-dnr`` scenario.

Source constants are the IEEE 37-node test feeder line segments and
underground-cable configuration impedance matrices (ohm/mile). Each
configuration is reduced to a balanced positive-sequence impedance
``z1 = mean(self) - mean(mutual)``. The topology is modified to host six
switches and two load areas (LA1, LA2) that start de-energized.

Run ``python -m dnrsim.data.ieee37`` to regenerate ``ieee37-dnr.yaml``.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import yaml

V_BASE_KV = 4.8
S_BASE_MVA = 4.8
F_NOM_HZ = 60.0
FT_PER_MILE = 5280.0

# upper triangle (z11, z12, z13, z22, z23, z33), ohm/mile
CONFIGS = {
    "721": ((0.2926, 0.1973), (0.0673, -0.0368), (0.0337, -0.0417),
            (0.2646, 0.1900), (0.0673, -0.0368), (0.2926, 0.1973)),
    "722": ((0.4751, 0.2973), (0.1629, -0.0326), (0.1234, -0.0607),
            (0.4488, 0.2678), (0.1629, -0.0326), (0.4751, 0.2973)),
    "723": ((1.2936, 0.6713), (0.4871, 0.2111), (0.4585, 0.1521),
            (1.3022, 0.6326), (0.4871, 0.2111), (1.2936, 0.6713)),
    "724": ((2.0952, 0.7758), (0.5204, 0.2738), (0.4926, 0.2123),
            (2.1068, 0.7398), (0.5204, 0.2738), (2.0952, 0.7758)),
}

# (from, to, length ft, configuration)
SEGMENTS = [
    ("701", "702", 960, "722"), ("702", "705", 400, "724"), ("702", "713", 360, "723"),
    ("702", "703", 1320, "722"), ("703", "727", 240, "724"), ("703", "730", 600, "723"),
    ("704", "714", 80, "724"), ("704", "720", 800, "723"), ("705", "742", 320, "724"),
    ("705", "712", 240, "724"), ("706", "725", 280, "724"), ("707", "724", 760, "724"),
    ("707", "722", 120, "724"), ("708", "733", 320, "723"), ("708", "732", 320, "724"),
    ("709", "731", 600, "723"), ("709", "708", 320, "723"), ("710", "735", 200, "724"),
    ("710", "736", 1280, "724"), ("711", "741", 400, "723"), ("711", "740", 200, "724"),
    ("713", "704", 520, "723"), ("714", "718", 520, "724"), ("720", "707", 920, "724"),
    ("720", "706", 600, "723"), ("727", "744", 280, "723"), ("730", "709", 200, "723"),
    ("733", "734", 560, "723"), ("734", "737", 640, "723"), ("734", "710", 520, "724"),
    ("737", "738", 400, "723"), ("738", "711", 400, "723"), ("744", "728", 200, "724"),
    ("744", "729", 280, "724"), ("799", "701", 1850, "721"),
]

# substation transformer XFM-1: 500 kVA, R = 0.09 %, X = 1.81 %
XFM1 = ("709", "775", 500.0, 0.0009, 0.0181)

# segment replaced by a switch: key -> (switch id, initially closed)
SEGMENT_SWITCHES = {
    ("702", "703"): ("SW2", True),
    ("733", "734"): ("SW5", False),
    ("704", "720"): ("SW6", False),
}
# segment rerouted to a different upstream node
REROUTED = {("734", "710"): ("733", "710")}
# normally open ties: (id, from, to, length ft, configuration)
TIES = [
    ("SW1", "742", "744", 400, "724"),
    ("SW3", "718", "730", 1000, "724"),
    ("SW4", "728", "731", 600, "724"),
]

LA1 = ("734", "737", "738", "711", "740", "741")
LA2 = ("720", "707", "724", "722", "706", "725")

TOTAL_LOAD = (0.89, 0.56)  # pu, all loads at nominal voltage
ZIP = (0.5, 0.3, 0.2)
SOURCE_NODE = "799"

# node -> rating (MVA); 799 is the largest and acts as angle reference
GENERATORS = {"799": 1.6, "712": 1.0, "731": 0.8, "736": 0.8, "718": 0.6}

MACHINE = dict(h=3.0, d=20.0, droop=0.05, t_t=0.5, t_v=0.2, t_f=0.02, k_pf=0.0,
               k_pv=20.0, k_iv=200.0, t_e=0.02, x_d=1.8, x_d_prime=0.3, x_q=0.3, t_d0_prime=5.0)
REFERENCE_K_IF = 30.0

NODES = ["799", "701", "702", "703", "704", "705", "706", "707", "708", "709", "710", "711",
         "712", "713", "714", "718", "720", "722", "724", "725", "727", "728", "729", "730",
         "731", "732", "733", "734", "735", "736", "737", "738", "740", "741", "742", "744", "775"]


def positive_sequence(config: str) -> complex:
    z11, z12, z13, z22, z23, z33 = (complex(*z) for z in CONFIGS[config])
    z_self = (z11 + z22 + z33) / 3.0
    z_mutual = (z12 + z13 + z23) / 3.0
    return z_self - z_mutual


def segment_impedance_pu(length_ft: float, config: str) -> complex:
    z_base = V_BASE_KV**2 / S_BASE_MVA
    return positive_sequence(config) * (length_ft / FT_PER_MILE) / z_base


def _r6(z: complex):
    return float(np.round(z.real, 9)), float(np.round(z.imag, 9))


def build_scenario_dict(t_end: float = 40.0) -> dict:
    lines, switches = [], []
    for a, b, ft, cfg in SEGMENTS:
        r, x = _r6(segment_impedance_pu(ft, cfg))
        if (a, b) in SEGMENT_SWITCHES:
            sid, closed = SEGMENT_SWITCHES[(a, b)]
            switches.append({"id": sid, "from": a, "to": b, "r": r, "x": x,
                             "state": "closed" if closed else "open"})
            continue
        a, b = REROUTED.get((a, b), (a, b))
        lines.append({"name": f"L{a}-{b}", "from": a, "to": b, "r": r, "x": x})
    a, b, kva, r_pct, x_pct = XFM1
    scale = S_BASE_MVA * 1000.0 / kva
    lines.append({"name": "XFM-1", "from": a, "to": b,
                  "r": float(np.round(r_pct * scale, 9)), "x": float(np.round(x_pct * scale, 9))})
    for sid, a, b, ft, cfg in TIES:
        r, x = _r6(segment_impedance_pu(ft, cfg))
        switches.append({"id": sid, "from": a, "to": b, "r": r, "x": x, "state": "open"})
    switches.sort(key=lambda s: s["id"])

    load_nodes = [n for n in NODES if n != SOURCE_NODE]
    p_each = TOTAL_LOAD[0] / len(load_nodes)
    q_each = TOTAL_LOAD[1] / len(load_nodes)
    loads = [{"node": n, "p": p_each, "q": q_each, "v_nom": 1.0,
              "zip_p": list(ZIP), "zip_q": list(ZIP)} for n in load_nodes]

    total_rating = sum(GENERATORS.values())
    generators = []
    for n, rating in GENERATORS.items():
        entry = {"node": n, "rating_mva": rating, **MACHINE,
                 "k_if": REFERENCE_K_IF if n == SOURCE_NODE else 0.0,
                 "p_set": TOTAL_LOAD[0] * rating / total_rating, "v_set": 1.0}
        generators.append(entry)

    return {
        "name": "ieee37-dnr",
        "description": (
            "Modified IEEE 37-node feeder operated as an islanded microgrid with five SGs. "
            "t=1 s: SW1, SW3, SW4 close and SW2 opens; t=21 s: SW5, SW6 close and restore LA1, LA2."
        ),
        "system": {"s_base_mva": S_BASE_MVA, "f_nom_hz": F_NOM_HZ},
        "nodes": list(NODES),
        "lines": lines,
        "switches": switches,
        "loads": loads,
        "generators": generators,
        "schedule": {
            "t_end": t_end,
            "events": [
                {"time": 1.0, "close": ["SW1", "SW3", "SW4"], "open": ["SW2"]},
                {"time": 21.0, "close": ["SW5", "SW6"]},
            ],
        },
        "solver": {"dt": 0.001, "mode": "sequential"},
    }


def main():
    path = Path(__file__).with_name("ieee37-dnr.yaml")
    header = "# Generated by `python -m dnrsim.data.ieee37`; edit the derivation, not this file.\n"
    path.write_text(header + yaml.safe_dump(build_scenario_dict(), sort_keys=False))
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
