"""Run every acceptance experiment once with the recorded oracle seeds.

Writes tests/data/oracles.json. The acceptance suite re-runs the same
experiments on fresh seeds and checks the orderings; the regression tests
replay the recorded seeds and expect these exact numbers.

    python scripts/record_oracles.py
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import numpy as np

from ballast import graphs
from ballast.allocation import run_process
from ballast.analysis import median
from ballast.grouped import GroupLayout, estimate_q_r, round_trace
from ballast.moves import run_moves

ORACLE_BASE = 1_000_000
OUT = Path(__file__).resolve().parent.parent / "tests" / "data" / "oracles.json"


def max_loads(graph, m, process, trials, base=ORACLE_BASE):
    return [int(run_process(graph, m, process, base + i).loads.max()) for i in range(trials)]


def gaps(graph, m, process, trials, base=ORACLE_BASE):
    return [float(run_process(graph, m, process, base + i).loads.max() - m / graph.n) for i in range(trials)]


def main() -> int:
    n16 = 1 << 16
    n20 = 1 << 20
    n20_g5 = 5 * (n20 // 5)
    runs = {
        "C1_complete_2^12": lambda: max_loads(graphs.gen_complete(1 << 12), 1 << 12, "edge-two-choice", 50),
        "C1_complete_2^16": lambda: max_loads(graphs.gen_complete(n16), n16, "edge-two-choice", 50),
        "C1_complete_2^20": lambda: max_loads(graphs.gen_complete(n20), n20, "edge-two-choice", 50),
        "C2_single_2^16": lambda: max_loads(graphs.gen_complete(n16), n16, "single", 50),
        "C3_ring256_2^16": lambda: max_loads(graphs.gen_ring_distance(n16, 256), n16, "edge-two-choice", 50),
        "C4_ring2_2^16": lambda: max_loads(graphs.gen_ring_distance(n16, 2), n16, "edge-two-choice", 50),
        "C5_bipartite_right": lambda: max_loads(
            graphs.gen_complete_bipartite(n16, 256), n16, "edge-two-choice(right)", 50),
        "C5_bipartite_random": lambda: max_loads(
            graphs.gen_complete_bipartite(n16, 256), n16, "edge-two-choice(random)", 50),
        "C6_aligned_g4": lambda: max_loads(graphs.gen_complete(n20), n20, "aligned(4,2)", 50),
        "C6_aligned_g5": lambda: max_loads(graphs.gen_complete(n20_g5), n20_g5, "aligned(5,2)", 50),
        "C7_aligned_g8": lambda: max_loads(graphs.gen_complete(n20), n20, "aligned(8,2)", 50),
        "C7_unaligned_g8": lambda: max_loads(graphs.gen_complete(n20), n20, "unaligned(8)", 50),
        "C8_global_min_g8": lambda: max_loads(graphs.gen_complete(n20), n20, "global-min(8,2)", 50),
        "C9_moves_h0": lambda: [int(run_moves(graphs.gen_complete(n16), n16, 0, ORACLE_BASE + i).state.loads.max())
                                for i in range(50)],
        "C9_moves_h2": lambda: [int(run_moves(graphs.gen_complete(n16), n16, 2, ORACLE_BASE + i).state.loads.max())
                                for i in range(50)],
        "C10_cliques_gap": lambda: gaps(graphs.gen_clique_union(64, 256), 1 << 21, "edge-two-choice", 20),
        "C10_complete_gap": lambda: gaps(graphs.gen_complete(1 << 14), 1 << 21, "edge-two-choice", 20),
        # regression values replayed exactly by the unit tests
        "R_complete_1024": lambda: max_loads(graphs.gen_complete(1024), 1024, "edge-two-choice", 50),
    }
    out = {"oracle_base_seed": ORACLE_BASE, "medians": {}, "values": {}}
    for name, fn in runs.items():
        t0 = time.perf_counter()
        vals = fn()
        out["values"][name] = vals
        out["medians"][name] = median(vals)
        print(f"{name:<24} median {out['medians'][name]!s:<8} ({time.perf_counter() - t0:.1f}s)", file=sys.stderr)

    layout = GroupLayout(1 << 12, 2, 2, "unaligned")
    trace = round_trace(layout, 2, ORACLE_BASE)
    out["q_r"] = {
        "n": 1 << 12, "g": 2, "t": layout.t, "seed": ORACLE_BASE,
        "q0": estimate_q_r(trace, layout, 0), "q1": estimate_q_r(trace, layout, 1),
    }
    OUT.write_text(json.dumps(out, indent=1) + "\n")
    print(f"wrote {OUT}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
