"""Diagnostics and reporting: witness graphs, φ_d, bound formulas, trial summaries."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .allocation import AllocationState, History
from .errors import InvalidParameter, InvalidState

# --- witness graph -----------------------------------------------------------


@dataclass
class WitnessGraph:
    """Witness structure grown from a heavy bin.

    ``nodes`` maps bin -> guaranteed load. ``tree_edges`` and
    ``cycle_edges`` hold ``(parent bin, child bin, ball_id)``; a cycle edge
    points at a bin that was already in the graph and was not re-expanded.
    """

    root: int
    leaf_threshold: int
    nodes: dict[int, int]
    tree_edges: list[tuple[int, int, int]]
    cycle_edges: list[tuple[int, int, int]]
    truncated: bool = False

    @property
    def p(self) -> int:
        """Number of cycle-producing edges."""
        return len(self.cycle_edges)

    @property
    def levels(self) -> int:
        """Root load above the leaf threshold."""
        return self.nodes[self.root] - self.leaf_threshold

    @property
    def ideal_node_count(self) -> int:
        """Node count of the cycle-free witness tree when every load meets the schedule."""
        return 2 ** self.levels

    def summary(self) -> dict:
        return {
            "root": self.root,
            "root_load": self.nodes[self.root],
            "leaf_threshold": self.leaf_threshold,
            "nodes": len(self.nodes),
            "ideal_nodes": self.ideal_node_count,
            "tree_edges": len(self.tree_edges),
            "p": self.p,
            "truncated": self.truncated,
        }


def default_node_cap(n: int) -> int:
    return max(1, math.ceil(16 * math.log2(max(n, 2)) ** 2))


def build_witness_graph(
    history: History | None,
    state: AllocationState,
    root: int,
    leaf_threshold: int,
    node_cap: int | None = None,
) -> WitnessGraph:
    """Expand the witness graph of ``root`` breadth-first.

    A node entered with guaranteed load ``x`` expands the balls it holds at
    heights ``x, x-1, ..., leaf_threshold+1``. The ball at height
    ``x - i + 1`` contributes its other bin as a child with guaranteed load
    ``min(alt_load_at_insert, x - i)``. Children at or below the threshold
    are leaves. Expansion stops once ``node_cap`` nodes exist.
    """
    if history is None:
        raise InvalidState("witness graph needs a recorded history")
    if not 0 <= root < state.n:
        raise InvalidParameter(f"root {root} out of range")
    root_load = int(state.loads[root])
    if root_load < leaf_threshold:
        raise InvalidParameter(f"root load {root_load} is below leaf threshold {leaf_threshold}")
    cap = default_node_cap(state.n) if node_cap is None else node_cap
    if cap < 1:
        raise InvalidParameter(f"node_cap must be >= 1, got {cap}")

    cols = history.columns()
    by_height = {
        (b, hgt): i for i, (b, hgt) in enumerate(zip(cols["placed"].tolist(), cols["height"].tolist()))
    }
    eu, ev, alt_load = cols["edge_u"], cols["edge_v"], cols["alt"]

    nodes = {root: root_load}
    tree: list[tuple[int, int, int]] = []
    cycles: list[tuple[int, int, int]] = []
    truncated = False
    queue = deque([root])
    while queue:
        b = queue.popleft()
        x = nodes[b]
        for i in range(1, x - leaf_threshold + 1):
            ball = by_height.get((b, x - i + 1))
            if ball is None:
                raise InvalidState(f"history has no ball at height {x - i + 1} in bin {b}")
            if alt_load[ball] < 0:
                continue  # single-choice ball: no alternate bin
            child = int(eu[ball] + ev[ball] - b)
            if child in nodes:
                cycles.append((b, child, ball))
                continue
            if len(nodes) >= cap:
                truncated = True
                continue
            nodes[child] = min(int(alt_load[ball]), x - i)
            tree.append((b, child, ball))
            if nodes[child] > leaf_threshold:
                queue.append(child)
    return WitnessGraph(root, leaf_threshold, nodes, tree, cycles, truncated)


# --- phi_d -------------------------------------------------------------------


def compute_phi(d: int, tolerance: float = 1e-12, max_terms: int = 100_000) -> Fraction:
    """Growth rate of the d-step Fibonacci sequence.

    Runs ``F(k) = F(k-1) + ... + F(k-d)`` from ``F(1) = 1`` in exact
    integers and returns ``F(k+1)/F(k)`` once ``d`` successive ratios have
    each moved by less than ``tolerance``. The result is a
    :class:`~fractions.Fraction`: for ``d`` above about 52 the true value is
    closer to 2 than a float can resolve.
    """
    if d < 1:
        raise InvalidParameter(f"d must be >= 1, got {d}")
    window = deque([0] * (d - 1) + [1], maxlen=d)
    total = 1
    prev = None
    # F(k) = 2**(k-2) up to k = d+1, so ratios are flat at 2 before then
    warmup = 2 * d + 2 if d > 1 else 0
    # a single exact repeat can happen by coincidence (d=3: 56*56, 56*103, 103*103),
    # so the ratios must agree for d steps in a row
    streak = 0
    for k in range(1, max_terms):
        nxt = total
        ratio = Fraction(nxt, window[-1])
        streak = streak + 1 if prev is not None and abs(ratio - prev) < tolerance else 0
        if k > warmup and streak >= d:
            return ratio
        prev = ratio
        total += nxt - window[0]
        window.append(nxt)
    raise InvalidState(f"phi_{d} did not converge within {max_terms} terms")


# --- bounds ------------------------------------------------------------------


@dataclass
class BoundTerm:
    name: str
    source: str
    value: float | None
    formula: str
    flag: str | None = None


@dataclass
class BoundReport:
    """Leading terms of the max-load bounds, hidden constants dropped.

    All logarithms are base 2 unless a term's formula says ``ln``.
    """

    params: dict
    terms: list[BoundTerm] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def __getitem__(self, name: str) -> BoundTerm:
        for t in self.terms:
            if t.name == name:
                return t
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(t.name == name for t in self.terms)

    def to_dict(self) -> dict:
        return {"log_base": 2, "params": self.params, "terms": [asdict(t) for t in self.terms], "notes": self.notes}

    def render(self) -> str:
        lines = ["# bound report (log base 2 unless marked ln; hidden constants omitted)"]
        lines.append("# " + ", ".join(f"{k}={v}" for k, v in self.params.items() if v is not None))
        for t in self.terms:
            val = "n/a" if t.value is None else f"{t.value:.4f}"
            flag = f"  [{t.flag}]" if t.flag else ""
            lines.append(f"{t.name:<22} {val:>10}  {t.source:<14} {t.formula}{flag}")
        lines += [f"# {note}" for note in self.notes]
        return "\n".join(lines)


def predicted_bounds(
    n: int,
    delta: int | None = None,
    d: int | None = None,
    c_groups: int = 2,
    h: int | None = None,
    epsilon: float | None = None,
) -> BoundReport:
    if n < 4:
        raise InvalidParameter(f"bounds need n >= 4 (log log n > 0), got {n}")
    lg = math.log2(n)
    ll = math.log2(lg)
    rep = BoundReport({"n": n, "delta": delta, "d": d, "c": c_groups, "h": h, "epsilon": epsilon})
    add = rep.terms.append

    add(BoundTerm("single_choice", "single", lg / ll, "log n / log log n"))
    add(BoundTerm("loglog_term", "two-choice", ll, "log log n"))

    if delta is not None:
        if delta < 1:
            raise InvalidParameter(f"delta must be >= 1, got {delta}")
        ratio = delta / lg**4
        if ratio <= 1:
            add(BoundTerm("degree_term", "regular-upper", None, "log n / log(delta / log^4 n)",
                          f"out-of-regime: delta <= log^4 n = {lg**4:.6g}"))
            add(BoundTerm("regular_upper", "regular-upper", None, "log log n + degree_term", "out-of-regime"))
        else:
            deg = lg / math.log2(ratio)
            add(BoundTerm("degree_term", "regular-upper", deg, "log n / log(delta / log^4 n)"))
            add(BoundTerm("regular_upper", "regular-upper", ll + deg, "log log n + degree_term"))
        lower_deg = lg / math.log2(delta * lg)
        add(BoundTerm("lower_degree_term", "regular-lower", lower_deg, "log n / log(delta log n)"))
        add(BoundTerm("regular_lower", "regular-lower", ll + lower_deg, "log log n + lower_degree_term"))
        if epsilon is None and delta > 1:
            epsilon = math.log(delta) / math.log(n)
            rep.params["epsilon"] = epsilon

    if epsilon is not None:
        if epsilon <= 0:
            add(BoundTerm("epsilon_term", "n^eps-regular", None, "log log n + 1/eps", "undefined: eps <= 0"))
        else:
            flag = None if epsilon > 8 * ll / lg else f"out-of-regime: eps <= 8 log log n / log n = {8 * ll / lg:.4g}"
            add(BoundTerm("epsilon_term", "n^eps-regular", ll + 1 / epsilon, "log log n + 1/eps", flag))

    if h is not None:
        if h <= 0:
            add(BoundTerm("moves_term", "moves", None, "log log n / (h log(log log n / h))", "undefined: h = 0"))
        elif ll / h <= 1:
            add(BoundTerm("moves_term", "moves", None, "log log n / (h log(log log n / h))",
                          "out-of-regime: h >= log log n"))
        else:
            add(BoundTerm("moves_term", "moves", ll / (h * math.log2(ll / h)), "log log n / (h log(log log n / h))"))

    if d is not None:
        if d < 1 or c_groups < 1:
            raise InvalidParameter(f"need d >= 1 and c >= 1, got d={d}, c={c_groups}")
        phi_c = float(compute_phi(c_groups))
        if phi_c > 1:
            add(BoundTerm("grouped_term", "aligned-groups", ll / (d * math.log(phi_c)), "log log n / (d ln phi_c)"))
            add(BoundTerm("grouped_term_log2", "aligned-groups", ll / (d * math.log2(phi_c)),
                          "log log n / (d log phi_c)"))
        else:
            add(BoundTerm("grouped_term", "aligned-groups", None, "log log n / (d ln phi_c)", "undefined: c = 1"))
        phi_d = float(compute_phi(d))
        if phi_d > 1:
            add(BoundTerm("asymmetric_d_choice", "d-choice-left", ll / (d * math.log(phi_d)),
                          "log log n / (d ln phi_d)"))
        if d > 1:
            add(BoundTerm("unaligned_term", "unaligned", ll / math.log2(d), "log log n / log d"))
        if c_groups == 2:
            phi2 = float(compute_phi(2))
            rep.notes.append(
                f"two-group coefficient: 1/ln(phi_2) = {1 / math.log(phi2):.4f}, "
                f"1/log2(phi_2) = {1 / math.log2(phi2):.4f}"
            )
    return rep


# --- trial aggregation -------------------------------------------------------


def nearest_rank(sorted_values: Sequence[float], pct: float) -> float:
    """Nearest-rank percentile of already-sorted values (no interpolation)."""
    if not sorted_values:
        raise InvalidParameter("percentile of an empty sequence")
    rank = max(1, math.ceil(pct / 100 * len(sorted_values)))
    return sorted_values[rank - 1]


def order_stats(values: Iterable[float]) -> dict:
    vals = sorted(values)
    if not vals:
        raise InvalidParameter("no values to summarize")
    return {
        "count": len(vals),
        "median": nearest_rank(vals, 50),
        "p10": nearest_rank(vals, 10),
        "p90": nearest_rank(vals, 90),
        "min": vals[0],
        "max": vals[-1],
    }


def aggregate_trials(results: Sequence) -> dict:
    """Order statistics of ``max_load`` and ``gap`` over trial results.

    Accepts anything with ``max_load`` and ``gap`` attributes.
    """
    if not results:
        raise InvalidParameter("aggregate_trials needs at least one result")
    return {
        "max_load": order_stats(r.max_load for r in results),
        "gap": order_stats(r.gap for r in results),
    }


def median(values: Iterable[float]) -> float:
    return order_stats(values)["median"]


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, Fraction)):
        return float(obj)
    return obj
