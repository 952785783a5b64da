"""Bin loads, per-ball history, and the single-choice / edge two-choice processes.

The ``insert_*`` functions place one ball at a time and are meant for
inspection and tests. :func:`run_process` drives any process for ``m`` balls;
it draws all randomness for the run from the seed up front and hands it to a
compiled kernel, so it is fast but does not consume the stream in the same
order as repeated ``insert_*`` calls would.
"""

from __future__ import annotations

import enum
import re
from collections import Counter
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import InvalidParameter, InvalidState
from .graphs import BinGraph
from .rng import make_rng


class TieBreak(str, enum.Enum):
    """Rule for equal endpoint loads: fair coin, lower index, or higher index."""

    RANDOM = "random"
    LEFT = "left"
    RIGHT = "right"


_TIE_CODE = {TieBreak.RANDOM: 0, TieBreak.LEFT: 1, TieBreak.RIGHT: 2}


@dataclass(frozen=True)
class BallRecord:
    ball_id: int
    edge: tuple[int, int] | int
    placed: int
    height: int
    alt_load_at_insert: int | None = None


class History:
    """Per-ball placement records, stored column-wise.

    Indexing yields :class:`BallRecord` objects. ``alt`` is -1 where a ball
    had no alternative (single choice or grouped placement), in which case
    ``edge_u == edge_v == placed``.
    """

    def __init__(self, capacity: int = 16):
        capacity = max(int(capacity), 1)
        self._len = 0
        self.edge_u = np.empty(capacity, dtype=np.int64)
        self.edge_v = np.empty(capacity, dtype=np.int64)
        self.placed = np.empty(capacity, dtype=np.int64)
        self.height = np.empty(capacity, dtype=np.int64)
        self.alt = np.empty(capacity, dtype=np.int64)

    @classmethod
    def from_arrays(cls, edge_u, edge_v, placed, height, alt) -> "History":
        h = cls(len(placed))
        h.edge_u[: len(placed)] = edge_u
        h.edge_v[: len(placed)] = edge_v
        h.placed[: len(placed)] = placed
        h.height[: len(placed)] = height
        h.alt[: len(placed)] = alt
        h._len = len(placed)
        return h

    def _grow(self) -> None:
        cap = 2 * len(self.placed)
        for name in ("edge_u", "edge_v", "placed", "height", "alt"):
            old = getattr(self, name)
            new = np.empty(cap, dtype=np.int64)
            new[: self._len] = old[: self._len]
            setattr(self, name, new)

    def append(self, u: int, v: int, placed: int, height: int, alt: int) -> None:
        if self._len == len(self.placed):
            self._grow()
        i = self._len
        self.edge_u[i], self.edge_v[i], self.placed[i] = u, v, placed
        self.height[i], self.alt[i] = height, alt
        self._len += 1

    def columns(self) -> dict[str, np.ndarray]:
        k = self._len
        return {
            "edge_u": self.edge_u[:k],
            "edge_v": self.edge_v[:k],
            "placed": self.placed[:k],
            "height": self.height[:k],
            "alt": self.alt[:k],
        }

    def __len__(self) -> int:
        return self._len

    def __getitem__(self, i: int) -> BallRecord:
        if i < 0:
            i += self._len
        if not 0 <= i < self._len:
            raise IndexError(i)
        u, v = int(self.edge_u[i]), int(self.edge_v[i])
        alt = int(self.alt[i])
        return BallRecord(
            ball_id=i,
            edge=(u, v) if alt >= 0 else u,
            placed=int(self.placed[i]),
            height=int(self.height[i]),
            alt_load_at_insert=alt if alt >= 0 else None,
        )

    def __iter__(self):
        return (self[i] for i in range(self._len))


@dataclass
class AllocationState:
    loads: np.ndarray
    balls_inserted: int = 0
    history: History | None = None

    @classmethod
    def empty(cls, n: int, record_history: bool = False) -> "AllocationState":
        if n < 1:
            raise InvalidParameter(f"n must be >= 1, got {n}")
        return cls(np.zeros(n, dtype=np.int64), 0, History() if record_history else None)

    @property
    def n(self) -> int:
        return len(self.loads)

    def check(self) -> None:
        """Raise :class:`InvalidState` if conservation or history length is off."""
        if int(self.loads.sum()) != self.balls_inserted:
            raise InvalidState(f"sum(loads)={int(self.loads.sum())} != balls_inserted={self.balls_inserted}")
        if np.any(self.loads < 0):
            raise InvalidState("negative load")
        if self.history is not None and len(self.history) != self.balls_inserted:
            raise InvalidState("history length differs from balls_inserted")


def _record(state: AllocationState, u: int, v: int, placed: int, alt: int) -> None:
    state.loads[placed] += 1
    state.balls_inserted += 1
    if state.history is not None:
        state.history.append(u, v, placed, int(state.loads[placed]), alt)


def insert_single_choice(state: AllocationState, n: int, rng: np.random.Generator) -> int:
    """Put one ball into a uniformly random bin and return that bin."""
    if n < 1 or n != state.n:
        raise InvalidParameter(f"n={n} does not match state with {state.n} bins")
    b = int(rng.integers(0, n))
    _record(state, b, b, b, -1)
    return b


def choose_endpoint(loads: np.ndarray, u: int, v: int, tiebreak: TieBreak, rng: np.random.Generator) -> int:
    lu, lv = loads[u], loads[v]
    if lu != lv:
        return u if lu < lv else v
    if tiebreak == TieBreak.LEFT:
        return min(u, v)
    if tiebreak == TieBreak.RIGHT:
        return max(u, v)
    return u if rng.integers(0, 2) == 0 else v


def insert_two_choice_edge(
    state: AllocationState,
    graph: BinGraph,
    tiebreak: TieBreak | str,
    rng: np.random.Generator,
    edge: tuple[int, int] | None = None,
) -> int:
    """Sample a uniform edge and place the ball at its lighter endpoint.

    ``edge`` overrides the sampled edge; it exists for replay and tests.
    """
    if graph.n != state.n:
        raise InvalidParameter(f"state has {state.n} bins, graph has {graph.n}")
    u, v = graph.sample_edge(rng) if edge is None else edge
    p = choose_endpoint(state.loads, u, v, TieBreak(tiebreak), rng)
    alt = v if p == u else u
    _record(state, u, v, p, int(state.loads[alt]))
    return p


def max_load(state: AllocationState) -> int:
    return int(state.loads.max()) if state.n else 0


def load_histogram(state: AllocationState) -> dict[int, int]:
    """Map each occurring load to the number of bins carrying it."""
    return {int(k): int(c) for k, c in sorted(Counter(state.loads.tolist()).items())}


def gap(state: AllocationState, n: int | None = None) -> float:
    n = state.n if n is None else n
    return max_load(state) - state.balls_inserted / n


# --- process descriptors -----------------------------------------------------

KINDS = ("single", "edge-two-choice", "moves", "aligned", "unaligned", "global-min")

_DESCRIPTOR = re.compile(r"^\s*([a-z-]+)\s*(?:\(([^)]*)\))?\s*$")


@dataclass(frozen=True)
class Process:
    """What to run for each ball.

    ``g``/``c`` apply to the grouped kinds, ``h`` to ``moves``, ``tiebreak``
    to ``edge-two-choice``. ``within`` picks the in-group tie rule for
    grouped kinds (``left`` or ``random``). ``t`` is the block size in
    super-bins used for step detection; ``None`` means the layout default.
    """

    kind: str
    tiebreak: TieBreak = TieBreak.RANDOM
    h: int = 0
    g: int = 1
    c: int = 2
    within: str = "left"
    t: int | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameter(f"unknown process kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "tiebreak", TieBreak(self.tiebreak))
        if self.h < 0:
            raise InvalidParameter(f"h must be >= 0, got {self.h}")
        if self.g < 1:
            raise InvalidParameter(f"g must be >= 1, got {self.g}")
        if self.within not in ("left", "random"):
            raise InvalidParameter(f"within must be 'left' or 'random', got {self.within!r}")
        if self.kind in ("aligned", "global-min") and self.c < 2:
            raise InvalidParameter(f"c must be >= 2, got {self.c}")
        if self.kind == "unaligned" and self.c != 2:
            raise InvalidParameter("unaligned windows require c = 2")

    @classmethod
    def parse(cls, text: str) -> "Process":
        """Parse ``"aligned(4, 2)"``, ``"unaligned(8)"``, ``"moves(2)"`` and friends."""
        mt = _DESCRIPTOR.match(text)
        if not mt:
            raise InvalidParameter(f"malformed process descriptor {text!r}")
        kind, arglist = mt.group(1), mt.group(2)
        args = [a.strip() for a in arglist.split(",")] if arglist and arglist.strip() else []
        try:
            if kind in ("aligned", "global-min"):
                if len(args) != 2:
                    raise InvalidParameter(f"{kind} takes (g, c)")
                return cls(kind, g=int(args[0]), c=int(args[1]))
            if kind == "unaligned":
                if len(args) != 1:
                    raise InvalidParameter("unaligned takes (g)")
                return cls(kind, g=int(args[0]))
            if kind == "moves":
                if len(args) != 1:
                    raise InvalidParameter("moves takes (h)")
                return cls(kind, h=int(args[0]))
            if kind == "edge-two-choice":
                if len(args) > 1:
                    raise InvalidParameter("edge-two-choice takes at most (tiebreak)")
                return cls(kind, tiebreak=TieBreak(args[0]) if args else TieBreak.RANDOM)
            if args:
                raise InvalidParameter(f"{kind} takes no arguments")
            return cls(kind)
        except ValueError as exc:
            if isinstance(exc, InvalidParameter):
                raise
            raise InvalidParameter(f"bad arguments in {text!r}: {exc}") from None

    def describe(self) -> str:
        if self.kind in ("aligned", "global-min"):
            return f"{self.kind}({self.g},{self.c})"
        if self.kind == "unaligned":
            return f"unaligned({self.g})"
        if self.kind == "moves":
            return f"moves({self.h})"
        if self.kind == "edge-two-choice":
            return f"edge-two-choice({self.tiebreak.value})"
        return self.kind

    @property
    def grouped(self) -> bool:
        return self.kind in ("aligned", "unaligned", "global-min")


# --- kernels -----------------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _single_kernel(loads, bins, h_height):
    record = h_height.shape[0] > 0
    for i in range(bins.shape[0]):
        b = bins[i]
        loads[b] += 1
        if record:
            h_height[i] = loads[b]


@numba.njit(cache=True, nogil=True)
def _two_choice_kernel(loads, eu, ev, coins, policy, h_placed, h_height, h_alt):
    record = h_placed.shape[0] > 0
    for i in range(eu.shape[0]):
        u = eu[i]
        v = ev[i]
        lu = loads[u]
        lv = loads[v]
        if lu < lv:
            p = u
        elif lv < lu:
            p = v
        elif policy == 1:
            p = min(u, v)
        elif policy == 2:
            p = max(u, v)
        elif coins[i] == 0:
            p = u
        else:
            p = v
        loads[p] += 1
        if record:
            h_placed[i] = p
            h_height[i] = loads[p]
            h_alt[i] = lv if p == u else lu


def _run_single(n: int, m: int, rng: np.random.Generator, record: bool) -> AllocationState:
    loads = np.zeros(n, dtype=np.int64)
    bins = rng.integers(0, n, size=m, dtype=np.int64)
    height = np.empty(m if record else 0, dtype=np.int64)
    _single_kernel(loads, bins, height)
    hist = History.from_arrays(bins, bins, bins, height, np.full(m, -1)) if record else None
    return AllocationState(loads, m, hist)


def _run_two_choice(
    graph: BinGraph, m: int, tiebreak: TieBreak, rng: np.random.Generator, record: bool
) -> AllocationState:
    loads = np.zeros(graph.n, dtype=np.int64)
    if m == 0:
        return AllocationState(loads, 0, History() if record else None)
    edges = graph.sample_edges(rng, m)
    eu = np.ascontiguousarray(edges[:, 0])
    ev = np.ascontiguousarray(edges[:, 1])
    if tiebreak == TieBreak.RANDOM:
        coins = rng.integers(0, 2, size=m, dtype=np.int8)
    else:
        coins = np.zeros(0, dtype=np.int8)
    k = m if record else 0
    placed = np.empty(k, dtype=np.int64)
    height = np.empty(k, dtype=np.int64)
    alt = np.empty(k, dtype=np.int64)
    _two_choice_kernel(loads, eu, ev, coins, _TIE_CODE[tiebreak], placed, height, alt)
    hist = History.from_arrays(eu, ev, placed, height, alt) if record else None
    return AllocationState(loads, m, hist)


def run_process(
    graph: BinGraph,
    m: int,
    policy: Process | str,
    seed: int | np.random.Generator,
    record_history: bool = False,
) -> AllocationState:
    """Insert ``m`` balls with ``policy`` and return the final state.

    Deterministic in ``(graph, m, policy, seed)``. Grouped kinds only use
    ``graph.n``; the edges are ignored.
    """
    if m < 0:
        raise InvalidParameter(f"m must be >= 0, got {m}")
    if isinstance(policy, str):
        policy = Process.parse(policy)
    rng = make_rng(seed)
    if policy.kind == "single":
        return _run_single(graph.n, m, rng, record_history)
    if policy.kind == "edge-two-choice":
        if graph.num_edges == 0:
            raise InvalidState("cannot sample an edge from an edgeless graph")
        return _run_two_choice(graph, m, policy.tiebreak, rng, record_history)
    if policy.kind == "moves":
        if record_history:
            raise InvalidParameter("per-ball history is not defined for moves (balls relocate)")
        from .moves import run_moves

        return run_moves(graph, m, policy.h, rng).state
    from .grouped import GroupLayout, run_grouped

    layout = GroupLayout.for_process(graph.n, policy)
    return run_grouped(layout, m, rng, record_history=record_history, within=policy.within)
