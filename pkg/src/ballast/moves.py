"""Two-choice insertion with bounded relocation of earlier balls.

Each placed ball is an edge between its two candidate bins, directed at the
bin it occupies; a bin's load is its in-degree. On arrival a new ball may
push a chain of up to ``h`` earlier balls to their alternate bins. Following
edges backwards from an endpoint ``x`` reaches bins ``w`` with a directed
path ``w -> ... -> x``; flipping that path and parking the new ball at ``x``
raises ``w`` by one and leaves every other load unchanged.

The search is a breadth-first walk from both endpoints, depth-limited to
``h``. Among reached bins the winner minimizes ``(load, depth, bin index)``;
the path is the one the walk discovered first. The new ball's own edge takes
no part in the search. No randomness is consumed beyond edge sampling, so two
runs that share a seed see identical edges whatever their ``h``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .allocation import AllocationState
from .errors import InvalidParameter, InvalidState
from .graphs import BinGraph
from .rng import make_rng


@numba.njit(cache=True, nogil=True)
def _link(head, nxt, prv, ball, b):
    first = head[b]
    nxt[ball] = first
    prv[ball] = -1
    if first != -1:
        prv[first] = ball
    head[b] = ball


@numba.njit(cache=True, nogil=True)
def _unlink(head, nxt, prv, ball, b):
    p = prv[ball]
    q = nxt[ball]
    if p != -1:
        nxt[p] = q
    else:
        head[b] = q
    if q != -1:
        prv[q] = p


@numba.njit(cache=True, nogil=True)
def _search(loads, eu, ev, head, nxt, a, b, h, stamp, seen, depth, pbin, pball, queue):
    qn = 0
    for s in (a, b):
        if seen[s] != stamp:
            seen[s] = stamp
            depth[s] = 0
            pbin[s] = -1
            pball[s] = -1
            queue[qn] = s
            qn += 1
    best = queue[0]
    qi = 0
    while qi < qn:
        x = queue[qi]
        qi += 1
        lx = loads[x]
        lb = loads[best]
        if lx < lb or (lx == lb and (depth[x] < depth[best] or (depth[x] == depth[best] and x < best))):
            best = x
        if depth[x] >= h:
            continue
        ball = head[x]
        while ball != -1:
            w = eu[ball] + ev[ball] - x
            if seen[w] != stamp:
                seen[w] = stamp
                depth[w] = depth[x] + 1
                pbin[w] = x
                pball[w] = ball
                queue[qn] = w
                qn += 1
            ball = nxt[ball]
    return best


@numba.njit(cache=True, nogil=True)
def _place(loads, res, head, nxt, prv, w, pbin, pball, new_ball):
    cur = w
    while pbin[cur] != -1:
        ball = pball[cur]
        p = pbin[cur]
        _unlink(head, nxt, prv, ball, p)
        res[ball] = cur
        _link(head, nxt, prv, ball, cur)
        loads[p] -= 1
        loads[cur] += 1
        cur = p
    res[new_ball] = cur
    _link(head, nxt, prv, new_ball, cur)
    loads[cur] += 1
    return cur


@numba.njit(cache=True, nogil=True)
def _moves_run(loads, eu, ev, res, head, nxt, prv, start, stop, h, seen, depth, pbin, pball, queue, prefix_max):
    track = prefix_max.shape[0] > 0
    running = 0
    for i in range(loads.shape[0]):
        if loads[i] > running:
            running = loads[i]
    for ball in range(start, stop):
        a = min(eu[ball], ev[ball])
        b = max(eu[ball], ev[ball])
        w = _search(loads, eu, ev, head, nxt, a, b, h, ball, seen, depth, pbin, pball, queue)
        _place(loads, res, head, nxt, prv, w, pbin, pball, ball)
        if loads[w] > running:
            running = loads[w]
        if track:
            prefix_max[ball - start] = running


class Orientation:
    """Directed multigraph of placed balls; ``in_degree`` is the load vector."""

    def __init__(self, n: int, capacity: int = 16):
        if n < 1:
            raise InvalidParameter(f"n must be >= 1, got {n}")
        self.n = n
        self.num_balls = 0
        cap = max(int(capacity), 1)
        self.eu = np.empty(cap, dtype=np.int64)
        self.ev = np.empty(cap, dtype=np.int64)
        self.res = np.empty(cap, dtype=np.int64)
        self.nxt = np.empty(cap, dtype=np.int64)
        self.prv = np.empty(cap, dtype=np.int64)
        self.loads = np.zeros(n, dtype=np.int64)
        self.head = np.full(n, -1, dtype=np.int64)
        # search scratch; ``seen`` holds the ball index that last visited a bin
        self._seen = np.full(n, -1, dtype=np.int64)
        self._depth = np.zeros(n, dtype=np.int64)
        self._pbin = np.zeros(n, dtype=np.int64)
        self._pball = np.zeros(n, dtype=np.int64)
        self._queue = np.zeros(n, dtype=np.int64)

    @classmethod
    def from_balls(cls, n: int, balls) -> "Orientation":
        """Build from ``(u, v, resident)`` triples, in ball order."""
        o = cls(n, capacity=len(balls) + 1)
        for u, v, r in balls:
            if u == v or r not in (u, v) or not (0 <= u < n and 0 <= v < n):
                raise InvalidParameter(f"bad ball ({u}, {v}, resident {r})")
            o._ensure(o.num_balls + 1)
            i = o.num_balls
            o.eu[i], o.ev[i], o.res[i] = u, v, r
            _link(o.head, o.nxt, o.prv, i, r)
            o.loads[r] += 1
            o.num_balls += 1
        return o

    def _ensure(self, size: int) -> None:
        if size <= len(self.eu):
            return
        cap = max(size, 2 * len(self.eu))
        for name in ("eu", "ev", "res", "nxt", "prv"):
            old = getattr(self, name)
            new = np.empty(cap, dtype=np.int64)
            new[: self.num_balls] = old[: self.num_balls]
            setattr(self, name, new)

    @property
    def in_degree(self) -> np.ndarray:
        return np.bincount(self.res[: self.num_balls], minlength=self.n).astype(np.int64)

    def ball_edges(self) -> list[tuple[int, int, int]]:
        k = self.num_balls
        return list(zip(self.eu[:k].tolist(), self.ev[:k].tolist(), self.res[:k].tolist()))

    def residents(self, b: int) -> list[int]:
        out = []
        ball = self.head[b]
        while ball != -1:
            out.append(int(ball))
            ball = self.nxt[ball]
        return out

    def check(self) -> None:
        """Raise :class:`InvalidState` unless residence and loads agree."""
        k = self.num_balls
        eu, ev, res = self.eu[:k], self.ev[:k], self.res[:k]
        if np.any((res != eu) & (res != ev)):
            raise InvalidState("a ball resides outside its own edge")
        if not np.array_equal(self.in_degree, self.loads):
            raise InvalidState("in-degree differs from load")
        for b in range(self.n):
            if any(self.res[x] != b for x in self.residents(b)):
                raise InvalidState(f"resident list of bin {b} is stale")


def _path_from(o: Orientation, w: int) -> list[tuple[int, int, int]]:
    # (ball, tail, head) with the ball currently resident at head; listed from w towards the endpoint
    path = []
    cur = int(w)
    while o._pbin[cur] != -1:
        path.append((int(o._pball[cur]), cur, int(o._pbin[cur])))
        cur = int(o._pbin[cur])
    return path


def reachable_min(orient: Orientation, endpoints: tuple[int, int], h: int) -> tuple[int, list[tuple[int, int, int]]]:
    """Least-loaded bin with a directed path of length <= ``h`` into an endpoint.

    Returns ``(w, path)``; ``path`` lists ``(ball, tail, head)`` edges from
    ``w`` to the endpoint, empty when ``w`` is an endpoint itself. Read-only.
    """
    if h < 0:
        raise InvalidParameter(f"h must be >= 0, got {h}")
    a, b = min(endpoints), max(endpoints)
    stamp = -2 - orient.num_balls  # never collides with a real ball index
    w = _search(
        orient.loads, orient.eu, orient.ev, orient.head, orient.nxt, a, b, h, stamp,
        orient._seen, orient._depth, orient._pbin, orient._pball, orient._queue,
    )
    path = _path_from(orient, w)
    orient._seen[:] = -1
    return int(w), path


def insert_with_moves(
    orient: Orientation,
    graph: BinGraph,
    h: int,
    rng: np.random.Generator,
    edge: tuple[int, int] | None = None,
) -> tuple[int, list[tuple[int, int, int]]]:
    """Insert one ball, relocating up to ``h`` earlier balls.

    Returns the bin whose load went up and the flipped path as
    ``(ball, tail, head)`` triples in their pre-flip direction.
    """
    if h < 0:
        raise InvalidParameter(f"h must be >= 0, got {h}")
    if graph.n != orient.n:
        raise InvalidParameter(f"orientation has {orient.n} bins, graph has {graph.n}")
    u, v = graph.sample_edge(rng) if edge is None else edge
    w, path = reachable_min(orient, (u, v), h)
    o = orient
    o._ensure(o.num_balls + 1)
    i = o.num_balls
    o.eu[i], o.ev[i] = u, v
    _moves_run(
        o.loads, o.eu, o.ev, o.res, o.head, o.nxt, o.prv, i, i + 1, h,
        o._seen, o._depth, o._pbin, o._pball, o._queue, np.zeros(0, dtype=np.int64),
    )
    o.num_balls += 1
    return w, path


@dataclass
class MovesResult:
    state: AllocationState
    orientation: Orientation
    prefix_max: np.ndarray | None = None


def run_moves(
    graph: BinGraph,
    m: int,
    h: int,
    seed: int | np.random.Generator,
    track_prefix: bool = False,
) -> MovesResult:
    """Insert ``m`` balls with at most ``h`` relocations each.

    With ``track_prefix`` the result carries the maximum load after every
    insert. Edge samples depend on the seed only, not on ``h``.
    """
    if h < 0:
        raise InvalidParameter(f"h must be >= 0, got {h}")
    if graph.num_edges == 0:
        raise InvalidState("cannot sample an edge from an edgeless graph")
    rng = make_rng(seed)
    o = Orientation(graph.n, capacity=m + 1)
    if m:
        edges = graph.sample_edges(rng, m)
        o.eu[:m] = edges[:, 0]
        o.ev[:m] = edges[:, 1]
    prefix = np.zeros(m if track_prefix else 0, dtype=np.int64)
    _moves_run(
        o.loads, o.eu, o.ev, o.res, o.head, o.nxt, o.prv, 0, m, h,
        o._seen, o._depth, o._pbin, o._pball, o._queue, prefix,
    )
    o.num_balls = m
    return MovesResult(AllocationState(o.loads.copy(), m, None), o, prefix if track_prefix else None)
