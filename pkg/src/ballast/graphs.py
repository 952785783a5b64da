"""Bin graphs: the allowed bin pairs a ball may choose between.

A :class:`BinGraph` is an immutable simple graph on bins ``0..n-1``. The
structured families (complete, ring-distance, complete bipartite, clique
union) never store their edge list; every edge has a fixed index and
:meth:`BinGraph.edge_at` decodes an index to its endpoints in O(1). That keeps
a complete graph on 2**20 bins cheap while uniform edge sampling stays "draw
an index, look the edge up". Graphs built from an explicit list (random
regular, file import) store it as an ``(m, 2)`` array.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import GenerationFailure, InvalidParameter, InvalidState
from .rng import make_rng

COMPLETE = "complete"
RING = "ring-distance"
BIPARTITE = "bipartite"
CLIQUES = "clique-union"
EXPLICIT = "explicit"

RESAMPLE_CAP = 10_000


def _colex_decode(k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Pair (i, j), i < j, has colex index j*(j-1)/2 + i.
    j = np.floor((1.0 + np.sqrt(1.0 + 8.0 * k.astype(np.float64))) / 2.0).astype(np.int64)
    j -= (j * (j - 1) // 2) > k
    j += ((j + 1) * j // 2) <= k
    return k - j * (j - 1) // 2, j


@dataclass(frozen=True, eq=False)
class BinGraph:
    """Undirected simple graph over ``n`` bins.

    Use the ``gen_*`` constructors or :meth:`from_edges`; the raw constructor
    does not validate.
    """

    n: int
    family: str
    params: tuple = ()
    _edges: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]] | np.ndarray) -> "BinGraph":
        """Build a graph from an explicit edge list, checking every invariant."""
        if n < 1:
            raise InvalidParameter(f"n must be >= 1, got {n}")
        arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
        arr = arr.reshape(-1, 2)
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise InvalidParameter("edge endpoint out of range [0, n)")
        if np.any(arr[:, 0] == arr[:, 1]):
            raise InvalidParameter("self-loop in edge list")
        arr = np.sort(arr, axis=1)
        if len(np.unique(arr[:, 0] * n + arr[:, 1])) != len(arr):
            raise InvalidParameter("duplicate edge in edge list")
        arr.setflags(write=False)
        return cls(n, EXPLICIT, (), arr)

    @property
    def num_edges(self) -> int:
        n, p = self.n, self.params
        if self.family == COMPLETE:
            return n * (n - 1) // 2
        if self.family == RING:
            return n * (p[0] // 2)
        if self.family == BIPARTITE:
            return (n - p[0]) * p[0]
        if self.family == CLIQUES:
            return p[0] * (p[1] * (p[1] - 1) // 2)
        return len(self._edges)

    @property
    def degree(self) -> np.ndarray:
        n, p = self.n, self.params
        if self.family == COMPLETE:
            return np.full(n, n - 1, dtype=np.int64)
        if self.family == RING:
            return np.full(n, p[0], dtype=np.int64)
        if self.family == BIPARTITE:
            delta = p[0]
            return np.concatenate([np.full(n - delta, delta), np.full(delta, n - delta)]).astype(np.int64)
        if self.family == CLIQUES:
            return np.full(n, p[1] - 1, dtype=np.int64)
        return np.bincount(self._edges.ravel(), minlength=n).astype(np.int64)

    @property
    def edges(self) -> np.ndarray:
        """All edges as an ``(m, 2)`` array with ``u < v``, in index order.

        Materializes the full list for structured families; avoid on huge graphs.
        """
        if self._edges is not None:
            return self._edges
        return self.edge_at(np.arange(self.num_edges, dtype=np.int64))

    def edge_at(self, index: np.ndarray | int) -> np.ndarray:
        """Decode edge indices to endpoint pairs (``u < v``)."""
        scalar = np.ndim(index) == 0
        k = np.atleast_1d(np.asarray(index, dtype=np.int64))
        n, p = self.n, self.params
        if self.family == COMPLETE:
            u, v = _colex_decode(k)
        elif self.family == RING:
            half = p[0] // 2
            a = k // half
            b = (a + k % half + 1) % n
            u, v = np.minimum(a, b), np.maximum(a, b)
        elif self.family == BIPARTITE:
            right = p[0]
            u, v = k // right, (n - right) + k % right
        elif self.family == CLIQUES:
            size = p[1]
            per = size * (size - 1) // 2
            base = (k // per) * size
            i, j = _colex_decode(k % per)
            u, v = base + i, base + j
        else:
            out = self._edges[k]
            return out[0] if scalar else out
        out = np.stack([u, v], axis=1)
        return out[0] if scalar else out

    def sample_edge(self, rng: np.random.Generator) -> tuple[int, int]:
        if self.num_edges == 0:
            raise InvalidState("cannot sample an edge from an edgeless graph")
        u, v = self.edge_at(int(rng.integers(0, self.num_edges)))
        return int(u), int(v)

    def sample_edges(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """``size`` independent uniform edges as an ``(size, 2)`` int64 array."""
        if self.num_edges == 0:
            raise InvalidState("cannot sample an edge from an edgeless graph")
        return self.edge_at(rng.integers(0, self.num_edges, size=size, dtype=np.int64))

    def neighbors(self, u: int) -> np.ndarray:
        n, p = self.n, self.params
        if not 0 <= u < n:
            raise InvalidParameter(f"node {u} out of range")
        if self.family == COMPLETE:
            return np.delete(np.arange(n), u)
        if self.family == RING:
            offs = np.arange(1, p[0] // 2 + 1)
            return np.unique(np.concatenate([(u + offs) % n, (u - offs) % n]))
        if self.family == BIPARTITE:
            left = n - p[0]
            return np.arange(left, n) if u < left else np.arange(left)
        if self.family == CLIQUES:
            base = (u // p[1]) * p[1]
            return np.delete(np.arange(base, base + p[1]), u - base)
        e = self._edges
        return np.sort(np.concatenate([e[e[:, 0] == u, 1], e[e[:, 1] == u, 0]]))

    def validate(self) -> None:
        """Raise :class:`InvalidParameter` if any simple-graph invariant fails."""
        e = self.edges
        BinGraph.from_edges(self.n, e)
        if len(e) != self.num_edges:
            raise InvalidParameter("edge count inconsistent with family")
        if not np.array_equal(np.bincount(e.ravel(), minlength=self.n), self.degree):
            raise InvalidParameter("degree sequence inconsistent with edge list")


def gen_complete(n: int) -> BinGraph:
    if n < 1:
        raise InvalidParameter(f"complete graph needs n >= 1, got {n}")
    return BinGraph(n, COMPLETE)


def gen_ring_distance(n: int, delta: int) -> BinGraph:
    """Bins on a ring, joined when their ring distance is at most ``delta/2``."""
    if delta % 2:
        raise InvalidParameter(f"delta must be even, got {delta}")
    if not 2 <= delta <= n - 1:
        raise InvalidParameter(f"need 2 <= delta <= n-1, got n={n}, delta={delta}")
    return BinGraph(n, RING, (delta,))


def gen_complete_bipartite(n: int, delta: int) -> BinGraph:
    """Left side ``0..n-delta-1``, right side the last ``delta`` bins."""
    if not 1 <= delta <= n - 1:
        raise InvalidParameter(f"need 1 <= delta <= n-1, got n={n}, delta={delta}")
    return BinGraph(n, BIPARTITE, (delta,))


def gen_clique_union(num_cliques: int, clique_size: int) -> BinGraph:
    if num_cliques < 1:
        raise InvalidParameter(f"num_cliques must be >= 1, got {num_cliques}")
    if clique_size < 2:
        raise InvalidParameter(f"clique_size must be >= 2, got {clique_size}")
    return BinGraph(num_cliques * clique_size, CLIQUES, (num_cliques, clique_size))


def clique_union_for_epsilon(n: int, epsilon: float) -> tuple[int, int]:
    """Integral ``(num_cliques, clique_size)`` with product ``n``, size nearest ``n**epsilon``."""
    if n < 2 or not 0 < epsilon <= 1:
        raise InvalidParameter(f"need n >= 2 and 0 < epsilon <= 1, got n={n}, epsilon={epsilon}")
    target = n**epsilon
    sizes = [s for s in range(2, n + 1) if n % s == 0]
    size = min(sizes, key=lambda s: (abs(math.log(s) - math.log(target)), s))
    return n // size, size


def _pairing_attempt(stubs: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray | None:
    pairs = rng.permutation(stubs).reshape(-1, 2)
    pairs.sort(axis=1)
    if np.any(pairs[:, 0] == pairs[:, 1]):
        return None
    if len(np.unique(pairs[:, 0] * n + pairs[:, 1])) != len(pairs):
        return None
    return pairs


def _repair_attempt(stubs: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray | None:
    # Keep every legal pair and re-pair only the leftover stubs.
    edges: set[tuple[int, int]] = set()
    stubs = stubs.tolist()
    while stubs:
        rng.shuffle(stubs)
        leftover = []
        for a, b in zip(stubs[::2], stubs[1::2]):
            a, b = min(a, b), max(a, b)
            if a != b and (a, b) not in edges:
                edges.add((a, b))
            else:
                leftover += [a, b]
        if leftover:
            nodes = sorted(set(leftover))
            if not any(
                a < b and (a, b) not in edges for i, a in enumerate(nodes) for b in nodes[i + 1 :]
            ):
                return None
        stubs = leftover
    return np.array(sorted(edges), dtype=np.int64).reshape(-1, 2)


def gen_random_regular(
    n: int,
    delta: int,
    seed: int | np.random.Generator,
    *,
    method: str = "reject",
    max_attempts: int = RESAMPLE_CAP,
) -> BinGraph:
    """Sample a simple ``delta``-regular graph with the pairing model.

    ``method="reject"`` redraws the whole pairing until it is simple, which is
    exactly uniform but needs about ``exp((delta**2 - 1) / 4)`` attempts, so it
    is only practical for ``delta`` up to about 6. ``method="repair"``
    re-pairs only the offending stubs; it scales to large degrees but is only
    approximately uniform.
    """
    if delta < 1 or delta >= n:
        raise InvalidParameter(f"need 1 <= delta < n, got n={n}, delta={delta}")
    if (n * delta) % 2:
        raise InvalidParameter(f"n*delta must be even (handshake), got n={n}, delta={delta}")
    if method not in ("reject", "repair"):
        raise InvalidParameter(f"unknown method {method!r}")
    rng = make_rng(seed)
    stubs = np.repeat(np.arange(n, dtype=np.int64), delta)
    attempt_fn = _pairing_attempt if method == "reject" else _repair_attempt
    for _ in range(max_attempts):
        pairs = attempt_fn(stubs, n, rng)
        if pairs is not None:
            return BinGraph.from_edges(n, pairs)
    raise GenerationFailure(f"no simple {delta}-regular pairing on {n} nodes", max_attempts)


def load_graph(path: str | os.PathLike) -> BinGraph:
    """Read ``n m`` then ``m`` lines of ``u v`` (0-based).

    Violations raise :class:`InvalidParameter` naming the offending line.
    """
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines()]
    if not lines:
        raise InvalidParameter(f"{path}: line 1: empty file")

    def ints(lineno: int, text: str) -> tuple[int, int]:
        parts = text.split()
        if len(parts) != 2:
            raise InvalidParameter(f"{path}: line {lineno}: expected two integers")
        try:
            return int(parts[0]), int(parts[1])
        except ValueError:
            raise InvalidParameter(f"{path}: line {lineno}: expected two integers") from None

    n, m = ints(1, lines[0])
    if n < 1 or m < 0:
        raise InvalidParameter(f"{path}: line 1: need n >= 1 and m >= 0")
    body = [(i + 2, ln) for i, ln in enumerate(lines[1:]) if ln.strip()]
    if len(body) != m:
        raise InvalidParameter(f"{path}: line {len(lines)}: header declares {m} edges, found {len(body)}")
    seen: set[tuple[int, int]] = set()
    edges = []
    for lineno, text in body:
        u, v = ints(lineno, text)
        if not (0 <= u < n and 0 <= v < n):
            raise InvalidParameter(f"{path}: line {lineno}: endpoint out of range [0, {n})")
        if u == v:
            raise InvalidParameter(f"{path}: line {lineno}: self-loop")
        key = (min(u, v), max(u, v))
        if key in seen:
            raise InvalidParameter(f"{path}: line {lineno}: duplicate edge {key}")
        seen.add(key)
        edges.append(key)
    return BinGraph.from_edges(n, np.array(edges, dtype=np.int64).reshape(-1, 2))


def save_graph(graph: BinGraph, path: str | os.PathLike) -> None:
    e = graph.edges
    with open(path, "w") as fh:
        fh.write(f"{graph.n} {len(e)}\n")
        for u, v in e:
            fh.write(f"{u} {v}\n")
