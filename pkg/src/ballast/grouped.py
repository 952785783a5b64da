"""Placement into groups of consecutive bins ("super-bins").

Three schemes share one layout type:

* ``aligned``: bins are cut into ``n/g`` fixed super-bins. A ball samples
  ``c`` of them (with replacement), picks the one with the smallest total
  load (ties to the lowest super-bin index) and goes to its least-loaded bin.
* ``unaligned``: a ball samples two disjoint windows of ``g`` consecutive
  bins anywhere on the ring, picks the lighter window (ties by fair coin)
  and goes to its least-loaded bin.
* ``global-min``: sampled like ``aligned``, but the ball goes to the least
  loaded of all ``c*g`` probed bins, ignoring the group totals.

Also here: the k-step block detector and the q_r measurement used to watch
unaligned windows build staircases of load.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numba
import numpy as np

from .allocation import AllocationState, History, Process
from .errors import InvalidParameter
from .rng import make_rng

MODES = ("aligned", "unaligned", "global-min")


def default_block_size(n: int, g: int, c: int) -> int:
    """``ceil(4 * d * log2 n)`` super-bins, with ``d = c * g`` probed bins."""
    return max(1, math.ceil(4 * c * g * math.log2(max(n, 2))))


@dataclass(frozen=True)
class GroupLayout:
    n: int
    g: int
    c: int = 2
    mode: str = "aligned"
    t: int | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidParameter(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.n < 1 or self.g < 1:
            raise InvalidParameter(f"need n >= 1 and g >= 1, got n={self.n}, g={self.g}")
        if self.mode == "unaligned":
            if self.c != 2:
                raise InvalidParameter("unaligned windows require c = 2")
            if 2 * self.g > self.n:
                raise InvalidParameter(f"2g must be <= n for disjoint windows, got n={self.n}, g={self.g}")
        else:
            if self.c < 2:
                raise InvalidParameter(f"c must be >= 2, got {self.c}")
            if self.n % self.g:
                raise InvalidParameter(f"g must divide n, got n={self.n}, g={self.g}")
        if self.t is None:
            object.__setattr__(self, "t", default_block_size(self.n, self.g, self.c))
        if self.t < 1:
            raise InvalidParameter(f"t must be >= 1, got {self.t}")

    @classmethod
    def for_process(cls, n: int, process: Process) -> "GroupLayout":
        if not process.grouped:
            raise InvalidParameter(f"{process.kind} is not a grouped process")
        return cls(n, process.g, process.c, process.kind, process.t)

    @property
    def d(self) -> int:
        return self.c * self.g

    @property
    def num_groups(self) -> int:
        return self.n // self.g

    @property
    def num_blocks(self) -> int:
        return self.num_groups // self.t

    @property
    def round_size(self) -> int:
        """Inserts per round when tracking steps: ``n // t``."""
        return max(1, self.n // self.t)


# --- kernels -----------------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _min_in_run(loads, base, g, n, u):
    # least-loaded bin of base..base+g-1 (mod n); ties to first in order,
    # or to a uniform tie when u >= 0
    best = base % n
    ties = 1
    for j in range(1, g):
        b = (base + j) % n
        if loads[b] < loads[best]:
            best = b
            ties = 1
        elif loads[b] == loads[best]:
            ties += 1
    if u < 0.0 or ties == 1:
        return best
    want = int(u * ties)
    lo = loads[best]
    for j in range(g):
        b = (base + j) % n
        if loads[b] == lo:
            if want == 0:
                return b
            want -= 1
    return best


@numba.njit(cache=True, nogil=True)
def _grouped_aligned_kernel(loads, totals, groups, g, global_min, within_u, start, stop, h_placed, h_height):
    n = loads.shape[0]
    c = groups.shape[1]
    record = h_placed.shape[0] > 0
    rand_within = within_u.shape[0] > 0
    for i in range(start, stop):
        if global_min:
            pick = -1
            for j in range(c):
                base = groups[i, j] * g
                for k in range(g):
                    b = base + k
                    if pick == -1 or loads[b] < loads[pick] or (loads[b] == loads[pick] and b < pick):
                        pick = b
        else:
            best = groups[i, 0]
            for j in range(1, c):
                s = groups[i, j]
                if totals[s] < totals[best] or (totals[s] == totals[best] and s < best):
                    best = s
            u = within_u[i] if rand_within else -1.0
            pick = _min_in_run(loads, best * g, g, n, u)
        loads[pick] += 1
        totals[pick // g] += 1
        if record:
            h_placed[i] = pick
            h_height[i] = loads[pick]


@numba.njit(cache=True, nogil=True)
def _unaligned_kernel(loads, s1, s2, coins, g, within_u, start, stop, h_placed, h_height):
    n = loads.shape[0]
    record = h_placed.shape[0] > 0
    rand_within = within_u.shape[0] > 0
    for i in range(start, stop):
        a = s1[i]
        b = s2[i]
        ta = 0
        tb = 0
        for j in range(g):
            ta += loads[(a + j) % n]
            tb += loads[(b + j) % n]
        if ta < tb:
            win = a
        elif tb < ta:
            win = b
        elif coins[i] == 0:
            win = a
        else:
            win = b
        u = within_u[i] if rand_within else -1.0
        pick = _min_in_run(loads, win, g, n, u)
        loads[pick] += 1
        if record:
            h_placed[i] = pick
            h_height[i] = loads[pick]


# --- draws -------------------------------------------------------------------


def windows_disjoint(s1, s2, n: int, g: int):
    """True where windows of length ``g`` starting at ``s1`` and ``s2`` share no bin."""
    off = (np.asarray(s2) - np.asarray(s1)) % n
    return (off >= g) & (off <= n - g)


def sample_disjoint_windows(rng: np.random.Generator, n: int, g: int, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Window starts ``(s1, s2)``: ``s2`` is redrawn until its window misses ``s1``'s."""
    s1 = rng.integers(0, n, size=size, dtype=np.int64)
    s2 = rng.integers(0, n, size=size, dtype=np.int64)
    bad = ~windows_disjoint(s1, s2, n, g)
    while bad.any():
        s2[bad] = rng.integers(0, n, size=int(bad.sum()), dtype=np.int64)
        bad[bad] = ~windows_disjoint(s1[bad], s2[bad], n, g)
    return s1, s2


@dataclass
class _Draws:
    groups: np.ndarray | None = None
    s1: np.ndarray | None = None
    s2: np.ndarray | None = None
    coins: np.ndarray | None = None
    within_u: np.ndarray | None = None


def _draw(layout: GroupLayout, m: int, rng: np.random.Generator, within: str) -> _Draws:
    d = _Draws()
    if layout.mode == "unaligned":
        d.s1, d.s2 = sample_disjoint_windows(rng, layout.n, layout.g, m)
        d.coins = rng.integers(0, 2, size=m, dtype=np.int8)
    else:
        d.groups = rng.integers(0, layout.num_groups, size=(m, layout.c), dtype=np.int64)
    d.within_u = rng.random(m) if within == "random" and layout.mode != "global-min" else np.zeros(0)
    return d


def _advance(loads, totals, layout, d: _Draws, start, stop, placed, height) -> None:
    if layout.mode == "unaligned":
        _unaligned_kernel(loads, d.s1, d.s2, d.coins, layout.g, d.within_u, start, stop, placed, height)
    else:
        _grouped_aligned_kernel(
            loads, totals, d.groups, layout.g, layout.mode == "global-min", d.within_u, start, stop, placed, height
        )


def _group_totals(loads: np.ndarray, layout: GroupLayout) -> np.ndarray:
    if layout.mode == "unaligned":
        return np.zeros(0, dtype=np.int64)
    return loads.reshape(-1, layout.g).sum(axis=1)


def run_grouped(
    layout: GroupLayout,
    m: int,
    seed: int | np.random.Generator,
    *,
    record_history: bool = False,
    within: str = "left",
    checkpoint_every: int | None = None,
    on_checkpoint=None,
) -> AllocationState:
    """Insert ``m`` balls under ``layout``.

    ``on_checkpoint(inserted, loads)`` is called before the first insert and
    then after every ``checkpoint_every`` inserts (and at the end); ``loads``
    is a live view and must be copied if kept.
    """
    if m < 0:
        raise InvalidParameter(f"m must be >= 0, got {m}")
    rng = make_rng(seed)
    draws = _draw(layout, m, rng, within)
    loads = np.zeros(layout.n, dtype=np.int64)
    totals = _group_totals(loads, layout)
    k = m if record_history else 0
    placed = np.empty(k, dtype=np.int64)
    height = np.empty(k, dtype=np.int64)
    step = checkpoint_every if checkpoint_every else max(m, 1)
    if on_checkpoint:
        on_checkpoint(0, loads)
    done = 0
    while done < m:
        upto = min(m, done + step)
        _advance(loads, totals, layout, draws, done, upto, placed, height)
        done = upto
        if on_checkpoint:
            on_checkpoint(done, loads)
    hist = History.from_arrays(placed, placed, placed, height, np.full(k, -1)) if record_history else None
    return AllocationState(loads, m, hist)


def _insert_one(state: AllocationState, layout: GroupLayout, d: _Draws) -> int:
    if state.n != layout.n:
        raise InvalidParameter(f"state has {state.n} bins, layout has {layout.n}")
    totals = _group_totals(state.loads, layout)
    placed = np.empty(1, dtype=np.int64)
    height = np.empty(1, dtype=np.int64)
    _advance(state.loads, totals, layout, d, 0, 1, placed, height)
    state.balls_inserted += 1
    b = int(placed[0])
    if state.history is not None:
        state.history.append(b, b, b, int(height[0]), -1)
    return b


def _require(layout: GroupLayout, mode: str) -> None:
    if layout.mode != mode:
        raise InvalidParameter(f"layout mode is {layout.mode!r}, expected {mode!r}")


def insert_aligned(
    state: AllocationState,
    layout: GroupLayout,
    rng: np.random.Generator,
    groups=None,
    within: str = "left",
) -> int:
    """Lesser-loaded of ``c`` sampled super-bins, then its least-loaded bin.

    ``groups`` overrides the sampled super-bin indices.
    """
    _require(layout, "aligned")
    d = _draw(layout, 1, rng, within)
    if groups is not None:
        d.groups = np.asarray(groups, dtype=np.int64).reshape(1, -1)
    return _insert_one(state, layout, d)


def insert_global_min(state: AllocationState, layout: GroupLayout, rng: np.random.Generator, groups=None) -> int:
    """Least-loaded bin over all ``c * g`` probed bins, ties to the lowest index."""
    _require(layout, "global-min")
    d = _draw(layout, 1, rng, "left")
    if groups is not None:
        d.groups = np.asarray(groups, dtype=np.int64).reshape(1, -1)
    return _insert_one(state, layout, d)


def insert_unaligned(
    state: AllocationState,
    layout: GroupLayout,
    rng: np.random.Generator,
    starts: tuple[int, int] | None = None,
    within: str = "left",
) -> int:
    """Lighter of two disjoint ring windows, then its least-loaded bin.

    ``starts`` overrides the sampled window starts; they must be disjoint.
    """
    _require(layout, "unaligned")
    d = _draw(layout, 1, rng, within)
    if starts is not None:
        if not windows_disjoint(starts[0], starts[1], layout.n, layout.g):
            raise InvalidParameter(f"windows at {starts} overlap")
        d.s1 = np.array([starts[0]], dtype=np.int64)
        d.s2 = np.array([starts[1]], dtype=np.int64)
    return _insert_one(state, layout, d)


# --- step detection ----------------------------------------------------------


def classify_blocks(loads: np.ndarray, g: int, t: int) -> np.ndarray:
    """For each full block of ``t`` super-bins, its step height ``k`` or -1.

    A block is a k-step when every bin of its l-th super-bin (l from 0)
    has load ``max(0, k - l)``, for some ``0 <= k <= t``.
    """
    blocks = (len(loads) // g) // t
    if blocks == 0:
        return np.zeros(0, dtype=np.int64)
    arr = np.asarray(loads[: blocks * t * g]).reshape(blocks, t, g)
    k = arr[:, 0, 0].astype(np.int64)
    expected = np.maximum(0, k[:, None, None] - np.arange(t)[None, :, None])
    ok = np.all(arr == expected, axis=(1, 2)) & (k <= t)
    return np.where(ok, k, -1)


@dataclass
class StepCounts:
    """Per-k counts of step blocks; bins past the last full block are ignored."""

    counts: dict[int, int]
    blocks: int
    ignored_bins: int
    per_block: np.ndarray

    def __getitem__(self, k: int) -> int:
        return self.counts.get(k, 0)

    def fraction(self, k: int) -> float:
        return self[k] / self.blocks if self.blocks else 0.0


def _loads_of(state) -> np.ndarray:
    return state.loads if isinstance(state, AllocationState) else np.asarray(state)


def detect_k_steps(state: AllocationState | np.ndarray, layout: GroupLayout) -> StepCounts:
    loads = _loads_of(state)
    per_block = classify_blocks(loads, layout.g, layout.t)
    counts = {k: int(np.count_nonzero(per_block == k)) for k in range(layout.t + 1)}
    covered = len(per_block) * layout.t * layout.g
    return StepCounts(counts, len(per_block), len(loads) - covered, per_block)


def write_steps_csv(steps: StepCounts, path: str | os.PathLike) -> None:
    """One ``block_index,k`` row per block that is a step."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["block_index", "k"])
        for i, k in enumerate(steps.per_block.tolist()):
            if k >= 0:
                w.writerow([i, k])


def round_trace(layout: GroupLayout, rounds: int, seed: int | np.random.Generator, within: str = "left") -> list[np.ndarray]:
    """Load vectors at every round boundary (``rounds + 1`` of them, starting empty)."""
    trace: list[np.ndarray] = []
    size = layout.round_size
    run_grouped(
        layout, rounds * size, seed, within=within, checkpoint_every=size,
        on_checkpoint=lambda _, loads: trace.append(loads.copy()),
    )
    return trace


def estimate_q_r(trace, layout: GroupLayout, r: int) -> float:
    """Fraction of full blocks that are r-steps after round ``r`` of ``trace``."""
    if r < 0 or r >= len(trace):
        raise InvalidParameter(f"r={r} but the trace holds rounds 0..{len(trace) - 1}")
    steps = detect_k_steps(trace[r], layout)
    if steps.blocks == 0:
        raise InvalidParameter(f"layout has no full block (t={layout.t}, {layout.num_groups} super-bins)")
    return float(np.count_nonzero(steps.per_block == r)) / steps.blocks
