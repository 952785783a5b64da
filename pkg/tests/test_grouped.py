import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ballast.allocation import AllocationState
from ballast.errors import InvalidParameter
from ballast.grouped import (
    GroupLayout,
    _draw,
    classify_blocks,
    default_block_size,
    detect_k_steps,
    estimate_q_r,
    insert_aligned,
    insert_global_min,
    insert_unaligned,
    round_trace,
    run_grouped,
    sample_disjoint_windows,
    windows_disjoint,
    write_steps_csv,
)
from ballast.rng import make_rng


def reference(layout, m, seed, within="left"):
    """Plain-Python replay of the grouped schemes over the same draws."""
    d = _draw(layout, m, make_rng(seed), within)
    n, g = layout.n, layout.g
    loads = [0] * n

    def least(start):
        run = [(start + j) % n for j in range(g)]
        lo = min(loads[b] for b in run)
        return next(b for b in run if loads[b] == lo)

    for i in range(m):
        if layout.mode == "unaligned":
            a, b = int(d.s1[i]), int(d.s2[i])
            ta = sum(loads[(a + j) % n] for j in range(g))
            tb = sum(loads[(b + j) % n] for j in range(g))
            start = a if ta < tb else b if tb < ta else (a if d.coins[i] == 0 else b)
            pick = least(start)
        elif layout.mode == "aligned":
            groups = d.groups[i].tolist()
            tot = {s: sum(loads[s * g : s * g + g]) for s in groups}
            best = min(groups, key=lambda s: (tot[s], s))
            pick = least(best * g)
        else:
            probed = [s * g + j for s in d.groups[i].tolist() for j in range(g)]
            pick = min(probed, key=lambda b: (loads[b], b))
        loads[pick] += 1
    return loads


class TestLayout:
    def test_aligned_needs_divisor(self):
        with pytest.raises(InvalidParameter, match="g must divide n"):
            GroupLayout(10, 4, 2, "aligned")

    def test_unaligned_needs_room(self):
        with pytest.raises(InvalidParameter):
            GroupLayout(10, 6, 2, "unaligned")
        GroupLayout(10, 5, 2, "unaligned")

    def test_unaligned_needs_two_windows(self):
        with pytest.raises(InvalidParameter):
            GroupLayout(16, 2, 3, "unaligned")

    def test_c_at_least_two(self):
        with pytest.raises(InvalidParameter):
            GroupLayout(16, 2, 1, "global-min")

    def test_default_t(self):
        lay = GroupLayout(1 << 12, 2, 2, "aligned")
        assert lay.t == default_block_size(1 << 12, 2, 2) == 4 * 4 * 12
        assert lay.d == 4
        assert lay.round_size == (1 << 12) // lay.t


class TestAligned:
    def test_tie_goes_to_lower_group(self, rng):
        lay = GroupLayout(8, 2, 2, "aligned")
        s = AllocationState.empty(8)
        assert insert_aligned(s, lay, rng, groups=[3, 1]) == 2
        assert s.loads.tolist() == [0, 0, 1, 0, 0, 0, 0, 0]

    def test_lesser_total_then_lightest_bin(self, rng):
        lay = GroupLayout(4, 2, 2, "aligned")
        s = AllocationState(np.array([2, 1, 2, 0]), 5)
        assert insert_aligned(s, lay, rng, groups=[0, 1]) == 3

    def test_same_group_twice(self, rng):
        lay = GroupLayout(8, 2, 2, "aligned")
        s = AllocationState(np.array([0, 0, 0, 0, 5, 5, 0, 0]), 10)
        assert insert_aligned(s, lay, rng, groups=[2, 2]) == 4

    def test_mode_mismatch(self, rng):
        with pytest.raises(InvalidParameter):
            insert_aligned(AllocationState.empty(8), GroupLayout(8, 2, 2, "global-min"), rng)

    @settings(max_examples=30, deadline=None)
    @given(g=st.sampled_from([1, 2, 4]), c=st.integers(2, 4), m=st.integers(0, 400), seed=st.integers(0, 2**32))
    def test_kernel_matches_reference(self, g, c, m, seed):
        lay = GroupLayout(32, g, c, "aligned")
        assert run_grouped(lay, m, seed).loads.tolist() == reference(lay, m, seed)

    @settings(max_examples=30, deadline=None)
    @given(g=st.sampled_from([2, 3, 4]), c=st.integers(2, 3), seed=st.integers(0, 2**32))
    def test_spread_within_super_bin_at_every_prefix(self, g, c, seed):
        lay = GroupLayout(12 * g, g, c, "aligned")

        def check(_, loads):
            per = loads.reshape(-1, g)
            assert np.all(per.max(axis=1) - per.min(axis=1) <= 1)

        run_grouped(lay, 40 * lay.n, seed, checkpoint_every=1, on_checkpoint=check)

    def test_chosen_group_never_heavier(self):
        lay = GroupLayout(64, 4, 2, "aligned")
        rng = np.random.default_rng(8)
        s = AllocationState.empty(64)
        for _ in range(1000):
            groups = rng.integers(0, 16, size=2)
            totals = s.loads.reshape(-1, 4).sum(axis=1)
            b = insert_aligned(s, lay, rng, groups=groups)
            assert totals[b // 4] == totals[groups].min()

    def test_random_within_ties(self):
        lay = GroupLayout(4, 4, 2, "aligned")
        picks = {run_grouped(lay, 1, seed, within="random").loads.argmax() for seed in range(60)}
        assert picks == {0, 1, 2, 3}
        assert {run_grouped(lay, 1, seed).loads.argmax() for seed in range(20)} == {0}


class TestGlobalMin:
    def test_unambiguous_min(self, rng):
        lay = GroupLayout(4, 2, 2, "global-min")
        s = AllocationState(np.array([1, 1, 0, 2]), 4)
        assert insert_global_min(s, lay, rng, groups=[0, 1]) == 2

    def test_diverges_from_lesser_group(self, rng):
        loads = np.array([0, 2, 1, 1])
        s = AllocationState(loads.copy(), 4)
        assert insert_global_min(s, GroupLayout(4, 2, 2, "global-min"), rng, groups=[0, 1]) == 0
        s = AllocationState(loads.copy(), 4)
        assert insert_aligned(s, GroupLayout(4, 2, 2, "aligned"), rng, groups=[0, 1]) == 0
        s = AllocationState(np.array([0, 3, 1, 1]), 5)
        assert insert_aligned(s, GroupLayout(4, 2, 2, "aligned"), rng, groups=[0, 1]) == 2
        s = AllocationState(np.array([0, 3, 1, 1]), 5)
        assert insert_global_min(s, GroupLayout(4, 2, 2, "global-min"), rng, groups=[0, 1]) == 0

    @settings(max_examples=30, deadline=None)
    @given(g=st.sampled_from([1, 2, 4]), c=st.integers(2, 4), m=st.integers(0, 300), seed=st.integers(0, 2**32))
    def test_kernel_matches_reference(self, g, c, m, seed):
        lay = GroupLayout(32, g, c, "global-min")
        assert run_grouped(lay, m, seed).loads.tolist() == reference(lay, m, seed)


class TestUnaligned:
    def test_overlap_detection(self):
        assert not windows_disjoint(3, 4, 8, 2)
        assert not windows_disjoint(3, 2, 8, 2)
        assert windows_disjoint(3, 5, 8, 2)
        assert windows_disjoint(7, 1, 8, 2)  # {7, 0} and {1, 2} on the ring
        assert not windows_disjoint(7, 0, 8, 2)

    def test_lighter_window_wins(self, rng):
        lay = GroupLayout(8, 2, 2, "unaligned")
        s = AllocationState(np.array([0, 0, 3, 2, 1, 1, 0, 0]), 7)
        assert insert_unaligned(s, lay, rng, starts=(2, 4)) == 4

    def test_wraparound_window(self, rng):
        lay = GroupLayout(8, 2, 2, "unaligned")
        s = AllocationState(np.array([1, 5, 5, 5, 5, 5, 5, 0]), 31)
        assert insert_unaligned(s, lay, rng, starts=(7, 2)) == 7

    def test_overlapping_starts_rejected(self, rng):
        with pytest.raises(InvalidParameter):
            insert_unaligned(AllocationState.empty(8), GroupLayout(8, 2, 2, "unaligned"), rng, starts=(3, 4))

    def test_rejection_sampler_is_uniform_over_allowed_offsets(self):
        rng = np.random.default_rng(4)
        s1, s2 = sample_disjoint_windows(rng, 10, 3, 40_000)
        off = (s2 - s1) % 10
        assert set(np.unique(off).tolist()) == {3, 4, 5, 6, 7}
        counts = np.bincount(off, minlength=10)[3:8]
        assert np.all(np.abs(counts - 8000) < 400)

    @settings(max_examples=30, deadline=None)
    @given(g=st.sampled_from([1, 2, 3, 5]), m=st.integers(0, 300), seed=st.integers(0, 2**32))
    def test_kernel_matches_reference(self, g, m, seed):
        lay = GroupLayout(30, g, 2, "unaligned")
        assert run_grouped(lay, m, seed).loads.tolist() == reference(lay, m, seed)

    def test_random_tie_between_windows(self):
        lay = GroupLayout(8, 2, 2, "unaligned")
        picks = set()
        for seed in range(40):
            d = _draw(lay, 1, make_rng(seed), "left")
            b = int(run_grouped(lay, 1, seed).loads.argmax())
            assert b in (d.s1[0], d.s2[0])
            picks.add(b == d.s1[0])
        assert picks == {True, False}


class TestSteps:
    def test_one_step(self):
        assert classify_blocks(np.array([1, 1, 0, 0, 0, 0]), 2, 3).tolist() == [1]

    def test_two_step(self):
        assert classify_blocks(np.array([2, 2, 1, 1, 0, 0]), 2, 3).tolist() == [2]

    def test_not_a_step(self):
        assert classify_blocks(np.array([1, 1, 1, 0, 0, 0]), 2, 3).tolist() == [-1]

    def test_zero_step_counted_at_zero(self):
        lay = GroupLayout(12, 2, 2, "aligned", t=3)
        steps = detect_k_steps(np.zeros(12, dtype=int), lay)
        assert steps.blocks == 2 and steps[0] == 2 and steps.ignored_bins == 0

    def test_partial_block_reported(self):
        lay = GroupLayout(14, 2, 2, "aligned", t=3)
        steps = detect_k_steps(np.zeros(14, dtype=int), lay)
        assert steps.blocks == 2 and steps.ignored_bins == 2

    @pytest.mark.parametrize("g", [1, 2, 4])
    def test_planted_round_trip(self, g):
        t = 6
        for k in range(t + 1):
            block = np.repeat(np.maximum(0, k - np.arange(t)), g)
            other = np.repeat(np.maximum(0, (k + 1) % (t + 1) - np.arange(t)), g)
            noise = block.copy()
            noise[-1] += 1
            loads = np.concatenate([block, other, noise])
            got = classify_blocks(loads, g, t).tolist()
            assert got == [k, (k + 1) % (t + 1), -1]
            lay = GroupLayout(len(loads), g, 2, "aligned", t=t)
            assert detect_k_steps(loads, lay)[k] == 1 + (k == (k + 1) % (t + 1))

    def test_height_limited_by_block(self):
        assert classify_blocks(np.array([3, 2, 1]), 1, 3).tolist() == [3]
        assert classify_blocks(np.array([4, 3, 2]), 1, 3).tolist() == [-1]

    def test_csv(self, tmp_path):
        lay = GroupLayout(9, 1, 2, "aligned", t=3)
        steps = detect_k_steps(np.array([1, 0, 0, 5, 0, 0, 2, 1, 0]), lay)
        write_steps_csv(steps, tmp_path / "s.csv")
        rows = list(csv.reader(open(tmp_path / "s.csv")))
        assert rows == [["block_index", "k"], ["0", "1"], ["2", "2"]]


class TestQr:
    def test_q0_is_one(self):
        lay = GroupLayout(1 << 10, 2, 2, "unaligned", t=8)
        trace = round_trace(lay, 0, 1)
        assert len(trace) == 1
        assert estimate_q_r(trace, lay, 0) == 1.0

    def test_planted_fraction(self):
        g, t, r = 2, 4, 2
        lay = GroupLayout(10 * t * g, g, 2, "unaligned", t=t)
        step = np.repeat(np.maximum(0, r - np.arange(t)), g)
        blocks = [step if i in (1, 4, 7) else np.ones(t * g, dtype=int) for i in range(10)]
        trace = [np.zeros(lay.n, dtype=int), np.zeros(lay.n, dtype=int), np.concatenate(blocks)]
        assert estimate_q_r(trace, lay, 2) == pytest.approx(0.3)

    def test_r_beyond_trace(self):
        lay = GroupLayout(64, 2, 2, "unaligned", t=4)
        with pytest.raises(InvalidParameter):
            estimate_q_r([np.zeros(64)], lay, 1)

    def test_trace_rounds(self):
        lay = GroupLayout(256, 2, 2, "unaligned", t=4)
        trace = round_trace(lay, 3, 5)
        assert [int(x.sum()) for x in trace] == [0, 64, 128, 192]
        final = run_grouped(lay, 192, 5).loads
        assert np.array_equal(trace[-1], final)

    def test_regression(self, oracles):
        q = oracles["q_r"]
        lay = GroupLayout(q["n"], q["g"], 2, "unaligned")
        assert lay.t == q["t"]
        trace = round_trace(lay, 2, q["seed"])
        assert estimate_q_r(trace, lay, 0) == q["q0"] == 1.0
        assert estimate_q_r(trace, lay, 1) == q["q1"]


@settings(max_examples=25, deadline=None)
@given(mode=st.sampled_from(["aligned", "unaligned", "global-min"]), m=st.integers(0, 500),
       seed=st.integers(0, 2**32))
def test_every_insert_touches_one_bin(mode, m, seed):
    lay = GroupLayout(24, 3, 2, mode)
    prev = np.zeros(24, dtype=np.int64)
    state = run_grouped(lay, m, seed, record_history=True)
    state.check()
    for rec in state.history:
        prev[rec.placed] += 1
        assert prev[rec.placed] == rec.height
    assert np.array_equal(prev, state.loads)


def test_per_ball_api_matches_bulk():
    lay = GroupLayout(40, 4, 3, "aligned")
    bulk = run_grouped(lay, 300, 17)
    d = _draw(lay, 300, make_rng(17), "left")
    s = AllocationState.empty(40)
    rng = np.random.default_rng(0)
    for i in range(300):
        insert_aligned(s, lay, rng, groups=d.groups[i])
    assert np.array_equal(s.loads, bulk.loads)
