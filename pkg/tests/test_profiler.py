import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rdtkit.devsim import ChipGeometry, RowDistribution, new_device
from rdtkit.profiler import (ABOVE_GRID, HammerGrid, NoFlipInGridError, ProfileSummary, bitflip_census_at,
                             coarse_min_scan, guardband_ratio, measure_row_rdt, rank_distribution, rank_matrix,
                             repeated_profile, rdt_percentile, summarize, weak_row_census)

from conftest import small_device


def fixed_device(base, cells=1, seed=0):
    """Zero-jitter device whose tested rows get the given base RDTs."""
    n = len(base)
    dev = new_device(ChipGeometry(rows_per_bank=n, bits_per_row=1024, tested_row_fraction=1),
                     RowDistribution(weak_rows_per_bank=0, max_cells_per_row=cells), seed=seed)
    dev.base_rdt = np.asarray(base, dtype=float)
    return dev


def test_grid_points_and_fine_grid():
    assert HammerGrid(1000, 25000, 1000).points.tolist()[:3] == [1000, 2000, 3000]
    assert HammerGrid(1000, 25000, 1000).points[-1] == 25000
    assert HammerGrid.fine(10000) == HammerGrid(5000, 20000, 333)
    assert HammerGrid.fine(20).step == 1
    with pytest.raises(ValueError):
        HammerGrid(10, 5, 1)
    with pytest.raises(ValueError):
        HammerGrid(1, 5, 0)


def test_coarse_scan_ceils_to_grid():
    dev = fixed_device([30000, 7150, 12000, 26000])
    assert coarse_min_scan(dev) == 8000


def test_coarse_scan_no_flip_in_grid():
    dev = fixed_device([25001, 30000])
    with pytest.raises(NoFlipInGridError):
        coarse_min_scan(dev)


@given(seed=st.integers(0, 200))
def test_coarse_scan_matches_brute_force_oracle(seed):
    dev = small_device(seed=seed, jitter=0.0)
    ep = dev.begin_episode()
    true_min = min(dev.oracle_true_rdt(b, r, ep) for b, r in dev.tested_rows)
    assert coarse_min_scan(dev, episode=ep) == math.ceil(true_min / 1000) * 1000


def test_measure_row_edges():
    dev = fixed_device([3000, 50000])
    ep = dev.begin_episode()
    grid = HammerGrid(4000, 8000, 250)
    value, flips = measure_row_rdt(dev, *dev.tested_rows[0], grid, ep)
    assert value == 4000 and len(flips) == 1
    assert measure_row_rdt(dev, *dev.tested_rows[1], grid, ep) == (ABOVE_GRID, frozenset())


@given(seed=st.integers(0, 10_000), rdt_min=st.integers(500, 12000), idx=st.integers(0, 63))
def test_measured_within_one_step_of_oracle(seed, rdt_min, idx):
    dev = small_device(seed=seed % 40, jitter=0.12)
    for _ in range(seed % 3):
        dev.begin_episode()
    ep = dev.begin_episode()
    grid = HammerGrid.fine(rdt_min)
    bank, row = dev.tested_rows[idx]
    oracle = dev.oracle_true_rdt(bank, row, ep)
    value, _ = measure_row_rdt(dev, bank, row, grid, ep)
    if oracle <= grid.start:
        assert value == grid.start
    elif oracle > grid.points[-1]:
        assert value == ABOVE_GRID
    else:
        assert oracle <= value < oracle + grid.step
        assert value in grid.points


def test_single_iteration_matrix():
    dev = small_device()
    dev.begin_episode()
    m = repeated_profile(dev, coarse_min_scan(dev), iterations=1)
    assert m.values.shape == (dev.n_tested, 1)
    rdt_percentile(m.values[:, 0])


def test_zero_jitter_columns_identical_and_ratio_one():
    dev = small_device(jitter=0.0)
    dev.begin_episode()
    m = repeated_profile(dev, coarse_min_scan(dev), iterations=20)
    assert (m.values == m.values[:, :1]).all()
    assert guardband_ratio(m) == 1.0
    ranks = rank_matrix(m)
    assert (ranks == ranks[:, :1]).all()


def test_values_are_grid_points_or_sentinel():
    dev = small_device(jitter=0.12)
    dev.begin_episode()
    m = repeated_profile(dev, coarse_min_scan(dev), iterations=30)
    allowed = set(m.grid.points.tolist()) | {ABOVE_GRID}
    assert set(np.unique(m.values).tolist()) <= allowed
    assert guardband_ratio(m) < 1.0


def test_census_single_weak_cell():
    dev = fixed_device([3000] + [40000] * 15, cells=1)
    dev.begin_episode()
    m = repeated_profile(dev, coarse_min_scan(dev), iterations=5)
    c = weak_row_census(m)
    assert (c.unique_locations, c.max_flips_in_iteration, c.unique_rows) == (1, 1, 1)


def _recount(dev, m, first_episode):
    """Independent ΔL/N: replay each (row, iteration) on the device at hc <= max RDT_min."""
    vals = np.where(m.values == ABOVE_GRID, np.inf, m.values)
    hc = vals.min(axis=0).max()
    union, per_iter = set(), []
    for t in range(m.iterations):
        got = set()
        for i in range(len(m.rows)):
            if vals[i, t] <= hc:
                got |= dev.hammer(*dev.tested_rows[i], int(vals[i, t]), first_episode + t)
        union |= got
        per_iter.append(len(got))
    return len(union), max(per_iter)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_census_matches_brute_force_recount(seed):
    dev = small_device(seed=seed, jitter=0.12)
    dev.begin_episode()
    rdt_min = coarse_min_scan(dev)
    m = repeated_profile(dev, rdt_min, iterations=60)
    c = weak_row_census(m)
    assert (c.unique_locations, c.max_flips_in_iteration) == _recount(dev, m, 1)
    assert 1 <= c.max_flips_in_iteration <= c.unique_locations <= c.unique_rows * dev.spec.distribution.max_cells_per_row


def test_rank_vectors_are_permutations():
    dev = small_device()
    dev.begin_episode()
    m = repeated_profile(dev, coarse_min_scan(dev), iterations=15)
    ranks = rank_matrix(m)
    n = len(m.rows)
    for t in range(m.iterations):
        assert sorted(ranks[:, t]) == list(range(1, n + 1))


def test_rank_ties_broken_by_row_id():
    dev = fixed_device([5000, 5000, 5000, 9000])
    dev.begin_episode()
    m = repeated_profile(dev, coarse_min_scan(dev), iterations=1)
    order = np.argsort(m.rows)
    assert rank_matrix(m)[order[:3], 0].tolist() == [1, 2, 3]


def test_rank_churn_on_calibrated_device():
    dev = new_device(ChipGeometry(), RowDistribution(jitter_half_width=0.12), seed=0)
    dev.begin_episode()
    m = repeated_profile(dev, coarse_min_scan(dev), iterations=100)
    dist = rank_distribution(m)
    assert dist and any(max(h) - min(h) > 1 for h in dist.values())
    assert all(sum(h.values()) == 100 for h in dist.values())


def test_census_zero_hammer_is_all_zero():
    dev = small_device()
    c = bitflip_census_at(dev, 1, repetitions=10)
    assert not c.flips_per_repetition.any() and not c.cumulative_unique.any()
    with pytest.raises(ValueError):
        bitflip_census_at(dev, 0, repetitions=1)


def test_census_curves_consistent_with_union():
    dev = small_device(jitter=0.12)
    dev.begin_episode()
    hc = coarse_min_scan(dev) + 2000
    start = dev.episode + 1
    c = bitflip_census_at(dev, hc, repetitions=100)
    assert (np.diff(c.cumulative_unique) >= 0).all()
    np.testing.assert_array_equal(c.new_unique, np.diff(c.cumulative_unique, prepend=0))
    union = set()
    for k in range(100):
        for b, r in dev.tested_rows:
            union |= dev.hammer(b, r, hc, start + k)
    assert c.cumulative_unique[-1] == len(union) and c.locations == union


def test_census_new_unique_trends_down_on_calibrated_device():
    dev = new_device(ChipGeometry(), RowDistribution(jitter_half_width=0.12), seed=0)
    dev.begin_episode()
    c = bitflip_census_at(dev, coarse_min_scan(dev, episode=0) * 2, repetitions=1000)
    assert c.new_unique[-100:].mean() <= c.new_unique[:100].mean()
    assert c.first_coverage < 1.0


def test_percentile_hand_example():
    assert rdt_percentile(np.arange(1, 11), 0.10) == 2


@given(v=st.integers(1, 30000), n=st.integers(1, 50), q=st.floats(0.01, 0.99))
def test_percentile_all_equal(v, n, q):
    assert rdt_percentile(np.full(n, v), q) == v


@given(values=st.lists(st.one_of(st.integers(1, 500), st.just(ABOVE_GRID)), min_size=1, max_size=60),
       q=st.sampled_from([0.05, 0.10, 0.25, 0.5, 0.9]))
def test_percentile_matches_sort_oracle(values, q):
    n = len(values)
    finite = sorted({v for v in values if v != ABOVE_GRID})
    as_inf = [math.inf if v == ABOVE_GRID else v for v in values]
    ok = [v for v in finite if sum(x >= v for x in as_inf) >= (1 - q) * n - 1e-9]
    if not ok:
        with pytest.raises(ValueError):
            rdt_percentile(values, q)
        return
    assert rdt_percentile(values, q) == max(ok)


@pytest.mark.parametrize("q", [0.0, 1.0, -0.5, 2])
def test_percentile_q_range(q):
    with pytest.raises(ValueError):
        rdt_percentile([1, 2, 3], q)


def test_summary_round_trip_and_invariants():
    dev = small_device(jitter=0.12)
    dev.begin_episode()
    m = repeated_profile(dev, coarse_min_scan(dev), iterations=40)
    s = summarize(m)
    assert s.guardband_ratio == min(s.rdt_min_per_iteration) / max(s.rdt_min_per_iteration)
    ref = np.where(m.values[:, 0] == ABOVE_GRID, np.inf, m.values[:, 0])
    assert np.mean(ref >= s.rdt_p10) >= 0.9
    assert ProfileSummary.from_dict(s.to_dict()) == s
    d = s.to_dict()
    del d["rdt_p10"]
    with pytest.raises(ValueError):
        ProfileSummary.from_dict(d)
