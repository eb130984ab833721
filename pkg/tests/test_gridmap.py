import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from basinstab.gridmap import (CSV_COLUMNS, EmptyBox, GridShapeMismatch, NoEligibleBoxes,
                               ProbabilityGrid, difference_map, max_abs_change)


def grid_with(counts, nx=2, ny=2, **meta):
    """counts: {(i, j): (crosswell, total)}"""
    g = ProbabilityGrid.empty((0.1, 1.0), (0.0, 2.5), nx, ny, **meta)
    for (i, j), (c, n) in counts.items():
        g.total_counts[i, j] = n
        g.crosswell_counts[i, j] = c
    return g


def test_probability_examples():
    g = grid_with({(0, 0): (100, 100), (0, 1): (50, 100), (1, 0): (0, 125)})
    assert g.probability(0, 0) == (1.0, 0.0)
    p, hw = g.probability(0, 1)
    assert p == 0.5
    assert hw == pytest.approx(1.96 * math.sqrt(0.25 / 100))
    assert hw == pytest.approx(0.098, abs=5e-4)
    assert g.probability(1, 0) == (0.0, 0.0)
    with pytest.raises(EmptyBox):
        g.probability(1, 1)
    assert np.isnan(g.probabilities()[1, 1])


def test_counts_invariant_enforced():
    with pytest.raises(ValueError):
        ProbabilityGrid([0, 1], [0, 1], [[5]], [[6]])
    with pytest.raises(ValueError):
        ProbabilityGrid([0, 1, 1], [0, 1])


def test_half_open_boxes():
    g = ProbabilityGrid.empty((0.0, 1.0), (0.0, 1.0), 4, 2)
    assert g.box_of(0.25, 0.5) == (1, 1)
    assert g.box_of(0.2499999, 0.4999999) == (0, 0)
    assert g.box_of(1.0, 1.0) == (3, 1)
    assert g.box_of(0.0, 0.0) == (0, 0)
    with pytest.raises(ValueError):
        g.box_of(1.0000001, 0.5)


def test_difference_of_grid_with_itself():
    g = grid_with({(0, 0): (30, 100), (1, 1): (7, 9)})
    d = difference_map(g, g)
    assert np.all(d.values[~d.missing] == 0.0)
    assert d.missing.tolist() == [[False, True], [True, False]]
    assert max_abs_change(g, g, min_samples=1) == 0.0


def test_probe_drop_example():
    ref = grid_with({(0, 0): (100, 100)})
    mis = grid_with({(0, 0): (70, 100)})
    d = difference_map(ref, mis)
    assert d.values[0, 0] == pytest.approx(-0.30)
    assert max_abs_change(ref, mis) == pytest.approx(0.30)


def test_shape_mismatch():
    with pytest.raises(GridShapeMismatch):
        difference_map(ProbabilityGrid.empty((0, 1), (0, 1), 2, 2),
                       ProbabilityGrid.empty((0, 1), (0, 1), 2, 3))
    with pytest.raises(GridShapeMismatch):
        ProbabilityGrid.empty((0, 1), (0, 1), 2, 2).merge(ProbabilityGrid.empty((0, 2), (0, 1), 2, 2))


def test_min_samples_guard():
    a = grid_with({(0, 0): (10, 50)})
    b = grid_with({(0, 0): (40, 50)})
    with pytest.raises(NoEligibleBoxes):
        max_abs_change(a, b)
    assert max_abs_change(a, b, min_samples=50) == pytest.approx(0.6)


count_grids = st.integers(0, 2 ** 31 - 1).map(
    lambda seed: _random_grid(np.random.default_rng(seed)))


def _random_grid(rng, nx=3, ny=4):
    total = rng.integers(0, 300, (nx, ny))
    cross = rng.binomial(total, rng.uniform(0, 1, (nx, ny)))
    und = rng.binomial(total - cross, 0.1)
    div = rng.binomial(total - cross - und, 0.05)
    return ProbabilityGrid(np.linspace(0.1, 1.0, nx + 1), np.linspace(0, 2.5, ny + 1),
                           total, cross, und, div)


@given(a=count_grids, b=count_grids)
def test_difference_antisymmetric_and_bounded(a, b):
    dab, dba = difference_map(a, b), difference_map(b, a)
    assert np.array_equal(dab.missing, dba.missing)
    ok = ~dab.missing
    assert np.array_equal(dab.values[ok], -dba.values[ok])
    assert np.all(np.abs(dab.values[ok]) <= 1.0)


@given(a=count_grids, b=count_grids)
def test_max_abs_change_symmetric(a, b):
    try:
        ab = max_abs_change(a, b)
    except NoEligibleBoxes:
        with pytest.raises(NoEligibleBoxes):
            max_abs_change(b, a)
        return
    assert ab == max_abs_change(b, a)


@given(a=count_grids, b=count_grids, c=count_grids)
def test_merge_additive_associative_commutative(a, b, c):
    ab = a.merge(b)
    assert np.array_equal(ab.total_counts, a.total_counts + b.total_counts)
    assert np.array_equal(ab.crosswell_counts, a.crosswell_counts + b.crosswell_counts)
    assert (a + b).counts_equal(b + a)
    assert ((a + b) + c).counts_equal(a + (b + c))


@given(g=count_grids)
def test_standard_error_bound(g):
    hw = g.halfwidths()
    n = g.total_counts
    ok = n > 0
    assert np.all(hw[ok] <= 1.96 * 0.5 / np.sqrt(n[ok]) + 1e-15)


@given(g=count_grids)
def test_csv_and_json_round_trip(g):
    g.meta.update(seed=5, config_hash="abc123")
    back = ProbabilityGrid.from_csv(g.to_csv())
    assert back.counts_equal(g)
    assert back.meta["config_hash"] == "abc123"
    back = ProbabilityGrid.from_dict(json.loads(g.to_json()))
    assert back.counts_equal(g)
    assert back.meta == g.meta


def test_csv_columns_and_file_load(tmp_path):
    g = grid_with({(0, 0): (50, 100)}, seed=1)
    text = g.to_csv(tmp_path / "g.csv")
    header = [l for l in text.splitlines() if not l.startswith("#")][0]
    assert tuple(header.split(",")) == CSV_COLUMNS
    g.to_json(tmp_path / "g.json")
    assert ProbabilityGrid.load(tmp_path / "g.csv").counts_equal(g)
    assert ProbabilityGrid.load(tmp_path / "g.json").counts_equal(g)


def test_mean_probability_and_window():
    g = grid_with({(0, 0): (10, 10), (0, 1): (0, 10), (1, 0): (5, 10), (1, 1): (5, 10)})
    p, se = g.mean_probability()
    assert p == 0.5 and se == pytest.approx(math.sqrt(0.25 / 40))
    m = g.window_mask((0.1, 0.55), (0.0, 2.5))
    assert m.tolist() == [[True, True], [False, False]]
    assert g.mean_probability(m)[0] == 0.5
