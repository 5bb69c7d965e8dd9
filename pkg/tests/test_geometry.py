import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epdwave.geometry import (
    CellIndex,
    DomainGeometry,
    cell_of,
    cells_at_level,
    diagonal_distance,
    dyadic_index,
    from_unit_square,
    strip_area,
    strip_index,
    strip_indices,
    to_unit_square,
)

G1 = DomainGeometry(1.0)


def test_rejects_bad_radius():
    for R in (0.0, -1.0, math.inf, math.nan):
        with pytest.raises(ValueError):
            DomainGeometry(R)


def test_centre_maps_to_middle():
    u, v = to_unit_square(-1 / math.sqrt(8), 1 / math.sqrt(8), G1)
    assert u == pytest.approx(0.5, abs=1e-15) and v == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("R", [0.5, 1.0, 3.0])
def test_diagonal_maps_to_v_zero(R):
    _, v = to_unit_square(0.0, 0.0, DomainGeometry(R))
    assert v == 0.0


def test_corner_of_region():
    u, v = to_unit_square(-1 / math.sqrt(8) + 1 / math.sqrt(2), 1 / math.sqrt(8), G1)
    assert u == pytest.approx(1.0, abs=1e-15) and v == pytest.approx(0.0, abs=1e-15)


def test_round_trip_many_points():
    rng = np.random.default_rng(0)
    g = DomainGeometry(2.5)
    t1, t2 = rng.normal(size=(2, 100_000)) * 3
    b, d = from_unit_square(*to_unit_square(t1, t2, g), g)
    scale = np.maximum(1.0, np.maximum(np.abs(t1), np.abs(t2)))
    assert np.max(np.abs(b - t1) / scale) < 1e-12
    assert np.max(np.abs(d - t2) / scale) < 1e-12


def test_diagonal_distance_examples():
    assert diagonal_distance(0.0, 1.0, 2) == pytest.approx(1 / math.sqrt(2), abs=1e-15)
    assert diagonal_distance(0.0, 1.0, math.inf) == 0.5
    assert diagonal_distance(0.3, 0.3, 1) == 0.0
    with pytest.raises(ValueError):
        diagonal_distance(1.0, 0.0)


def test_diagonal_distance_is_R_times_v():
    rng = np.random.default_rng(1)
    g = DomainGeometry(4.0)
    u, v = rng.uniform(size=(2, 1000))
    t1, t2 = from_unit_square(u, v, g)
    assert np.max(np.abs(diagonal_distance(t1, t2, 2) - g.R * v)) < 1e-12


def _point(u, v, g=G1):
    t1, t2 = from_unit_square(u, v, g)
    return float(t1), float(t2)


@pytest.mark.parametrize("v,k", [(0.3, 1), (1.0, 0), (1.5 * 2.0 ** -5, 4), (0.75, 0)])
def test_strip_index_examples(v, k):
    assert strip_index(*_point(0.5, v), G1) == k


def test_strip_index_diagonal_and_outside():
    assert strip_index(0.2, 0.2, G1) is None
    with pytest.raises(ValueError):
        strip_index(*_point(0.5, 1.5), G1)
    with pytest.raises(ValueError):
        strip_index(*_point(1.2, 0.5), G1)


def test_strips_partition_random_points():
    rng = np.random.default_rng(2)
    v = rng.uniform(1e-9, 1, 20_000)
    k = strip_indices(rng.uniform(size=v.size), v)
    lo, hi = 2.0 ** -(k + 1), 2.0 ** -k
    assert np.all((lo <= v) & ((v < hi) | ((v == 1.0) & (k == 0))))


def test_cells_at_level_counts():
    assert len(cells_at_level(0, 0)) == 2
    assert len(cells_at_level(0, 1)) == 8
    assert len(cells_at_level(1, 0)) == 4
    with pytest.raises(ValueError):
        cells_at_level(-1, 0)


@pytest.mark.parametrize("k,j", [(0, 0), (0, 2), (2, 1), (3, 3)])
def test_cell_areas_sum_to_strip(k, j):
    g = DomainGeometry(1.7)
    total = sum(c.area(g) for c in cells_at_level(k, j, g))
    assert total == pytest.approx(strip_area(k, g), rel=1e-12)


def test_cell_of_centre_of_strip_zero():
    cell = cell_of(*_point(0.5, 0.75), (0, 0), G1)
    assert cell == CellIndex(0, 0, 1, 1)
    lo_u, hi_u, lo_v, hi_v = cell.bounds()
    assert lo_u <= 0.5 < hi_u and lo_v <= 0.75 < hi_v


def test_cell_of_wrong_strip():
    with pytest.raises(ValueError):
        cell_of(*_point(0.5, 0.3), (0, 0), G1)


def test_grid_points_land_in_one_cell_per_level():
    k, j = 1, 2
    us = (np.arange(100) + 0.5) / 100
    vs = 2.0 ** -(k + 1) + (np.arange(100) + 0.5) / 100 * 2.0 ** -(k + 1)
    cells = set(cells_at_level(k, j))
    hits = {}
    for u in us:
        for v in vs:
            c = cell_of(*_point(u, v), (k, j), G1)
            assert c in cells
            hits[c] = hits.get(c, 0) + 1
    assert sum(hits.values()) == 10_000
    assert set(hits) == cells


def test_half_open_edges():
    # boundaries are exact in unit coordinates: lower edges belong to the cell or strip
    assert strip_indices(0.5, 0.5) == 0
    assert strip_indices(0.5, 0.25) == 1
    assert strip_indices(0.5, 2.0 ** -7) == 6
    assert dyadic_index(0.5, 1) == 1
    assert dyadic_index(0.75, 2) == 3
    # the outer edges u = 1 and v = 1 are closed
    assert dyadic_index(1.0, 3) == 7
    assert strip_indices(0.0, 1.0) == 0
    c = cell_of(*_point(1.0, 1.0), (0, 0), G1)
    assert c == CellIndex(0, 0, 1, 1)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(1e-6, 1), st.integers(0, 5))
def test_cell_nesting(u, v, j):
    p = _point(u, v)
    k = strip_index(*p, G1)
    fine = cell_of(*p, (k, j + 1), G1)
    coarse = cell_of(*p, (k, j), G1)
    assert coarse.contains(fine)
    assert fine.parent() == coarse
    assert fine in coarse.children()


def test_fit_geometry_holds_all_points():
    rng = np.random.default_rng(3)
    b = rng.uniform(0, 2, 500)
    d = b + rng.uniform(0.01, 1, 500)
    g = DomainGeometry.fit(b, d)
    assert np.all(g.contains(b, d))
    assert math.log2(g.R) == int(math.log2(g.R))
    assert not np.all(DomainGeometry(g.R / 2).contains(b, d))
