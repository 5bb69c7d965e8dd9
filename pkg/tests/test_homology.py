import math

import numpy as np
import pytest
from scipy.sparse.csgraph import minimum_spanning_tree
from scipy.spatial.distance import pdist, squareform

from epdwave.homology import (
    VietorisRipsPersistence,
    persistence,
    read_point_cloud,
    rips_complex,
    rips_persistence,
    write_point_cloud,
)

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def sorted_bars(mu):
    return sorted(zip(mu.births.tolist(), mu.deaths.tolist(), mu.weights.tolist()))


def test_two_points_complex():
    c = rips_complex([[0, 0], [1, 0]], t_max=2)
    assert [len(s[0]) for s in c.simplices] == [1, 1, 2]
    assert c.simplices[-1][1] == 1.0


def test_equilateral_triangle_complex():
    pts = [[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]]
    c = rips_complex(pts, t_max=2)
    dims = [len(s[0]) - 1 for s in c.simplices]
    assert dims == [0, 0, 0, 1, 1, 1, 2]
    assert all(s[1] == pytest.approx(1.0, abs=1e-15) for s in c.simplices if len(s[0]) > 1)


def test_cutoff_below_all_distances():
    c = rips_complex([[0, 0], [1, 0], [0, 2]], t_max=0.5)
    assert all(len(s[0]) == 1 for s in c.simplices)


def test_filtration_monotone():
    rng = np.random.default_rng(0)
    c = rips_complex(rng.normal(size=(9, 3)))
    seen = {}
    for verts, t in c.simplices:
        for i in range(len(verts)):
            face = verts[:i] + verts[i + 1:]
            if face:
                assert face in seen and seen[face] <= t
        seen[verts] = t


def test_two_points_persistence():
    h0, h1 = persistence(rips_complex([[0, 0], [0, 2.5]]))
    assert sorted_bars(h0) == [(0.0, 2.5, 1.0)]
    assert len(h1) == 0


def test_unit_square_h1_exact():
    for h0, h1 in (persistence(rips_complex(SQUARE)), rips_persistence(SQUARE)):
        assert sorted_bars(h1) == [(1.0, math.sqrt(2), 1.0)]
        assert sorted_bars(h0) == [(0.0, 1.0, 3.0)]


def test_transformer_interface():
    vr = VietorisRipsPersistence()
    assert vr.get_params() == {"homology_dimension": 1, "t_max": None}
    out = vr.fit_transform([SQUARE, SQUARE + 3])
    assert len(out) == 2 and all(len(d) == 1 for d in out)
    h0 = VietorisRipsPersistence(homology_dimension=0).fit_transform([SQUARE])[0]
    assert h0.total_mass == 3
    with pytest.raises(ValueError):
        VietorisRipsPersistence(homology_dimension=2).fit([SQUARE])


@pytest.mark.parametrize("seed", range(10))
def test_h0_matches_mst(seed):
    X = np.random.default_rng(seed).uniform(size=(50, 3))
    h0, _ = rips_persistence(X)
    mst = minimum_spanning_tree(squareform(pdist(X))).data
    assert h0.total_mass == 49
    ours = np.repeat(h0.deaths, h0.weights.astype(int))
    assert np.allclose(np.sort(ours), np.sort(mst), rtol=0, atol=1e-12)
    assert np.all(h0.births == 0)


@pytest.mark.parametrize("seed", range(25))
@pytest.mark.parametrize("t_max", [None, 1.2])
def test_fast_path_matches_reduction(seed, t_max):
    X = np.random.default_rng(100 + seed).normal(size=(12, 3 if seed % 2 else 2))
    slow = persistence(rips_complex(X, t_max))
    fast = rips_persistence(X, t_max)
    for a, b in zip(slow, fast):
        assert sorted_bars(a) == sorted_bars(b)


def test_permutation_invariance():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(40, 3))
    perm = rng.permutation(40)
    for a, b in zip(rips_persistence(X), rips_persistence(X[perm])):
        assert np.allclose(a.to_array(), b.to_array(), atol=1e-12)


def test_h1_bars_are_proper():
    X = np.random.default_rng(8).normal(size=(60, 2))
    _, h1 = rips_persistence(X)
    assert np.all(h1.deaths > h1.births)
    assert len(h1) > 0


def test_circle_has_one_dominant_loop():
    a = np.linspace(0, 2 * np.pi, 30, endpoint=False)
    X = np.column_stack([np.cos(a), np.sin(a)])
    _, h1 = rips_persistence(X)
    pers = h1.deaths - h1.births
    assert pers.max() > 1.0
    assert np.sum(pers > 0.5) == 1


def test_point_cloud_io(tmp_path):
    X = np.random.default_rng(9).normal(size=(15, 3))
    write_point_cloud(X, tmp_path / "x.csv")
    assert np.array_equal(read_point_cloud(tmp_path / "x.csv"), X)
    (tmp_path / "y.csv").write_text("1,2\n3,4\n")
    assert read_point_cloud(tmp_path / "y.csv").shape == (2, 2)
    with pytest.raises(ValueError):
        rips_persistence([[0, np.nan]])


def test_tiny_clouds():
    h0, h1 = rips_persistence([[0.0, 0.0]])
    assert len(h0) == 0 and len(h1) == 0
    h0, _ = rips_persistence([[0.0, 0.0], [0.0, 0.0]])
    assert len(h0) == 0
