"""Vietoris-Rips persistence diagrams in degrees 0 and 1 for small point clouds."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial.distance import pdist, squareform
from sklearn.base import BaseEstimator, TransformerMixin

from . import _rips_kernels as kern
from .measures import PersistenceMeasure


def check_point_cloud(X) -> np.ndarray:
    """Validate a point cloud and return it as a float array of shape ``(n, d)``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ValueError(f"a point cloud must be a 2-d array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("point cloud contains non-finite coordinates")
    return X


def read_point_cloud(path) -> np.ndarray:
    """One point per row, comma separated; a non-numeric first row is treated as a header."""
    with open(path) as fh:
        first = fh.readline()
    try:
        [float(x) for x in first.strip().split(",")]
        skip = 0
    except ValueError:
        skip = 1
    X = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    return check_point_cloud(X)


def write_point_cloud(X, path) -> None:
    X = check_point_cloud(X)
    header = ",".join(f"x{i}" for i in range(X.shape[1]))
    np.savetxt(path, X, delimiter=",", header=header, comments="", fmt="%.17g")


@dataclass
class FilteredComplex:
    """Simplices of dimension <= 2 tagged with their entry value.

    ``simplices`` is sorted by ``(value, dimension, vertices)``, which is the
    total order used for every persistence pairing in this package.
    """

    simplices: list = field(default_factory=list)
    n_vertices: int = 0

    def __len__(self) -> int:
        return len(self.simplices)

    def by_dimension(self, dim: int) -> list:
        return [s for s in self.simplices if len(s[0]) == dim + 1]


def _default_t_max(D: np.ndarray) -> float:
    # the largest pairwise distance fills the full simplex, so no finite bar is cut off
    return float(D.max()) if D.size else 0.0


def rips_complex(cloud, t_max: Optional[float] = None) -> FilteredComplex:
    """Explicit Rips complex up to triangles; intended for small clouds."""
    X = check_point_cloud(cloud)
    n = X.shape[0]
    D = squareform(pdist(X)) if n > 1 else np.zeros((n, n))
    if t_max is None:
        t_max = _default_t_max(D)
    if t_max <= 0 and n > 1:
        t_max = 0.0
    simplices = [((i,), 0.0) for i in range(n)]
    for i, j in itertools.combinations(range(n), 2):
        if D[i, j] <= t_max:
            simplices.append(((i, j), float(D[i, j])))
    for i, j, k in itertools.combinations(range(n), 3):
        diam = max(D[i, j], D[i, k], D[j, k])
        if diam <= t_max:
            simplices.append(((i, j, k), float(diam)))
    simplices.sort(key=lambda s: (s[1], len(s[0]), s[0]))
    return FilteredComplex(simplices, n)


def reduce_boundary(complex_: FilteredComplex) -> list[tuple[int, int]]:
    """Standard column reduction of the GF(2) boundary matrix.

    Returns ``(birth_index, death_index)`` pairs of positions in
    ``complex_.simplices``.
    """
    index = {s[0]: i for i, s in enumerate(complex_.simplices)}
    pivot_owner: dict[int, int] = {}
    reduced: dict[int, set] = {}
    pairs = []
    for col, (verts, _) in enumerate(complex_.simplices):
        if len(verts) == 1:
            continue
        column = {index[face] for face in itertools.combinations(verts, len(verts) - 1)}
        while column:
            low = max(column)
            owner = pivot_owner.get(low)
            if owner is None:
                break
            column ^= reduced[owner]
        if column:
            low = max(column)
            pivot_owner[low] = col
            reduced[col] = column
            pairs.append((low, col))
    return pairs


def persistence(complex_: FilteredComplex):
    """``(H0, H1)`` diagrams of a filtered complex.

    H0 comes from union-find over the edges, H1 from the boundary reduction.
    Zero-length bars and bars still alive at the end of the filtration are
    dropped.
    """
    simplices = complex_.simplices
    edges = [(v, t) for v, t in simplices if len(v) == 2]
    parent = list(range(complex_.n_vertices))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    h0 = []
    for (a, b), t in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
            if t > 0:
                h0.append((0.0, t))

    h1 = []
    for low, col in reduce_boundary(complex_):
        if len(simplices[low][0]) != 2:
            continue
        birth, death = simplices[low][1], simplices[col][1]
        if death > birth:
            h1.append((birth, death))
    return _as_measure(h0), _as_measure(h1)


def _as_measure(bars) -> PersistenceMeasure:
    if not bars:
        return PersistenceMeasure()
    arr = np.asarray(bars, dtype=float)
    return PersistenceMeasure(arr[:, 0], arr[:, 1])


def rips_persistence(cloud, t_max: Optional[float] = None):
    """``(H0, H1)`` Rips diagrams of a point cloud without materialising triangles.

    H0 is computed by union-find; H1 by reducing edge coboundaries with
    clearing of the component-killing edges.  The pairing is the one
    :func:`persistence` finds on :func:`rips_complex` of the same cloud.
    """
    X = check_point_cloud(cloud)
    n = X.shape[0]
    if n < 2:
        return PersistenceMeasure(), PersistenceMeasure()
    D = squareform(pdist(X))
    if t_max is None:
        t_max = _default_t_max(D)
    iu, ju = np.triu_indices(n, 1)
    dist = D[iu, ju]
    keep = dist <= t_max
    iu, ju, dist = iu[keep], ju[keep], dist[keep]
    order = np.lexsort((ju, iu, dist))
    ei, ej, ed = iu[order].astype(np.int64), ju[order].astype(np.int64), dist[order]

    merges = kern.zero_dim_pairs(n, ei, ej)
    h0_deaths = ed[merges]
    h0_deaths = h0_deaths[h0_deaths > 0]
    h0 = PersistenceMeasure(np.zeros_like(h0_deaths), h0_deaths)

    e_idx, deaths = kern.one_dim_pairs_cohomology(D, ei, ej, merges, float(t_max))
    births = ed[e_idx]
    live = np.isfinite(deaths) & (deaths > births)
    h1 = PersistenceMeasure(births[live], deaths[live])
    return h0, h1


class VietorisRipsPersistence(TransformerMixin, BaseEstimator):
    """Turn point clouds into Rips persistence diagrams.

    Parameters
    ----------
    homology_dimension : {0, 1}, default=1
        Degree of the diagram returned by :meth:`transform`.
    t_max : float or None, default=None
        Filtration cut-off; ``None`` uses the largest pairwise distance of
        each cloud.

    Examples
    --------
    >>> import numpy as np
    >>> square = np.array([[0., 0.], [1., 0.], [1., 1.], [0., 1.]])
    >>> VietorisRipsPersistence().fit_transform([square])[0].to_array()
    array([[1.        , 1.41421356, 1.        ]])
    """

    def __init__(self, homology_dimension: int = 1, t_max: Optional[float] = None):
        self.homology_dimension = homology_dimension
        self.t_max = t_max

    def fit(self, X, y=None):
        if self.homology_dimension not in (0, 1):
            raise ValueError("homology_dimension must be 0 or 1")
        return self

    def transform(self, X) -> list[PersistenceMeasure]:
        return [rips_persistence(c, self.t_max)[self.homology_dimension] for c in X]
