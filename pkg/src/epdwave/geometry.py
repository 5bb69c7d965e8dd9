"""Support region, change of variables and the dyadic strip/cell partition.

Points of the persistence half-plane are handled in two coordinate systems:

* ``(t1, t2)``: birth and death, the coordinates diagrams are written in;
* ``(u, v)``: the rotated and rescaled frame in which the support region
  ``Omega_R`` becomes the unit square and the diagonal becomes ``v = 0``.

All partition logic works in ``(u, v)`` where dyadic arithmetic is exact.
Strip ``k`` is the band ``2**-(k+1) <= v < 2**-k`` and the cells of strip
``k`` at refinement depth ``j`` are dyadic squares of unit side
``2**-(k+1+j)``.  Intervals are half-open ``[lo, hi)`` except on the outer
edges ``u = 1`` and ``v = 1``, which are closed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

SQRT2 = math.sqrt(2.0)

# slack for points that land on the boundary of Omega_R up to round-off
BOUNDARY_EPS = 1e-12


@dataclass(frozen=True)
class DomainGeometry:
    """The square ``Omega_R`` of half-diagonal ``R / sqrt(2)`` touching the diagonal.

    ``Omega_R = {|t1 + R/sqrt(8)| + |t2 - R/sqrt(8)| <= R/sqrt(2)}``.
    """

    R: float

    def __post_init__(self):
        if not (np.isfinite(self.R) and self.R > 0):
            raise ValueError(f"R must be a positive finite number, got {self.R!r}")

    def to_unit_square(self, t1, t2):
        return to_unit_square(t1, t2, self)

    def from_unit_square(self, u, v):
        return from_unit_square(u, v, self)

    def contains(self, t1, t2, eps: float = BOUNDARY_EPS):
        """Boolean mask of points inside ``Omega_R`` and strictly above the diagonal."""
        u, v = to_unit_square(t1, t2, self)
        return (u >= -eps) & (u <= 1 + eps) & (v > 0) & (v <= 1 + eps)

    @classmethod
    def fit(cls, t1, t2) -> "DomainGeometry":
        """Smallest power-of-two ``R`` whose region holds every given point."""
        t1 = np.asarray(t1, dtype=float)
        t2 = np.asarray(t2, dtype=float)
        if t1.size == 0:
            return cls(1.0)
        # u in [0, 1] needs |t1 + t2| <= R / sqrt(2); v <= 1 needs t2 - t1 <= sqrt(2) R
        need = max(SQRT2 * float(np.max(np.abs(t1 + t2))), float(np.max(t2 - t1)) / SQRT2)
        if need <= 0:
            return cls(1.0)
        return cls(float(2.0 ** math.ceil(math.log2(need))))


def to_unit_square(t1, t2, geom: DomainGeometry):
    """Map ``(t1, t2)`` to ``(u, v)``; ``Omega_R`` goes onto ``[0, 1]**2``."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    scale = SQRT2 * geom.R
    return (t1 + t2) / scale + 0.5, (t2 - t1) / scale


def from_unit_square(u, v, geom: DomainGeometry):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    scale = geom.R / SQRT2
    s = (u - 0.5) * scale
    d = v * scale
    return s - d, s + d


def diagonal_distance(t1, t2, q: float = 2.0):
    """``||x - x_perp||_q`` for ``x = (t1, t2)`` with ``x_perp`` its diagonal projection.

    The offset is ``((t1 - t2)/2, (t2 - t1)/2)`` so the norm is
    ``(t2 - t1) / 2 * 2**(1/q)``.
    """
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    if np.any(t2 < t1):
        raise ValueError("diagonal_distance requires t2 >= t1")
    half = (t2 - t1) / 2.0
    if math.isinf(q):
        return half
    if q < 1:
        raise ValueError(f"norm order must be >= 1, got {q}")
    return half * 2.0 ** (1.0 / q)


def _strip_from_v(v):
    v = np.asarray(v, dtype=float)
    _, e = np.frexp(v)  # v in [2**(e-1), 2**e)
    k = -e.astype(np.int64)
    return np.where(v >= 1.0, 0, k)


def strip_index(t1, t2, geom: DomainGeometry) -> Optional[int]:
    """Index ``k`` of the strip ``2**-(k+1) <= v < 2**-k`` holding the point.

    Returns ``None`` for points on the diagonal.  Raises ``ValueError`` for
    points outside ``Omega_R``.
    """
    u, v = to_unit_square(t1, t2, geom)
    u, v = float(u), float(v)
    if v == 0.0:
        return None
    if not (-BOUNDARY_EPS <= u <= 1 + BOUNDARY_EPS and 0 < v <= 1 + BOUNDARY_EPS):
        raise ValueError(f"point ({float(t1)}, {float(t2)}) lies outside Omega_R (R={geom.R})")
    return int(_strip_from_v(min(v, 1.0)))


def strip_indices(u, v):
    """Vectorised strip lookup in unit coordinates; ``-1`` marks ``v <= 0``."""
    v = np.asarray(v, dtype=float)
    k = _strip_from_v(np.clip(v, np.finfo(float).tiny, 1.0))
    return np.where(v > 0, k, -1)


def dyadic_index(x, level: int):
    """Half-open dyadic bin of ``x`` in ``[0, 1]`` at ``level``; ``x = 1`` joins the last bin."""
    size = 1 << level
    idx = np.floor(np.asarray(x, dtype=float) * size).astype(np.int64)
    return np.clip(idx, 0, size - 1)


@dataclass(frozen=True, order=True)
class CellIndex:
    """Square of the multiscale partition.

    ``k`` is the strip, ``j`` the refinement depth inside the strip and
    ``(m, n)`` the position of the square on the dyadic grid of absolute
    level ``k + 1 + j`` in unit coordinates, i.e. the square is
    ``[m, m+1) x [n, n+1)`` scaled by ``2**-(k+1+j)``.
    """

    k: int
    j: int
    m: int
    n: int

    @property
    def level(self) -> int:
        return self.k + 1 + self.j

    @property
    def side(self) -> float:
        """Side length in unit coordinates."""
        return 2.0 ** -self.level

    def area(self, geom: DomainGeometry) -> float:
        """Lebesgue area in ``(t1, t2)`` coordinates."""
        return (geom.R * self.side) ** 2

    def bounds(self):
        s = self.side
        return self.m * s, (self.m + 1) * s, self.n * s, (self.n + 1) * s

    def center(self, geom: DomainGeometry):
        s = self.side
        t1, t2 = from_unit_square((self.m + 0.5) * s, (self.n + 0.5) * s, geom)
        return float(t1), float(t2)

    def parent(self) -> "CellIndex":
        if self.j == 0:
            raise ValueError("depth-0 cells have no parent inside their strip")
        return CellIndex(self.k, self.j - 1, self.m >> 1, self.n >> 1)

    def children(self) -> list["CellIndex"]:
        m, n = 2 * self.m, 2 * self.n
        return [CellIndex(self.k, self.j + 1, m + a, n + b) for b in (0, 1) for a in (0, 1)]

    def contains(self, other: "CellIndex") -> bool:
        if other.k != self.k or other.j < self.j:
            return False
        shift = other.j - self.j
        return (other.m >> shift) == self.m and (other.n >> shift) == self.n


def cell_of(t1, t2, level: tuple[int, int], geom: DomainGeometry) -> CellIndex:
    """The depth-``j`` cell of strip ``k`` containing the point."""
    k, j = level
    got = strip_index(t1, t2, geom)
    if got != k:
        raise ValueError(f"point lies in strip {got}, not in strip {k}")
    u, v = to_unit_square(t1, t2, geom)
    lev = k + 1 + j
    return CellIndex(k, j, int(dyadic_index(u, lev)), int(dyadic_index(v, lev)))


def iter_cells(k: int, j: int) -> Iterator[CellIndex]:
    lev = k + 1 + j
    for n in range(1 << j, 1 << (j + 1)):
        for m in range(1 << lev):
            yield CellIndex(k, j, m, n)


def cells_at_level(k: int, j: int, geom: Optional[DomainGeometry] = None) -> list[CellIndex]:
    """All ``2**(k+1+j) * 2**j`` cells of strip ``k`` at depth ``j``.

    ``geom`` is accepted for symmetry with the other lookups; the enumeration
    itself is scale free.
    """
    if k < 0 or j < 0:
        raise ValueError("strip index and depth must be nonnegative")
    return list(iter_cells(k, j))


def strip_area(k: int, geom: DomainGeometry) -> float:
    return geom.R ** 2 * 2.0 ** -(k + 1)
