"""Persistence diagrams as weighted atomic measures on the open half-plane."""

from __future__ import annotations

import csv
import json
import math
import os
import warnings
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .geometry import BOUNDARY_EPS, CellIndex, DomainGeometry, diagonal_distance, dyadic_index, strip_indices, to_unit_square


class DiagramFormatError(ValueError):
    """A diagram file row could not be parsed or describes an invalid bar."""


class InfiniteBarWarning(UserWarning):
    pass


class PersistenceMeasure:
    """Finite positive combination of Dirac masses above the diagonal.

    A persistence diagram is the case where every weight is a positive integer.
    Atoms sharing coordinates are merged on construction, so two measures are
    equal exactly when their sorted ``(birth, death, weight)`` tables are.

    Parameters
    ----------
    births, deaths : array-like of shape (n_atoms,)
    weights : array-like of shape (n_atoms,), optional
        Defaults to one per atom.
    metadata : str, optional
        Free-form provenance note.
    """

    __slots__ = ("_births", "_deaths", "_weights", "metadata")

    def __init__(self, births=(), deaths=(), weights=None, metadata: Optional[str] = None):
        b = np.asarray(births, dtype=float).ravel()
        d = np.asarray(deaths, dtype=float).ravel()
        if b.shape != d.shape:
            raise ValueError("births and deaths must have the same length")
        w = np.ones_like(b) if weights is None else np.asarray(weights, dtype=float).ravel()
        if w.shape != b.shape:
            raise ValueError("weights must match the number of atoms")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(d)) and np.all(np.isfinite(w))):
            raise ValueError("atoms and weights must be finite")
        if np.any(d <= b):
            bad = int(np.flatnonzero(d <= b)[0])
            raise ValueError(f"atom {bad} = ({b[bad]}, {d[bad]}) is not above the diagonal")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if b.size:
            coords, inverse = np.unique(np.column_stack([b, d]), axis=0, return_inverse=True)
            w = np.bincount(inverse.ravel(), weights=w, minlength=len(coords))
            b, d = coords[:, 0].copy(), coords[:, 1].copy()
        for arr in (b, d, w):
            arr.setflags(write=False)
        self._births, self._deaths, self._weights = b, d, w
        self.metadata = metadata

    @classmethod
    def from_array(cls, arr, metadata: Optional[str] = None) -> "PersistenceMeasure":
        """Build from an ``(n, 2)`` or ``(n, 3)`` array of ``birth, death[, weight]``."""
        arr = np.asarray(arr, dtype=float)
        if arr.size == 0:
            return cls(metadata=metadata)
        if arr.ndim != 2 or arr.shape[1] not in (2, 3):
            raise ValueError("expected an array of shape (n, 2) or (n, 3)")
        w = arr[:, 2] if arr.shape[1] == 3 else None
        return cls(arr[:, 0], arr[:, 1], w, metadata=metadata)

    @property
    def births(self) -> np.ndarray:
        return self._births

    @property
    def deaths(self) -> np.ndarray:
        return self._deaths

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    def __len__(self) -> int:
        return self._births.size

    @property
    def total_mass(self) -> float:
        return float(self._weights.sum())

    def to_array(self) -> np.ndarray:
        return np.column_stack([self._births, self._deaths, self._weights])

    def scaled(self, c: float) -> "PersistenceMeasure":
        if c <= 0:
            raise ValueError("scale factor must be positive")
        return PersistenceMeasure(self._births, self._deaths, self._weights * c, self.metadata)

    def __add__(self, other: "PersistenceMeasure") -> "PersistenceMeasure":
        return PersistenceMeasure(
            np.concatenate([self._births, other._births]),
            np.concatenate([self._deaths, other._deaths]),
            np.concatenate([self._weights, other._weights]),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, PersistenceMeasure):
            return NotImplemented
        return (
            len(self) == len(other)
            and np.array_equal(self._births, other._births)
            and np.array_equal(self._deaths, other._deaths)
            and np.array_equal(self._weights, other._weights)
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"{type(self).__name__}(n_atoms={len(self)}, mass={self.total_mass:.6g})"

    def restrict(self, mask) -> "PersistenceMeasure":
        mask = np.asarray(mask, dtype=bool)
        return PersistenceMeasure(self._births[mask], self._deaths[mask], self._weights[mask], self.metadata)

    def unit_coordinates(self, geom: DomainGeometry):
        return to_unit_square(self._births, self._deaths, geom)


class EmpiricalMean(PersistenceMeasure):
    """Average ``(1/N) sum_i mu_i`` of ``N`` observed measures."""

    __slots__ = ("n_samples",)

    def __init__(self, births=(), deaths=(), weights=None, n_samples: int = 1, metadata=None):
        super().__init__(births, deaths, weights, metadata)
        self.n_samples = int(n_samples)

    def __repr__(self) -> str:
        return f"EmpiricalMean(N={self.n_samples}, n_atoms={len(self)}, mass={self.total_mass:.6g})"


def total_persistence(mu: PersistenceMeasure, p: float = 1.0, q: float = 2.0) -> float:
    """``(sum w ||x - x_perp||_q**p)**(1/p)``, or the largest distance when ``p`` is infinite."""
    if len(mu) == 0:
        return 0.0
    dist = diagonal_distance(mu.births, mu.deaths, q)
    if math.isinf(p):
        return float(dist.max())
    if p < 1:
        raise ValueError("p must be >= 1")
    return float(np.sum(mu.weights * dist ** p) ** (1.0 / p))


def empirical_mean(diagrams: Sequence[PersistenceMeasure]) -> EmpiricalMean:
    diagrams = list(diagrams)
    if not diagrams:
        raise ValueError("empirical_mean needs at least one measure")
    N = len(diagrams)
    b = np.concatenate([d.births for d in diagrams])
    t = np.concatenate([d.deaths for d in diagrams])
    w = np.concatenate([d.weights for d in diagrams]) / N
    return EmpiricalMean(b, t, w, n_samples=N)


def cell_masses(mu: PersistenceMeasure, k: int, j: int, geom: DomainGeometry) -> dict[tuple[int, int], float]:
    """Mass of ``mu`` in every occupied depth-``j`` cell of strip ``k``, keyed by ``(m, n)``."""
    u, v = mu.unit_coordinates(geom)
    inside = (u >= -BOUNDARY_EPS) & (u <= 1 + BOUNDARY_EPS) & (v <= 1 + BOUNDARY_EPS) & (strip_indices(u, v) == k)
    lev = k + 1 + j
    m = dyadic_index(u[inside], lev)
    n = dyadic_index(v[inside], lev)
    out: dict[tuple[int, int], float] = {}
    for mm, nn, ww in zip(m.tolist(), n.tolist(), mu.weights[inside].tolist()):
        out[(mm, nn)] = out.get((mm, nn), 0.0) + ww
    return out


def mass_in_cell(mu: PersistenceMeasure, cell: CellIndex, geom: DomainGeometry) -> float:
    return cell_masses(mu, cell.k, cell.j, geom).get((cell.m, cell.n), 0.0)


def mass_in_strip(mu: PersistenceMeasure, k: int, geom: DomainGeometry) -> float:
    return float(sum(cell_masses(mu, k, 0, geom).values()))


# ---------------------------------------------------------------- file I/O

def _parse_row(fields, where: str):
    if len(fields) not in (2, 3):
        raise DiagramFormatError(f"{where}: expected 2 or 3 fields, got {len(fields)}")
    try:
        vals = [float(f) for f in fields]
    except (TypeError, ValueError):
        raise DiagramFormatError(f"{where}: non-numeric field in {list(fields)!r}") from None
    b, d = vals[0], vals[1]
    w = vals[2] if len(vals) == 3 else 1.0
    if not (math.isfinite(b) and math.isfinite(d)):
        return None
    if d <= b:
        raise DiagramFormatError(f"{where}: death {d} is not greater than birth {b}")
    if not (math.isfinite(w) and w > 0):
        raise DiagramFormatError(f"{where}: weight {w} must be positive")
    return b, d, w


def _finish(rows, dropped: int, source: str) -> PersistenceMeasure:
    if dropped:
        warnings.warn(f"{source}: dropped {dropped} bar(s) of infinite persistence", InfiniteBarWarning, stacklevel=3)
    arr = np.array(rows, dtype=float).reshape(-1, 3)
    mu = PersistenceMeasure.from_array(arr, metadata=source)
    return mu


def read_diagram(path, return_dropped: bool = False):
    """Read one diagram from CSV (``birth,death[,weight]``) or JSON (``[[b, d, w], ...]``).

    Bars with a non-finite endpoint are skipped with an :class:`InfiniteBarWarning`.
    With ``return_dropped`` the number of skipped bars is returned as well.
    """
    path = Path(path)
    rows, dropped = [], 0
    if path.suffix.lower() == ".json":
        with open(path) as fh:
            data = json.load(fh, parse_constant=lambda c: float(c))
        if not isinstance(data, list):
            raise DiagramFormatError(f"{path}: expected a JSON array of [birth, death, weight] rows")
        for i, row in enumerate(data):
            if not isinstance(row, (list, tuple)):
                raise DiagramFormatError(f"{path}: row {i}: expected an array")
            fields = ["inf" if f is None else f for f in row]
            parsed = _parse_row(fields, f"{path}: row {i}")
            if parsed is None:
                dropped += 1
            else:
                rows.append(parsed)
    else:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            for lineno, fields in enumerate(reader, start=1):
                fields = [f.strip() for f in fields]
                if not fields or all(f == "" for f in fields):
                    continue
                if lineno == 1 and fields[0].lower() == "birth":
                    continue
                where = f"{path}: row {lineno}"
                parsed = _parse_row(fields, where)
                if parsed is None:
                    dropped += 1
                else:
                    rows.append(parsed)
    mu = _finish(rows, dropped, str(path))
    return (mu, dropped) if return_dropped else mu


def write_diagram(mu: PersistenceMeasure, path) -> None:
    path = Path(path)
    arr = mu.to_array()
    if path.suffix.lower() == ".json":
        with open(path, "w") as fh:
            json.dump([[float(x) for x in row] for row in arr], fh)
        return
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["birth", "death", "weight"])
        for b, d, w in arr:
            writer.writerow([repr(float(b)), repr(float(d)), repr(float(w))])


def read_diagrams(path) -> list[PersistenceMeasure]:
    """Read a single diagram file, or every ``*.csv`` / ``*.json`` file of a directory in name order."""
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in (".csv", ".json"))
        return [read_diagram(p) for p in files]
    return [read_diagram(path)]


def write_diagrams(diagrams: Iterable[PersistenceMeasure], directory, prefix: str = "diagram", fmt: str = "csv") -> list[Path]:
    directory = Path(directory)
    os.makedirs(directory, exist_ok=True)
    paths = []
    diagrams = list(diagrams)
    width = max(4, len(str(len(diagrams))))
    for i, mu in enumerate(diagrams):
        p = directory / f"{prefix}_{i:0{width}d}.{fmt}"
        write_diagram(mu, p)
        paths.append(p)
    return paths
