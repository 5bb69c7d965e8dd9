"""Haar wavelet density estimation of expected persistence diagrams.

The Haar system lives on the unit square of the ``(u, v)`` frame.  A basis
function is identified by its kind, its level ``j`` and the position
``(m, n)`` of its support square ``[m, m+1) x [n, n+1)`` scaled by ``2**-j``.
On that square the scaling function equals ``2**j / R`` and the three
details carry the sign patterns

* ``detail_a``: + on the left half in ``u``, - on the right half;
* ``detail_b``: + on the lower half in ``v``, - on the upper half;
* ``detail_c``: the product of the two.

On strip ``k`` the estimator keeps the level ``k + 1`` scaling coefficients
(the single row ``n = 1``) and every detail coefficient of levels
``k + 1 .. J + K``.  Strips beyond ``K`` are truncated to zero.

Internally coefficients are stored in mass units: a scaling coefficient
``alpha = 2**j / R * mass`` is kept as ``mass`` and a detail
``beta = 2**j / R * B`` as ``B``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .geometry import (
    BOUNDARY_EPS,
    CellIndex,
    DomainGeometry,
    dyadic_index,
    from_unit_square,
    strip_indices,
    to_unit_square,
)
from .measures import PersistenceMeasure

_ROUNDOFF = 1e-12
# square positions are packed as m << level | n into an int64
MAX_LEVEL = 31

KINDS = ("scaling", "detail_a", "detail_b", "detail_c")
_DETAILS = KINDS[1:]


class HaarIndex(NamedTuple):
    kind: str
    level: int
    m: int
    n: int


class UnrepresentedMassWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ThresholdRule:
    """Level-dependent hard threshold ``tau_j = scale * tau * 2**(j/p) * j / sqrt(N)``.

    ``scale`` absorbs the unobservable constants of the rate analysis.
    """

    tau: float
    p: float
    N: int
    scale: float = 1.0

    def __post_init__(self):
        if self.tau < 0 or self.scale < 0:
            raise ValueError("tau and scale must be nonnegative")
        if self.p <= 0 or self.N < 1:
            raise ValueError("p must be positive and N at least 1")

    def level_threshold(self, j):
        j = np.asarray(j, dtype=float)
        return self.scale * self.tau * 2.0 ** (j / self.p) * j / math.sqrt(self.N)


def auto_levels(n_samples: int) -> tuple[int, int]:
    """``K = J = ceil(log2 N)``, with ``J`` kept at least 1."""
    L = int(math.ceil(math.log2(n_samples))) if n_samples > 1 else 0
    return L, max(L, 1)


def check_diagrams(X) -> list[PersistenceMeasure]:
    """Accept a measure, a list of measures, or a list of ``(n, 2|3)`` arrays."""
    if isinstance(X, PersistenceMeasure):
        X = [X]
    out = []
    for d in X:
        out.append(d if isinstance(d, PersistenceMeasure) else PersistenceMeasure.from_array(d))
    if not out:
        raise ValueError("at least one diagram is required")
    return out


def _code(m, n, level):
    return (np.asarray(m, dtype=np.int64) << level) | np.asarray(n, dtype=np.int64)


def _decode(code, level):
    code = np.asarray(code, dtype=np.int64)
    return code >> level, code & ((1 << level) - 1)


def _lookup(sorted_codes, codes):
    """Positions of ``codes`` in ``sorted_codes`` and a mask of hits."""
    codes = np.asarray(codes, dtype=np.int64)
    if sorted_codes.size == 0:
        return np.zeros(codes.shape, dtype=np.int64), np.zeros(codes.shape, dtype=bool)
    pos = np.searchsorted(sorted_codes, codes)
    pos = np.minimum(pos, sorted_codes.size - 1)
    return pos, sorted_codes[pos] == codes


def _sum_by_code(codes, values):
    uniq, inv = np.unique(codes, return_inverse=True)
    inv = inv.ravel()
    if values.ndim == 1:
        return uniq, np.bincount(inv, weights=values, minlength=uniq.size)
    return uniq, np.column_stack([np.bincount(inv, weights=values[:, c], minlength=uniq.size) for c in range(values.shape[1])])


# ------------------------------------------------------------------ analysis

def haar_analysis(u, v, w, finest_level: int):
    """Bottom-up Haar transform of point masses binned at ``finest_level``.

    Returns ``(roots, details)``: ``roots[L] = (codes, mass)`` for the strip
    roots living at level ``L`` (row ``n = 1``) and ``details[L] = (codes,
    B)`` with ``B`` of shape ``(n, 3)`` holding the a/b/c mass contrasts.
    """
    Lf = finest_level
    roots: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    details: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    if np.asarray(w).size == 0:
        return roots, details
    codes, mass = _sum_by_code(_code(dyadic_index(u, Lf), dyadic_index(v, Lf), Lf), np.asarray(w, dtype=float))
    for L in range(Lf, 0, -1):
        m, n = _decode(codes, L)
        is_root = n == 1
        if is_root.any():
            roots[L] = (codes[is_root], mass[is_root])
        keep = ~is_root
        if not keep.any():
            break
        m, n, cm = m[keep], n[keep], mass[keep]
        sa = 1.0 - 2.0 * (m & 1)
        sb = 1.0 - 2.0 * (n & 1)
        parent = _code(m >> 1, n >> 1, L - 1)
        vals = np.column_stack([cm, sa * cm, sb * cm, sa * sb * cm])
        codes, agg = _sum_by_code(parent, vals)
        mass = agg[:, 0]
        details[L - 1] = (codes, agg[:, 1:])
    return roots, details


# ----------------------------------------------------------------- synthesis

class HaarTree:
    """Cell masses of a piecewise-constant Haar expansion.

    ``nodes[L] = (codes, mass)`` lists every cell of the synthesis tree at
    level ``L`` with its integral; ``leaf[L]`` flags the cells on which the
    density is constant.
    """

    def __init__(self, roots, details, finest_level: int):
        self.finest_level = Lf = finest_level
        active: dict[int, np.ndarray] = {}
        below = np.empty(0, dtype=np.int64)
        for L in range(Lf, 0, -1):
            own = details[L][0] if L in details else np.empty(0, dtype=np.int64)
            active[L] = np.union1d(own, below)
            m, n = _decode(active[L], L)
            below = np.unique(_code(m >> 1, n >> 1, L - 1))

        self.nodes: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self.leaf: dict[int, np.ndarray] = {}
        carry_codes = np.empty(0, dtype=np.int64)
        carry_mass = np.empty(0)
        for L in range(1, Lf + 1):
            cc, cm = carry_codes, carry_mass
            if L in roots:
                cc = np.concatenate([cc, roots[L][0]])
                cm = np.concatenate([cm, roots[L][1]])
            if cc.size == 0:
                carry_codes, carry_mass = cc, cm
                continue
            order = np.argsort(cc)
            cc, cm = cc[order], cm[order]
            _, is_active = _lookup(active[L], cc)
            self.nodes[L] = (cc, cm)
            self.leaf[L] = ~is_active
            split = is_active
            if L == Lf or not split.any():
                carry_codes, carry_mass = np.empty(0, dtype=np.int64), np.empty(0)
                continue
            pc, pm = cc[split], cm[split]
            B = np.zeros((pc.size, 3))
            if L in details:
                pos, hit = _lookup(details[L][0], pc)
                B[hit] = details[L][1][pos[hit]]
            m, n = _decode(pc, L)
            kids_c, kids_m = [], []
            for a in (0, 1):
                for b in (0, 1):
                    sa, sb = 1 - 2 * a, 1 - 2 * b
                    kids_c.append(_code(2 * m + a, 2 * n + b, L + 1))
                    kids_m.append((pm + sa * B[:, 0] + sb * B[:, 1] + sa * sb * B[:, 2]) / 4.0)
            kc = np.concatenate(kids_c)
            km = np.concatenate(kids_m)
            _, kid_active = _lookup(active[L + 1], kc)
            keep = (km != 0) | kid_active
            carry_codes, carry_mass = kc[keep], km[keep]

    def leaves(self):
        """Yield ``(level, codes, mass)`` for the constant pieces with nonzero mass."""
        for L, (codes, mass) in self.nodes.items():
            sel = self.leaf[L] & (mass != 0)
            if sel.any():
                yield L, codes[sel], mass[sel]

    def cell_mass(self, level: int, m: int, n: int) -> float:
        code = int(_code(m, n, level))
        if level in self.nodes:
            pos, hit = _lookup(self.nodes[level][0], [code])
            if hit[0]:
                return float(self.nodes[level][1][pos[0]])
        for up in range(1, level):
            L = level - up
            if L not in self.nodes:
                continue
            pos, hit = _lookup(self.nodes[L][0], [int(_code(m >> up, n >> up, L))])
            if hit[0]:
                if self.leaf[L][pos[0]]:
                    return float(self.nodes[L][1][pos[0]]) / 4.0 ** up
                return 0.0
        return 0.0


# ------------------------------------------------------------------ estimator

class HaarDensityEstimator(BaseEstimator):
    """Haar wavelet estimator of the density of an expected persistence diagram.

    Parameters
    ----------
    K : int, "auto" or "data", default="auto"
        Last strip kept; ``"auto"`` uses ``ceil(log2 N)`` and ``"data"`` the
        deepest strip holding an observed atom (capped so that
        ``J + K + 1 <= 31``).
    J : int or "auto", default="auto"
        Depth of the detail levels, which run up to ``J + K``; ``"auto"`` uses
        ``max(1, ceil(log2 N))``.
    R : float, DomainGeometry or "auto", default="auto"
        Scale of the support region; ``"auto"`` picks the smallest power of two
        holding every observed atom.
    tau : float, default=0.0
        Hard threshold parameter; ``0`` gives the plain Haar estimator.
    p : float, default=2.0
        Transport exponent entering the threshold ``tau_j``.
    threshold_scale : float, default=1.0
        Constant prefactor of ``tau_j``.

    Attributes
    ----------
    geometry_ : DomainGeometry
    K_, J_ : int
    n_samples_ : int
    finest_level_ : int
        ``J_ + K_ + 1``; the density is constant on dyadic squares of this level.
    outside_mass_ : float
        Mean mass per diagram that fell outside ``Omega_R``.
    truncated_mass_ : float
        Mean mass per diagram in strips beyond ``K_``.
    n_outside_ : int
        Number of atoms outside ``Omega_R``.
    """

    def __init__(self, K="auto", J="auto", R="auto", tau: float = 0.0, p: float = 2.0, threshold_scale: float = 1.0):
        self.K = K
        self.J = J
        self.R = R
        self.tau = tau
        self.p = p
        self.threshold_scale = threshold_scale

    # -- fitting
    def _resolve(self, diagrams):
        N = len(diagrams)
        b = np.concatenate([d.births for d in diagrams])
        t = np.concatenate([d.deaths for d in diagrams])
        if isinstance(self.R, DomainGeometry):
            geom = self.R
        elif self.R == "auto":
            geom = DomainGeometry.fit(b, t)
        else:
            geom = DomainGeometry(float(self.R))
        autoK, autoJ = auto_levels(N)
        J = autoJ if self.J == "auto" else int(self.J)
        if self.K == "auto":
            K = autoK
        elif self.K == "data":
            # deepest strip holding an atom, as far as the level budget allows
            u, v = to_unit_square(b, t, geom)
            k = strip_indices(np.clip(u, 0, 1), np.clip(v, 0, 1))
            K = min(int(k.max()) if k.size else 0, MAX_LEVEL - 1 - J)
        else:
            K = int(self.K)
        if K < 0 or J < 1:
            raise ValueError(f"need K >= 0 and J >= 1, got K={K}, J={J}")
        if J + K + 1 > MAX_LEVEL:
            raise ValueError(f"J + K + 1 must not exceed {MAX_LEVEL}, got {J + K + 1}")
        return N, K, J, geom

    def fit(self, X, y=None):
        diagrams = check_diagrams(X)
        N, K, J, geom = self._resolve(diagrams)
        b = np.concatenate([d.births for d in diagrams])
        t = np.concatenate([d.deaths for d in diagrams])
        w = np.concatenate([d.weights for d in diagrams]) / N
        u, v = to_unit_square(b, t, geom)
        inside = (u >= -BOUNDARY_EPS) & (u <= 1 + BOUNDARY_EPS) & (v > 0) & (v <= 1 + BOUNDARY_EPS)
        k = strip_indices(u, v)
        kept = inside & (k <= K)
        self.n_outside_ = int((~inside).sum())
        self.outside_mass_ = float(w[~inside].sum())
        self.truncated_mass_ = float(w[inside & (k > K)].sum())
        if self.n_outside_:
            warnings.warn(
                f"{self.n_outside_} atom(s) lie outside Omega_R (R={geom.R}) and are ignored",
                UnrepresentedMassWarning,
                stacklevel=2,
            )
        self.geometry_, self.K_, self.J_, self.n_samples_ = geom, K, J, N
        self.finest_level_ = J + K + 1
        self.represented_mass_ = float(w[kept].sum())
        uu = np.clip(u[kept], 0.0, 1.0)
        vv = np.clip(v[kept], 0.0, 1.0)
        self.roots_, self.raw_details_ = haar_analysis(uu, vv, w[kept], self.finest_level_)
        self._apply_threshold(ThresholdRule(self.tau, self.p, N, self.threshold_scale))
        return self

    def _apply_threshold(self, rule: ThresholdRule):
        self.tau_ = float(rule.tau)
        kept = {}
        R = self.geometry_.R
        for L, (codes, B) in self.raw_details_.items():
            beta = B * (2.0 ** L / R)
            keep = np.abs(beta) > rule.level_threshold(L)
            Bk = np.where(keep, B, 0.0)
            rows = keep.any(axis=1)
            if rows.any():
                kept[L] = (codes[rows], Bk[rows])
        self.details_ = kept
        self.tree_ = HaarTree(self.roots_, self.details_, self.finest_level_)

    def threshold(self, tau: float, p: Optional[float] = None) -> "HaarDensityEstimator":
        """Copy of this fitted estimator with its detail coefficients hard thresholded.

        Thresholds always apply to the unthresholded coefficients, so
        ``est.threshold(5).threshold(0)`` recovers ``est``.
        """
        p = self.p if p is None else p
        return self._rethresholded(ThresholdRule(tau, p, self.n_samples_, self.threshold_scale))

    def _rethresholded(self, rule: ThresholdRule) -> "HaarDensityEstimator":
        check_is_fitted(self, "tree_")
        new = self.__class__(**{**self.get_params(), "tau": rule.tau, "p": rule.p, "threshold_scale": rule.scale})
        for attr in ("geometry_", "K_", "J_", "n_samples_", "finest_level_", "represented_mass_",
                     "n_outside_", "outside_mass_", "truncated_mass_", "roots_", "raw_details_"):
            setattr(new, attr, getattr(self, attr))
        new._apply_threshold(rule)
        return new

    # -- coefficients
    @property
    def n_nonzero_details_(self) -> int:
        check_is_fitted(self, "tree_")
        return int(sum(int(np.count_nonzero(B)) for _, B in self.details_.values()))

    def coefficients(self) -> dict[HaarIndex, float]:
        """Sparse map of every nonzero coefficient of the fitted expansion."""
        check_is_fitted(self, "tree_")
        R = self.geometry_.R
        out: dict[HaarIndex, float] = {}
        for L, (codes, mass) in sorted(self.roots_.items()):
            m, n = _decode(codes, L)
            for mm, nn, x in zip(m.tolist(), n.tolist(), mass.tolist()):
                if x != 0:
                    out[HaarIndex("scaling", L, mm, nn)] = 2.0 ** L / R * x
        for L, (codes, B) in sorted(self.details_.items()):
            m, n = _decode(codes, L)
            for i, (mm, nn) in enumerate(zip(m.tolist(), n.tolist())):
                for c, kind in enumerate(_DETAILS):
                    if B[i, c] != 0:
                        out[HaarIndex(kind, L, mm, nn)] = 2.0 ** L / R * float(B[i, c])
        return out

    coef_ = property(coefficients)

    # -- evaluation
    def density(self, X) -> np.ndarray:
        """Estimated density at the rows ``(t1, t2)`` of ``X``."""
        check_is_fitted(self, "tree_")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        u, v = to_unit_square(X[:, 0], X[:, 1], self.geometry_)
        out = np.zeros(len(X))
        inside = (u >= -BOUNDARY_EPS) & (u <= 1 + BOUNDARY_EPS) & (v > 0) & (v <= 1 + BOUNDARY_EPS)
        k = strip_indices(u, v)
        pending = inside & (k <= self.K_)
        uu, vv = np.clip(u, 0, 1), np.clip(v, 0, 1)
        R = self.geometry_.R
        empty = (np.empty(0, dtype=np.int64), np.empty(0))
        for L in range(1, self.finest_level_ + 1):
            idx = np.flatnonzero(pending & (k + 1 <= L))
            if idx.size == 0:
                continue
            codes = _code(dyadic_index(uu[idx], L), dyadic_index(vv[idx], L), L)
            nodes, mass = self.tree_.nodes.get(L, empty)
            pos, hit = _lookup(nodes, codes)
            # a point that leaves the tree sits where the estimate vanishes
            leaf = np.zeros_like(hit)
            if hit.any():
                leaf[hit] = self.tree_.leaf[L][pos[hit]]
            out[idx[leaf]] = mass[pos[leaf]] / (R * 2.0 ** -L) ** 2
            pending[idx[~hit | leaf]] = False
        return out

    predict = density

    def integrate_cell(self, cell: CellIndex) -> float:
        """Exact integral of the estimated density over a partition cell."""
        check_is_fitted(self, "tree_")
        if cell.k > self.K_:
            return 0.0
        if cell.level > self.finest_level_:
            raise ValueError(f"cell level {cell.level} is finer than the finest level {self.finest_level_}")
        return self.tree_.cell_mass(cell.level, cell.m, cell.n)

    @property
    def total_mass_(self) -> float:
        check_is_fitted(self, "tree_")
        return float(sum(float(r[1].sum()) for r in self.roots_.values()))

    # -- discretisation
    def _binned(self, level, rows: str = "strip"):
        """Integrals over the bins of resolution ``level``.

        Bins are ``2**-level`` wide in ``u``.  In ``v`` they are ``2**-level``
        tall above ``v = 2**-level``; below it each strip forms one row when
        ``rows == "strip"`` or the squares continue when ``rows == "square"``.
        Returns ``(u_lo, u_hi, v_lo, v_hi, mass)`` arrays.
        """
        L = int(level)
        parts = []
        for Ll, codes, mass in self.tree_.leaves():
            m, n = _decode(codes, Ll)
            if Ll >= L:
                sh = Ll - L
                bu = m >> sh
                bv = n >> sh
                strip = Ll - _bit_length(n)
                if rows == "strip":
                    deep = strip >= L
                    # deep strips: one row spanning [2**-(k+1), 2**-k)
                    vlo = np.where(deep, 2.0 ** -(strip + 1), bv * 2.0 ** -L)
                    vhi = np.where(deep, 2.0 ** -strip, (bv + 1) * 2.0 ** -L)
                else:
                    vlo, vhi = bv * 2.0 ** -L, (bv + 1) * 2.0 ** -L
                parts.append((bu * 2.0 ** -L, (bu + 1) * 2.0 ** -L, vlo, vhi, mass))
            else:
                sh = L - Ll
                count = 4 ** sh
                if count * codes.size > self._max_bins:
                    raise MemoryError(f"discretisation at level {L} needs more than {self._max_bins} bins")
                off = np.arange(1 << sh)
                du, dv = np.meshgrid(off, off, indexing="ij")
                bu = ((m << sh)[:, None] + du.ravel()[None, :]).ravel()
                bv = ((n << sh)[:, None] + dv.ravel()[None, :]).ravel()
                mm = np.repeat(mass / count, count)
                parts.append((bu * 2.0 ** -L, (bu + 1) * 2.0 ** -L, bv * 2.0 ** -L, (bv + 1) * 2.0 ** -L, mm))
        if not parts:
            z = np.empty(0)
            return z, z, z, z, z
        ulo, uhi, vlo, vhi, mass = (np.concatenate([p[i] for p in parts]) for i in range(5))
        key = np.column_stack([ulo, vlo])
        uniq, inv = np.unique(key, axis=0, return_inverse=True)
        inv = inv.ravel()
        tot = np.bincount(inv, weights=mass, minlength=len(uniq))
        first = np.zeros(len(uniq), dtype=np.int64)
        first[inv[::-1]] = np.arange(inv.size)[::-1]
        return uniq[:, 0], uhi[first], uniq[:, 1], vhi[first], tot

    _max_bins = 20_000_000

    def discretize(self, level=None, signed: bool = False):
        """Atomic measure carrying the estimator's mass at bin centres.

        ``level=None`` uses the finest squares, ``"leaves"`` puts one atom per
        constant piece and an integer uses resolution ``level`` (see
        :meth:`_binned`).  Bins with negative mass are returned as a second
        measure when ``signed`` is true and rejected otherwise.
        """
        check_is_fitted(self, "tree_")
        geom = self.geometry_
        if level == "leaves":
            cu, cv, mass = [], [], []
            for Ll, codes, mm in self.tree_.leaves():
                m, n = _decode(codes, Ll)
                cu.append((m + 0.5) * 2.0 ** -Ll)
                cv.append((n + 0.5) * 2.0 ** -Ll)
                mass.append(mm)
            cu = np.concatenate(cu) if cu else np.empty(0)
            cv = np.concatenate(cv) if cv else np.empty(0)
            mass = np.concatenate(mass) if mass else np.empty(0)
        else:
            L = self.finest_level_ if level is None else int(level)
            if L < 1:
                raise ValueError("resolution level must be at least 1")
            ulo, uhi, vlo, vhi, mass = self._binned(L)
            cu, cv = (ulo + uhi) / 2, (vlo + vhi) / 2
        # empty bins can pick up round-off from the Haar synthesis
        mass = np.where(np.abs(mass) <= _ROUNDOFF * np.abs(mass).sum(), 0.0, mass)
        t1, t2 = from_unit_square(cu, cv, geom)
        pos = mass > 0
        neg = mass < 0
        plus = PersistenceMeasure(t1[pos], t2[pos], mass[pos])
        if signed:
            return plus, PersistenceMeasure(t1[neg], t2[neg], -mass[neg])
        if neg.any():
            raise ValueError("the estimate has cells of negative mass; call discretize(..., signed=True)")
        return plus

    def density_grid(self, level: int):
        """Mean density on every dyadic square of ``level``: arrays ``(u, v, value)`` at square centres."""
        check_is_fitted(self, "tree_")
        L = int(level)
        side = 2.0 ** -L
        cu, cv = np.meshgrid((np.arange(1 << L) + 0.5) * side, (np.arange(1 << L) + 0.5) * side, indexing="ij")
        values = np.zeros(cu.shape)
        ulo, _, vlo, _, mass = self._binned(L, rows="square")
        if mass.size:
            mi = np.rint(ulo / side).astype(np.int64)
            ni = np.rint(vlo / side).astype(np.int64)
            np.add.at(values, (mi, ni), mass)
        values /= (self.geometry_.R * side) ** 2
        return cu.ravel(), cv.ravel(), values.ravel()

    # -- serialisation
    def to_dict(self) -> dict:
        check_is_fitted(self, "tree_")
        coeffs = [[k.kind, k.level, k.m, k.n, v] for k, v in self.coefficients().items()]
        return {
            "R": self.geometry_.R,
            "K": self.K_,
            "J": self.J_,
            "N": self.n_samples_,
            "tau": self.tau_,
            "p": self.p,
            "threshold_scale": self.threshold_scale,
            "truncated_mass": self.truncated_mass_,
            "outside_mass": self.outside_mass_,
            "coefficients": coeffs,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HaarDensityEstimator":
        geom = DomainGeometry(float(data["R"]))
        est = cls(K=int(data["K"]), J=int(data["J"]), R=geom, tau=float(data.get("tau", 0.0)),
                  p=float(data.get("p", 2.0)), threshold_scale=float(data.get("threshold_scale", 1.0)))
        est.geometry_, est.K_, est.J_ = geom, int(data["K"]), int(data["J"])
        est.n_samples_ = int(data.get("N", 1))
        est.finest_level_ = est.J_ + est.K_ + 1
        est.truncated_mass_ = float(data.get("truncated_mass", 0.0))
        est.outside_mass_ = float(data.get("outside_mass", 0.0))
        est.n_outside_ = 0
        roots: dict[int, dict[int, float]] = {}
        dets: dict[int, dict[int, np.ndarray]] = {}
        for kind, L, m, n, val in data["coefficients"]:
            L = int(L)
            code = int(_code(int(m), int(n), L))
            x = float(val) * geom.R / 2.0 ** L
            if kind == "scaling":
                roots.setdefault(L, {})[code] = x
            elif kind in _DETAILS:
                dets.setdefault(L, {}).setdefault(code, np.zeros(3))[_DETAILS.index(kind)] = x
            else:
                raise ValueError(f"unknown coefficient kind {kind!r}")
        est.roots_ = {L: (np.array(sorted(d), dtype=np.int64), np.array([d[c] for c in sorted(d)])) for L, d in roots.items()}
        est.raw_details_ = {
            L: (np.array(sorted(d), dtype=np.int64), np.array([d[c] for c in sorted(d)])) for L, d in dets.items()
        }
        est.represented_mass_ = float(sum(r[1].sum() for r in est.roots_.values()))
        est.tau_ = est.tau
        est.details_ = est.raw_details_
        est.tree_ = HaarTree(est.roots_, est.details_, est.finest_level_)
        return est

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_json(cls, path) -> "HaarDensityEstimator":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _bit_length(n):
    _, e = np.frexp(np.asarray(n, dtype=float))
    return e.astype(np.int64)


# ------------------------------------------------- functional interface

def basis_eval(idx: HaarIndex, t1, t2, geom: DomainGeometry):
    """Value of one adapted Haar function at ``(t1, t2)``."""
    u, v = to_unit_square(t1, t2, geom)
    L = idx.level
    inside = (u >= 0) & (u <= 1) & (v >= 0) & (v <= 1)
    on = inside & (dyadic_index(u, L) == idx.m) & (dyadic_index(v, L) == idx.n)
    if idx.kind == "scaling":
        sign = 1.0
    else:
        sa = 1.0 - 2.0 * (dyadic_index(u, L + 1) & 1)
        sb = 1.0 - 2.0 * (dyadic_index(v, L + 1) & 1)
        sign = {"detail_a": sa, "detail_b": sb, "detail_c": sa * sb}[idx.kind]
    return np.where(on, sign * 2.0 ** L / geom.R, 0.0)


def estimate_coefficients(diagrams: Sequence[PersistenceMeasure], geom: DomainGeometry, K: int, J: int) -> HaarDensityEstimator:
    return HaarDensityEstimator(K=K, J=J, R=geom).fit(diagrams)


def apply_threshold(est: HaarDensityEstimator, rule: ThresholdRule) -> HaarDensityEstimator:
    return est._rethresholded(rule)


def density_at(est: HaarDensityEstimator, t1: float, t2: float) -> float:
    return float(est.density([[t1, t2]])[0])


def integrate_cell(est: HaarDensityEstimator, cell: CellIndex) -> float:
    return est.integrate_cell(cell)


def discretize(est: HaarDensityEstimator, level=None, signed: bool = False):
    return est.discretize(level, signed=signed)


def _bin_centres(mu: PersistenceMeasure, geom: DomainGeometry, level: int):
    L = int(level)
    u, v = to_unit_square(mu.births, mu.deaths, geom)
    if not np.all(geom.contains(mu.births, mu.deaths)):
        raise ValueError("measure has atoms outside Omega_R")
    u, v = np.clip(u, 0.0, 1.0), np.clip(v, 0.0, 1.0)
    k = strip_indices(u, v)
    cu = (dyadic_index(u, L) + 0.5) * 2.0 ** -L
    cv = np.where(k >= L, 1.5 * 2.0 ** -(k + 1), (dyadic_index(v, L) + 0.5) * 2.0 ** -L)
    return from_unit_square(cu, cv, geom)


def bin_measure(mu: PersistenceMeasure, geom: DomainGeometry, level: int) -> PersistenceMeasure:
    """Move the atoms of ``mu`` to the centres of the resolution-``level`` bins.

    Uses the bins of :meth:`HaarDensityEstimator.discretize` with an integer
    level, so an atomic reference and an estimate land on the same grid.
    Atoms outside ``Omega_R`` raise ``ValueError``.
    """
    if len(mu) == 0:
        return PersistenceMeasure()
    t1, t2 = _bin_centres(mu, geom, level)
    return PersistenceMeasure(t1, t2, mu.weights)


def binning_cost(mu: PersistenceMeasure, geom: DomainGeometry, level: int, p: float = 2.0, q: float = 2.0) -> float:
    """Cost ``sum w * ||x - c(x)||_q**p`` of moving every atom to its bin centre.

    It bounds ``OT_p(mu, bin_measure(mu))**p`` from above, hence the error that
    binning the reference adds to a transport distance.
    """
    if len(mu) == 0:
        return 0.0
    t1, t2 = _bin_centres(mu, geom, level)
    d = np.column_stack([mu.births - t1, mu.deaths - t2])
    return float(np.sum(mu.weights * np.linalg.norm(d, ord=q, axis=1) ** p))


def enumerate_basis(K: int, J: int) -> list[HaarIndex]:
    """Every basis function an estimator with levels ``(K, J)`` can store."""
    out = []
    for k in range(K + 1):
        L0 = k + 1
        out += [HaarIndex("scaling", L0, m, 1) for m in range(1 << L0)]
        for L in range(L0, J + K + 1):
            rows = range(1 << (L - L0), 1 << (L - L0 + 1))
            for n in rows:
                for m in range(1 << L):
                    out += [HaarIndex(kind, L, m, n) for kind in _DETAILS]
    return out
