"""Optimal partial transport between persistence measures.

Mass may be created or destroyed on the diagonal at the price of its distance
to the diagonal.  The partial problem is turned into a balanced one by giving
each side a diagonal sink holding the other side's total mass; the balanced
problem is then solved exactly by network simplex.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np

from .geometry import DomainGeometry, diagonal_distance
from .measures import PersistenceMeasure, cell_masses

for _backend in ("PYTORCH", "JAX", "TENSORFLOW", "CUPY"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_backend}", "1")

import ot  # noqa: E402

SINK = -1


def pairwise_cost(x, y, p: float, q: float) -> np.ndarray:
    """``||x_i - y_j||_q ** p`` for point arrays of shape ``(n, 2)`` and ``(m, 2)``."""
    diff = np.abs(x[:, None, :] - y[None, :, :])
    if math.isinf(q):
        dist = diff.max(axis=-1)
    elif q == 2:
        dist = np.sqrt((diff ** 2).sum(axis=-1))
    elif q == 1:
        dist = diff.sum(axis=-1)
    else:
        dist = (diff ** q).sum(axis=-1) ** (1.0 / q)
    return dist ** p


@dataclass
class TransportPlan:
    """Coupling of two diagonal-augmented measures.

    ``flows`` rows are ``(source, target, mass)`` with ``-1`` standing for the
    diagonal sink; ``cost`` is ``sum(mass * ground_cost)``, i.e. the p-th
    power of the transport distance.
    """

    source: np.ndarray
    target: np.ndarray
    source_weights: np.ndarray
    target_weights: np.ndarray
    flows: np.ndarray
    costs: np.ndarray
    p: float
    q: float

    @property
    def cost(self) -> float:
        return float(np.sum(self.flows[:, 2] * self.costs)) if len(self.flows) else 0.0

    @property
    def value(self) -> float:
        return self.cost ** (1.0 / self.p)

    def marginals(self):
        """Row and column sums over the augmented index sets (sink last)."""
        ns, nt = len(self.source), len(self.target)
        rows = np.zeros(ns + 1)
        cols = np.zeros(nt + 1)
        if len(self.flows):
            i = self.flows[:, 0].astype(np.int64)
            j = self.flows[:, 1].astype(np.int64)
            np.add.at(rows, np.where(i == SINK, ns, i), self.flows[:, 2])
            np.add.at(cols, np.where(j == SINK, nt, j), self.flows[:, 2])
        return rows, cols

    def check(self, rtol: float = 1e-9) -> None:
        """Raise ``AssertionError`` unless the plan is a feasible coupling."""
        rows, cols = self.marginals()
        tot_s, tot_t = self.source_weights.sum(), self.target_weights.sum()
        want_rows = np.append(self.source_weights, tot_t)
        want_cols = np.append(self.target_weights, tot_s)
        scale = max(1.0, tot_s + tot_t)
        assert np.all(self.flows[:, 2] >= 0) if len(self.flows) else True, "negative flow"
        assert np.allclose(rows, want_rows, rtol=0, atol=rtol * scale), "source marginal violated"
        assert np.allclose(cols, want_cols, rtol=0, atol=rtol * scale), "target marginal violated"

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["source_idx", "target_idx", "mass", "cost"])
            for (i, j, m), c in zip(self.flows, self.costs):
                w.writerow([int(i), int(j), repr(float(m)), repr(float(c))])


def _points(mu: PersistenceMeasure) -> np.ndarray:
    return np.column_stack([mu.births, mu.deaths]) if len(mu) else np.empty((0, 2))


def augmented_cost(mu: PersistenceMeasure, nu: PersistenceMeasure, p: float, q: float) -> np.ndarray:
    """Cost matrix of shape ``(len(mu) + 1, len(nu) + 1)``; the last row and column are the sinks."""
    x, y = _points(mu), _points(nu)
    C = np.zeros((len(x) + 1, len(y) + 1))
    C[:-1, :-1] = pairwise_cost(x, y, p, q)
    C[:-1, -1] = diagonal_distance(mu.births, mu.deaths, q) ** p
    C[-1, :-1] = diagonal_distance(nu.births, nu.deaths, q) ** p
    return C


def ot_distance(mu: PersistenceMeasure, nu: PersistenceMeasure, p: float = 2.0, q: float = 2.0, max_iter: int = 50_000_000):
    """Exact ``OT_{p,q}(mu, nu)`` and an optimal plan.

    Returns ``(value, plan)`` with ``value = plan.cost ** (1/p)``.
    """
    if not (1 <= p < math.inf):
        raise ValueError("p must be finite and >= 1")
    if q < 1:
        raise ValueError("q must be >= 1")
    x, y = _points(mu), _points(nu)
    a = np.append(mu.weights, nu.total_mass)
    b = np.append(nu.weights, mu.total_mass)
    if a.sum() == 0:
        plan = TransportPlan(x, y, mu.weights, nu.weights, np.empty((0, 3)), np.empty(0), p, q)
        return 0.0, plan
    C = augmented_cost(mu, nu, p, q)
    # both sides hold mu + nu; remove the summation round-off POT would otherwise flag
    b = b * (a.sum() / b.sum())
    G, log = ot.emd(a, b, C, numItermax=max_iter, log=True)
    if log.get("result_code", 1) != 1:
        raise RuntimeError(f"network simplex did not reach optimality: {log.get('warning')}")
    i, j = np.nonzero(G > 0)
    flows = np.column_stack([np.where(i == len(x), SINK, i), np.where(j == len(y), SINK, j), G[i, j]])
    plan = TransportPlan(x, y, mu.weights, nu.weights, flows, C[i, j], p, q)
    return max(plan.cost, 0.0) ** (1.0 / p), plan


def ot_signed(plus: PersistenceMeasure, minus: PersistenceMeasure, nu: PersistenceMeasure, p: float = 2.0, q: float = 2.0) -> float:
    """Transport distance from the signed measure ``plus - minus`` to ``nu``.

    Uses the usual extension ``OT(plus - minus, nu) = OT(plus, nu + minus)``.
    """
    target = nu + minus if len(minus) else nu
    return ot_distance(plus, target, p, q)[0]


def _unit_points(mu: PersistenceMeasure) -> np.ndarray:
    w = mu.weights
    if np.any(np.abs(w - np.rint(w)) > 1e-12):
        raise ValueError("brute_force_ot needs integer multiplicities")
    return np.repeat(_points(mu), np.rint(w).astype(int), axis=0)


def brute_force_ot(mu: PersistenceMeasure, nu: PersistenceMeasure, p: float = 2.0, q: float = 2.0, max_atoms: int = 10) -> float:
    """Transport distance between small diagrams by enumerating every partial matching.

    Unmatched points pay their distance to the diagonal.  ``p`` may be
    infinite (bottleneck distance).
    """
    x, y = _unit_points(mu), _unit_points(nu)
    if len(x) + len(y) > max_atoms:
        raise ValueError(f"brute force is capped at {max_atoms} atoms, got {len(x) + len(y)}")
    dx = diagonal_distance(x[:, 0], x[:, 1], q) if len(x) else np.empty(0)
    dy = diagonal_distance(y[:, 0], y[:, 1], q) if len(y) else np.empty(0)
    pair = pairwise_cost(x, y, 1.0, q) if len(x) and len(y) else np.empty((len(x), len(y)))
    bottleneck = math.isinf(p)

    def combine(acc, c):
        return max(acc, c) if bottleneck else acc + c ** p

    best = math.inf

    def search(i, used, acc):
        nonlocal best
        if i == len(x):
            for j in range(len(y)):
                if not used & (1 << j):
                    acc = combine(acc, dy[j])
            best = min(best, acc)
            return
        search(i + 1, used, combine(acc, dx[i]))
        for j in range(len(y)):
            if not used & (1 << j):
                search(i + 1, used | (1 << j), combine(acc, pair[i, j]))

    search(0, 0, 0.0)
    return best if bottleneck else best ** (1.0 / p)


def _strip_masses(mu: PersistenceMeasure, geom: DomainGeometry, depth: int) -> dict[int, dict[tuple[int, int], float]]:
    # strips present in mu, with cell masses at the given depth
    from .geometry import strip_indices

    u, v = mu.unit_coordinates(geom)
    ks = np.unique(strip_indices(u, v)) if len(mu) else np.empty(0, dtype=int)
    return {int(k): cell_masses(mu, int(k), depth, geom) for k in ks if k >= 0}


def multiscale_upper_bound(mu: PersistenceMeasure, nu: PersistenceMeasure, geom: DomainGeometry, J: int, p: float) -> float:
    """Multiscale transport bound on ``OT_p**p(mu, nu)`` for measures on ``Omega_R``.

    ``2**(p/2) R**p sum_k 2**(-kp) [2**(-Jp) min(mu(A_k), nu(A_k))
    + c_p |mu(A_k) - nu(A_k)| + sum_{j=1..J} 2**(-jp) sum_Q |mu(Q) - nu(Q)|]``
    where ``Q`` runs over the depth ``j - 1`` cells of strip ``k`` and
    ``c_p = 2**(-p/2) (1 + 1/(2**p - 1))``.
    """
    if J < 1:
        raise ValueError("J must be at least 1")
    for m in (mu, nu):
        if len(m) and not np.all(geom.contains(m.births, m.deaths)):
            raise ValueError("measures must be supported on Omega_R")
    c_p = 2.0 ** (-p / 2) * (1.0 + 1.0 / (2.0 ** p - 1.0))
    per_depth_mu = [_strip_masses(mu, geom, j) for j in range(J)]
    per_depth_nu = [_strip_masses(nu, geom, j) for j in range(J)]
    strips = set(per_depth_mu[0]) | set(per_depth_nu[0])
    total = 0.0
    for k in sorted(strips):
        a_mu = sum(per_depth_mu[0].get(k, {}).values())
        a_nu = sum(per_depth_nu[0].get(k, {}).values())
        term = 2.0 ** (-J * p) * min(a_mu, a_nu) + c_p * abs(a_mu - a_nu)
        for j in range(1, J + 1):
            cm = per_depth_mu[j - 1].get(k, {})
            cn = per_depth_nu[j - 1].get(k, {})
            diff = sum(abs(cm.get(c, 0.0) - cn.get(c, 0.0)) for c in set(cm) | set(cn))
            term += 2.0 ** (-j * p) * diff
        total += 2.0 ** (-k * p) * term
    return 2.0 ** (p / 2) * geom.R ** p * total
