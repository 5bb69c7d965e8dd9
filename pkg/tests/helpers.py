"""Shared generators and oracles for the test-suite."""

import numpy as np
import scipy.sparse as sp

from epdwave.geometry import DomainGeometry, dyadic_index, from_unit_square, strip_indices
from epdwave.measures import PersistenceMeasure
from epdwave.wavelet import basis_eval, enumerate_basis


def random_diagram(rng, n, geom, power=2.0, unit=False):
    """Atoms in ``Omega_R``; ``v = U**power`` spreads them over several strips."""
    u = rng.uniform(0, 1, n)
    v = np.maximum(rng.uniform(0, 1, n) ** power, 1e-9)
    t1, t2 = from_unit_square(u, v, geom)
    w = None if unit else rng.integers(1, 3, n).astype(float)
    return PersistenceMeasure(t1, t2, w)


def random_sample(rng, N, geom, max_atoms=12, power=2.0):
    return [random_diagram(rng, int(rng.integers(0, max_atoms + 1)), geom, power) for _ in range(N)]


def direct_coefficients(diagrams, geom, K, J):
    """Every coefficient by summing basis values over atoms (no transform)."""
    b = np.concatenate([d.births for d in diagrams])
    t = np.concatenate([d.deaths for d in diagrams])
    w = np.concatenate([d.weights for d in diagrams]) / len(diagrams)
    u, v = geom.to_unit_square(b, t)
    keep = strip_indices(u, v) <= K
    b, t, w = b[keep], t[keep], w[keep]
    return {idx: float(np.sum(w * basis_eval(idx, b, t, geom))) for idx in enumerate_basis(K, J)}


def basis_matrix(K, J, geom):
    """Sparse matrix of basis values on the finest grid (rows: basis, cols: squares)."""
    L = J + K + 1
    side = 1 << L
    basis = enumerate_basis(K, J)
    rows, cols, vals = [], [], []
    for r, idx in enumerate(basis):
        sh = L - idx.level
        ms = (idx.m << sh) + np.arange(1 << sh)
        ns = (idx.n << sh) + np.arange(1 << sh)
        mm, nn = np.meshgrid(ms, ns, indexing="ij")
        mm, nn = mm.ravel(), nn.ravel()
        # value at the square centre is the value on the whole square
        u = (mm + 0.5) / side
        v = (nn + 0.5) / side
        t1, t2 = from_unit_square(u, v, geom)
        rows.append(np.full(mm.size, r))
        cols.append(mm * side + nn)
        vals.append(basis_eval(idx, t1, t2, geom))
    mat = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(len(basis), side * side))
    return basis, mat, (geom.R / side) ** 2


def histogram(mu, geom, level):
    """Mass of ``mu`` in every occupied dyadic square of ``level``."""
    u, v = mu.unit_coordinates(geom)
    m, n = dyadic_index(u, level), dyadic_index(v, level)
    out = {}
    for key, w in zip(zip(m.tolist(), n.tolist()), mu.weights.tolist()):
        out[key] = out.get(key, 0.0) + w
    return out
