"""Compiled inner loops for Vietoris-Rips persistence in degrees 0 and 1.

Simplices are totally ordered by (diameter, dimension, sorted vertex tuple).
A triangle ``a < b < c`` is encoded as ``(a * n + b) * n + c`` so that code
order is lexicographic vertex order.
"""

import numpy as np
from numba import njit, types
from numba.typed import Dict, List


@njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True)
def zero_dim_pairs(n, ei, ej):
    """Union-find over edges in filtration order.

    Returns a boolean mask of edges that merge two components.  Every vertex
    is born at 0, so the component that dies is immaterial for the bar.
    """
    parent = np.arange(n)
    merges = np.zeros(ei.size, dtype=np.bool_)
    for e in range(ei.size):
        ra = _find(parent, ei[e])
        rb = _find(parent, ej[e])
        if ra != rb:
            if ra < rb:
                parent[rb] = ra
            else:
                parent[ra] = rb
            merges[e] = True
    return merges


@njit(cache=True)
def _less(d1, c1, d2, c2):
    return d1 < d2 or (d1 == d2 and c1 < c2)


@njit(cache=True)
def _coboundary(D, n, a, b, t_max):
    dab = D[a, b]
    diams = np.empty(n - 2)
    codes = np.empty(n - 2, dtype=np.int64)
    cnt = 0
    for w in range(n):
        if w == a or w == b:
            continue
        daw = D[a, w]
        dbw = D[b, w]
        if daw > t_max or dbw > t_max:
            continue
        dm = dab
        if daw > dm:
            dm = daw
        if dbw > dm:
            dm = dbw
        x, y, z = a, b, w
        if x > y:
            x, y = y, x
        if y > z:
            y, z = z, y
        if x > y:
            x, y = y, x
        diams[cnt] = dm
        codes[cnt] = (x * n + y) * n + z
        cnt += 1
    diams = diams[:cnt]
    codes = codes[:cnt]
    order = np.argsort(codes, kind="mergesort")
    diams = diams[order]
    codes = codes[order]
    order = np.argsort(diams, kind="mergesort")
    return diams[order], codes[order]


@njit(cache=True)
def _xor_sorted(d1, c1, d2, c2):
    out_d = np.empty(d1.size + d2.size)
    out_c = np.empty(d1.size + d2.size, dtype=np.int64)
    i = 0
    j = 0
    k = 0
    while i < d1.size and j < d2.size:
        if c1[i] == c2[j]:
            i += 1
            j += 1
        elif _less(d1[i], c1[i], d2[j], c2[j]):
            out_d[k] = d1[i]
            out_c[k] = c1[i]
            i += 1
            k += 1
        else:
            out_d[k] = d2[j]
            out_c[k] = c2[j]
            j += 1
            k += 1
    while i < d1.size:
        out_d[k] = d1[i]
        out_c[k] = c1[i]
        i += 1
        k += 1
    while j < d2.size:
        out_d[k] = d2[j]
        out_c[k] = c2[j]
        j += 1
        k += 1
    return out_d[:k], out_c[:k]


@njit(cache=True)
def _min_coface(D, n, a, b, t_max):
    dab = D[a, b]
    best_d = np.inf
    best_c = -1
    for w in range(n):
        if w == a or w == b:
            continue
        daw = D[a, w]
        dbw = D[b, w]
        if daw > t_max or dbw > t_max:
            continue
        dm = dab
        if daw > dm:
            dm = daw
        if dbw > dm:
            dm = dbw
        x, y, z = a, b, w
        if x > y:
            x, y = y, x
        if y > z:
            y, z = z, y
        if x > y:
            x, y = y, x
        c = (x * n + y) * n + z
        if best_c < 0 or _less(dm, c, best_d, best_c):
            best_d = dm
            best_c = c
    return best_d, best_c


@njit(cache=True)
def one_dim_pairs_cohomology(D, ei, ej, negative, t_max):
    """Pair cycle-creating edges with the triangles that kill them.

    Coboundary columns of the edges are reduced in reverse filtration order;
    the pivot of a column is its earliest triangle.  Edges that kill a
    component never carry a pivot and are skipped.  A column whose pivot is
    fresh is kept as a reference to its edge and rebuilt only if a later
    column needs it.  Returns ``(edge_index, death)`` arrays, with
    ``death = inf`` for classes still alive at ``t_max``.
    """
    n = D.shape[0]
    pivots = Dict.empty(key_type=types.int64, value_type=types.int64)
    # slot >= 0: reduced column in the store; slot < 0: untouched coboundary of edge -slot-1
    empty_d = np.empty(0)
    empty_c = np.empty(0, dtype=np.int64)
    store_d = List()
    store_c = List()
    store_d.append(empty_d)
    store_c.append(empty_c)
    out_e = np.empty(ei.size, dtype=np.int64)
    out_d = np.empty(ei.size)
    cnt = 0
    for e in range(ei.size - 1, -1, -1):
        if negative[e]:
            continue
        out_e[cnt] = e
        pd, pc = _min_coface(D, n, ei[e], ej[e], t_max)
        if pc < 0:
            out_d[cnt] = np.inf
            cnt += 1
            continue
        if pc not in pivots:
            pivots[pc] = -e - 1
            out_d[cnt] = pd
            cnt += 1
            continue
        cd, cc = _coboundary(D, n, ei[e], ej[e], t_max)
        while cc.size > 0 and cc[0] in pivots:
            slot = pivots[cc[0]]
            if slot < 0:
                f = -slot - 1
                od, oc = _coboundary(D, n, ei[f], ej[f], t_max)
            else:
                od = store_d[slot]
                oc = store_c[slot]
            cd, cc = _xor_sorted(cd, cc, od, oc)
        if cc.size == 0:
            out_d[cnt] = np.inf
        else:
            pivots[cc[0]] = len(store_d)
            store_d.append(cd)
            store_c.append(cc)
            out_d[cnt] = cd[0]
        cnt += 1
    return out_e[:cnt], out_d[:cnt]
