"""Compiled loops over the flat cell layout.

All kernels take a contiguous cell range ``[lo, hi)`` (one level) and the
matching ghost-entry range.  Face order is fixed (-x, +x, -y, +y, -z, +z) so
every per-cell sum is evaluated in the same order on every call.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _row_same_level(i, x, cm, nbr):
    acc = 0.0
    for ax in range(3):
        nb = nbr[2 * ax, i]
        if nb >= 0:
            acc += cm[ax, i] * x[nb]
        nb = nbr[2 * ax + 1, i]
        if nb >= 0:
            acc += cm[ax, nb] * x[nb]
    return acc


@njit(cache=True)
def children_mean(x, c, children, p):
    """Mean of ``x`` over the active children of cell ``p``."""
    s = 0.0
    n = 0
    for o in range(8):
        ch = children[p, o]
        if ch >= 0 and c[ch] != 0.0:
            s += x[ch]
            n += 1
    if n == 0:
        return 0.0
    return s / n


@njit(cache=True)
def ghost_value(p_f, p_c, child_avg):
    return p_f + 0.5 * (p_c - child_avg)


@njit(cache=True)
def apply_rows(lo, hi, glo, ghi, x, y, c, cm, nbr, gcell, gsrc, gpar, gcoef,
               children, leaf_only, is_leaf):
    """``y = A x`` on rows ``[lo, hi)``; inactive (and, optionally, Inner) rows get 0."""
    for i in range(lo, hi):
        ci = c[i]
        if ci == 0.0 or (leaf_only and not is_leaf[i]):
            y[i] = 0.0
            continue
        y[i] = ci * x[i] + _row_same_level(i, x, cm, nbr)
    for e in range(glo, ghi):
        i = gcell[e]
        if c[i] == 0.0:
            continue
        avg = children_mean(x, c, children, gpar[e])
        y[i] += gcoef[e] * ghost_value(x[i], x[gsrc[e]], avg)


@njit(cache=True)
def residual_rows(lo, hi, glo, ghi, x, b, r, c, cm, nbr, gcell, gsrc, gpar, gcoef,
                  children, is_leaf):
    apply_rows(lo, hi, glo, ghi, x, r, c, cm, nbr, gcell, gsrc, gpar, gcoef,
               children, False, is_leaf)
    for i in range(lo, hi):
        if c[i] != 0.0:
            r[i] = b[i] - r[i]
        else:
            r[i] = 0.0


@njit(cache=True)
def rbgs_phase(lo, hi, glo, ghi, color, x, b, c, cm, nbr, gcell, gsrc, gpar, gcoef,
               children, cell_color, gacc):
    """One colour phase of Gauss-Seidel on rows ``[lo, hi)``.

    Ghost values are frozen at the start of the phase so the result does not
    depend on the order in which same-colour cells are visited.
    """
    for e in range(glo, ghi):
        i = gcell[e]
        if cell_color[i] != color or c[i] == 0.0:
            continue
        avg = children_mean(x, c, children, gpar[e])
        gacc[e] = gcoef[e] * ghost_value(x[i], x[gsrc[e]], avg)
    for e in range(glo, ghi):
        i = gcell[e]
        if cell_color[i] != color or c[i] == 0.0:
            continue
        # stash the sum in the first entry of the cell (entries are sorted)
        if e > glo and gcell[e - 1] == i:
            continue
        s = gacc[e]
        k = e + 1
        while k < ghi and gcell[k] == i:
            s += gacc[k]
            k += 1
        gacc[e] = s
    e = glo
    for i in range(lo, hi):
        gs = 0.0
        while e < ghi and gcell[e] < i:
            e += 1
        if e < ghi and gcell[e] == i:
            gs = gacc[e]
        if cell_color[i] != color or c[i] == 0.0:
            continue
        x[i] = (b[i] - _row_same_level(i, x, cm, nbr) - gs) / c[i]


@njit(cache=True)
def restrict_level(lo, hi, u, r, b, ustar, c, children, is_leaf, scale):
    """Set up level-(l-1) rows ``[lo, hi)`` from level l.

    Inner cells: ``u = u* = mean of active children``, ``b = scale * sum of
    children residuals`` (the operator term is added by the caller).  Leaf
    cells keep ``u`` and ``b``; ``u*`` records their current value.
    """
    for i in range(lo, hi):
        if is_leaf[i]:
            ustar[i] = u[i]
            continue
        if c[i] == 0.0:
            u[i] = 0.0
            ustar[i] = 0.0
            b[i] = 0.0
            continue
        s = 0.0
        rs = 0.0
        n = 0
        for o in range(8):
            ch = children[i, o]
            if c[ch] != 0.0:
                s += u[ch]
                rs += r[ch]
                n += 1
        avg = s / n if n > 0 else 0.0
        u[i] = avg
        ustar[i] = avg
        b[i] = scale * rs


@njit(cache=True)
def add_inner_apply(lo, hi, x, out, c, cm, nbr, is_leaf):
    """``out += A x`` on the active Inner rows of ``[lo, hi)``."""
    for i in range(lo, hi):
        if is_leaf[i] or c[i] == 0.0:
            continue
        out[i] += c[i] * x[i] + _row_same_level(i, x, cm, nbr)


@njit(cache=True)
def prolongate_level(lo, hi, u, ustar, c, children, is_leaf):
    """Add ``u - u*`` of each active Inner cell to its active children."""
    for i in range(lo, hi):
        if is_leaf[i] or c[i] == 0.0:
            continue
        d = u[i] - ustar[i]
        for o in range(8):
            ch = children[i, o]
            if c[ch] != 0.0:
                u[ch] += d


@njit(cache=True)
def fill_inner_mean(lo, hi, x, active, children, is_leaf):
    """Inner cells of ``[lo, hi)`` take the mean of their active children."""
    for i in range(lo, hi):
        if is_leaf[i]:
            continue
        s = 0.0
        n = 0
        for o in range(8):
            ch = children[i, o]
            if active[ch]:
                s += x[ch]
                n += 1
        x[i] = s / n if n > 0 else 0.0


@njit(cache=True)
def coarsen_rows(lo, hi, c, cm, nbr, children, gated):
    """Galerkin coarsening of the Inner rows ``[lo, hi)`` with alpha = 2.

    ``c`` and ``cm`` hold the finer level already; the coarse entries are
    written in place.  With ``gated`` a child face contributes to an
    off-diagonal only when both cells it couples are active; for faces that
    leave the fine level (coarse leaf neighbour) the coarse neighbour's
    activity is used.
    """
    inv_alpha = 0.5
    for i in range(lo, hi):
        if children[i, 0] < 0:
            continue
        diag = 0.0
        any_active = False
        for o in range(8):
            ch = children[i, o]
            if c[ch] != 0.0:
                diag += inv_alpha * c[ch]
                any_active = True
        if not any_active:
            c[i] = 0.0
            for ax in range(3):
                cm[ax, i] = 0.0
            continue
        # internal faces: child with bit ax clear couples to child with bit set
        for ax in range(3):
            bit = 1 << (2 - ax)
            for o in range(8):
                if o & bit:
                    continue
                a = children[i, o]
                b = children[i, o | bit]
                if c[a] != 0.0 and c[b] != 0.0:
                    diag += 2.0 * inv_alpha * cm[ax, b]
        c[i] = diag
        for ax in range(3):
            bit = 1 << (2 - ax)
            nb_coarse = nbr[2 * ax, i]
            s = 0.0
            for o in range(8):
                if o & bit:
                    continue
                ch = children[i, o]
                if gated:
                    if c[ch] == 0.0:
                        continue
                    fn = nbr[2 * ax, ch]
                    if fn >= 0:
                        if c[fn] == 0.0:
                            continue
                    elif nb_coarse < 0 or c[nb_coarse] == 0.0:
                        continue
                s += inv_alpha * cm[ax, ch]
            cm[ax, i] = s


@njit(cache=True)
def dot64(a, b):
    s = 0.0
    for i in range(a.shape[0]):
        s += np.float64(a[i]) * np.float64(b[i])
    return s


@njit(cache=True)
def masked_sum64(a, mask):
    s = 0.0
    n = 0
    for i in range(a.shape[0]):
        if mask[i]:
            s += np.float64(a[i])
            n += 1
    return s, n


@njit(cache=True)
def ms_fraction(v0, v1, v2, v3, vc):
    """Fluid (``phi >= 0``) fraction of a unit square by marching squares.

    Corners are counter-clockwise from the origin: (0,0), (1,0), (1,1), (0,1).
    Edge crossings are linearly interpolated; the two saddle configurations
    are split by the sign of the face-centre sample ``vc``.
    """
    vals = (v0, v1, v2, v3)
    px = (0.0, 1.0, 1.0, 0.0)
    py = (0.0, 0.0, 1.0, 1.0)
    nin = 0
    for k in range(4):
        if vals[k] >= 0.0:
            nin += 1
    if nin == 4:
        return 1.0
    if nin == 0:
        return 0.0
    saddle = (v0 >= 0.0) == (v2 >= 0.0) and (v1 >= 0.0) == (v3 >= 0.0) and (v0 >= 0.0) != (v1 >= 0.0)
    if saddle and vc < 0.0:
        # two disjoint corner triangles
        area = 0.0
        for k in range(4):
            if vals[k] < 0.0:
                continue
            kp = (k + 1) % 4
            km = (k + 3) % 4
            ta = vals[k] / (vals[k] - vals[kp])
            tb = vals[k] / (vals[k] - vals[km])
            area += 0.5 * ta * tb
        return min(max(area, 0.0), 1.0)
    xs = np.empty(8)
    ys = np.empty(8)
    m = 0
    for k in range(4):
        kp = (k + 1) % 4
        a = vals[k]
        b = vals[kp]
        if a >= 0.0:
            xs[m] = px[k]
            ys[m] = py[k]
            m += 1
        if (a >= 0.0) != (b >= 0.0):
            t = a / (a - b)
            xs[m] = px[k] + t * (px[kp] - px[k])
            ys[m] = py[k] + t * (py[kp] - py[k])
            m += 1
    area = 0.0
    for k in range(m):
        kp = (k + 1) % m
        area += xs[k] * ys[kp] - xs[kp] * ys[k]
    area = 0.5 * abs(area)
    return min(max(area, 0.0), 1.0)


@njit(cache=True)
def ms_fractions(corners, centers):
    out = np.empty(corners.shape[0])
    for i in range(corners.shape[0]):
        out[i] = ms_fraction(corners[i, 0], corners[i, 1], corners[i, 2], corners[i, 3],
                             centers[i])
    return out
