"""Pure numpy versions of the tree kernels in ``_kernels.pyx``.

Same signatures and same results (up to summation order). The loops run
over tree levels and sibling positions instead of over cubes, so the cost
is a handful of vector operations per level.
"""
import numpy as np


def _sibling_position(parent, son_start):
    pos = np.zeros(parent.shape[0], dtype=np.int64)
    pos[1:] = np.arange(1, parent.shape[0]) - son_start[parent[1:]]
    return pos


def _is_last_sibling(parent, son_count, pos):
    last = np.ones(parent.shape[0], dtype=bool)
    last[1:] = pos[1:] == son_count[parent[1:]] - 1
    return last


def _bottom_up(F, parent, level_start):
    depth = level_start.shape[0] - 2
    for k in range(depth - 1, -1, -1):
        p0, p1 = level_start[k], level_start[k + 1]
        s0, s1 = level_start[k + 1], level_start[k + 2]
        F[p0:p1] += np.bincount(parent[s0:s1] - p0, weights=F[s0:s1], minlength=p1 - p0)
    return F


def haar_forward(fnu, parent, son_start, son_count, fun_of_cube, a, b, level_start):
    nc = parent.shape[0]
    depth = level_start.shape[0] - 2
    leaf = level_start[depth]
    F = np.zeros(nc)
    F[leaf:] = fnu
    _bottom_up(F, parent, level_start)

    pos = _sibling_position(parent, son_start)
    last = _is_last_sibling(parent, son_count, pos)
    # suffix[s] = sum of F over the later siblings of s
    suffix = np.zeros(nc)
    for j in range(int(pos.max()) - 1, -1, -1):
        sel = np.flatnonzero((pos == j) & ~last)
        sel = sel[sel > 0]
        suffix[sel] = suffix[sel + 1] + F[sel + 1]
    fson = np.flatnonzero(fun_of_cube >= 0)
    coef = a * F[fson] - b * suffix[fson]
    return coef, float(F[0])


def haar_inverse(coef, coarse, parent, son_start, son_count, fun_of_cube, a, b, level_start):
    nc = parent.shape[0]
    depth = level_start.shape[0] - 2
    leaf = level_start[depth]
    fson = np.flatnonzero(fun_of_cube >= 0)
    own = np.zeros(nc)
    own[fson] = a * coef
    bc = np.zeros(nc)
    bc[fson] = b * coef

    pos = _sibling_position(parent, son_start)
    prefix = np.zeros(nc)
    for j in range(1, int(pos.max()) + 1):
        sel = np.flatnonzero(pos == j)
        prefix[sel] = prefix[sel - 1] + bc[sel - 1]
    contrib = own - prefix

    vals = np.empty(nc)
    vals[0] = coarse
    for k in range(depth):
        s0, s1 = level_start[k + 1], level_start[k + 2]
        vals[s0:s1] = vals[parent[s0:s1]] + contrib[s0:s1]
    return vals[leaf:].copy()


def shift_mix(x, src, dst, weights, nout):
    return np.bincount(dst, weights=weights * x[src], minlength=nout).astype(np.float64)


def subtree_sums(values, parent, level_start):
    return _bottom_up(np.array(values, dtype=np.float64, copy=True), parent, level_start)


def propagate_max(values, parent, level_start):
    out = np.array(values, dtype=np.float64, copy=True)
    depth = level_start.shape[0] - 2
    for k in range(depth):
        s0, s1 = level_start[k + 1], level_start[k + 2]
        out[s0:s1] = np.maximum(out[s0:s1], out[parent[s0:s1]])
    return out
