# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled CART kernels.

Must stay numerically identical to ``_tree_py``: same accumulation order,
same tie rules, same splitmix64 stream. Any change here needs the mirror
change there (``tests/test_kernels.py`` compares the two bit for bit).
"""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free
from libc.stdint cimport uint64_t, int32_t

cnp.import_array()


cdef inline uint64_t _splitmix_next(uint64_t* state) noexcept nogil:
    cdef uint64_t z
    state[0] = state[0] + <uint64_t>0x9E3779B97F4A7C15
    z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


def build_tree(const double[:, ::1] Xt, const double[::1] y, const double[::1] w,
               const int32_t[:, ::1] order, double min_leaf, int mtry,
               int max_depth, uint64_t seed):
    """Grow one regression tree.

    ``Xt`` is the transposed design (features x rows), ``order`` the per-feature
    argsort of all rows; rows with zero weight are out of bag and ignored.
    Returns (feature, threshold, left, right, value, weight, gain).
    """
    cdef Py_ssize_t p = Xt.shape[0]
    cdef Py_ssize_t n = Xt.shape[1]
    cdef Py_ssize_t m = 0, i, j, f, g, c, r
    for i in range(n):
        if w[i] > 0:
            m += 1
    if m == 0:
        raise ValueError("no in-bag rows")
    if mtry < 1 or mtry > p:
        raise ValueError("mtry out of range")

    cdef Py_ssize_t cap = 2 * m
    feature_a = np.full(cap, -1, dtype=np.int32)
    threshold_a = np.zeros(cap, dtype=np.float64)
    left_a = np.full(cap, -1, dtype=np.int32)
    right_a = np.full(cap, -1, dtype=np.int32)
    value_a = np.zeros(cap, dtype=np.float64)
    weight_a = np.zeros(cap, dtype=np.float64)
    gain_a = np.zeros(cap, dtype=np.float64)
    idx_a = np.empty((p, m), dtype=np.int32)
    cdef int32_t[::1] feature = feature_a
    cdef double[::1] threshold = threshold_a
    cdef int32_t[::1] left = left_a
    cdef int32_t[::1] right = right_a
    cdef double[::1] value = value_a
    cdef double[::1] weight = weight_a
    cdef double[::1] gain = gain_a
    cdef int32_t[:, ::1] idx = idx_a

    cdef int32_t* feats = <int32_t*>malloc(p * sizeof(int32_t))
    cdef int32_t* tmp = <int32_t*>malloc(m * sizeof(int32_t))
    cdef char* goes_left = <char*>malloc(n * sizeof(char))
    cdef Py_ssize_t* st_start = <Py_ssize_t*>malloc(cap * sizeof(Py_ssize_t))
    cdef Py_ssize_t* st_end = <Py_ssize_t*>malloc(cap * sizeof(Py_ssize_t))
    cdef int* st_depth = <int*>malloc(cap * sizeof(int))
    cdef Py_ssize_t* st_parent = <Py_ssize_t*>malloc(cap * sizeof(Py_ssize_t))
    cdef char* st_side = <char*>malloc(cap * sizeof(char))
    if (feats == NULL or tmp == NULL or goes_left == NULL or st_start == NULL
            or st_end == NULL or st_depth == NULL or st_parent == NULL or st_side == NULL):
        free(feats); free(tmp); free(goes_left); free(st_start); free(st_end)
        free(st_depth); free(st_parent); free(st_side)
        raise MemoryError()

    cdef uint64_t state = seed
    cdef Py_ssize_t top = 0, node_count = 0, node, s, e, k, nr, best_pos
    cdef int depth, best_f
    cdef double W, S, Sc, mu, ymin, ymax, base, cs, cw, wr, sr, gval, xv, xn
    cdef double best_gain, best_thr, thr, bound
    cdef bint leaf, both_leaves
    cdef Py_ssize_t gl

    with nogil:
        for f in range(p):
            feats[f] = <int32_t>f
            k = 0
            for i in range(n):
                r = order[f, i]
                if w[r] > 0:
                    idx[f, k] = <int32_t>r
                    k += 1

        st_start[0] = 0
        st_end[0] = m
        st_depth[0] = 0
        st_parent[0] = -1
        st_side[0] = 0
        top = 1
        while top > 0:
            top -= 1
            s = st_start[top]
            e = st_end[top]
            depth = st_depth[top]
            node = node_count
            node_count += 1
            if st_parent[top] >= 0:
                if st_side[top] == 0:
                    left[st_parent[top]] = <int32_t>node
                else:
                    right[st_parent[top]] = <int32_t>node

            W = 0.0
            S = 0.0
            r = idx[0, s]
            ymin = y[r]
            ymax = y[r]
            for i in range(s, e):
                r = idx[0, i]
                W = W + w[r]
                S = S + w[r] * y[r]
                if y[r] < ymin:
                    ymin = y[r]
                if y[r] > ymax:
                    ymax = y[r]
            mu = S / W
            value[node] = mu
            weight[node] = W

            leaf = W < 2.0 * min_leaf or ymax <= ymin or (max_depth >= 0 and depth >= max_depth)
            if leaf:
                continue

            Sc = 0.0
            for i in range(s, e):
                r = idx[0, i]
                Sc = Sc + (y[r] - mu) * w[r]
            base = Sc * Sc / W

            for c in range(mtry):
                j = c + <Py_ssize_t>(_splitmix_next(&state) % <uint64_t>(p - c))
                g = feats[c]
                feats[c] = feats[j]
                feats[j] = <int32_t>g

            best_gain = 0.0
            best_f = -1
            best_pos = -1
            best_thr = 0.0
            bound = base * (1.0 - 1e-9)
            for c in range(mtry):
                f = feats[c]
                cs = 0.0
                cw = 0.0
                xn = Xt[f, idx[f, s]]
                for i in range(s, e - 1):
                    r = idx[f, i]
                    cs = cs + (y[r] - mu) * w[r]
                    cw = cw + w[r]
                    xv = xn
                    xn = Xt[f, idx[f, i + 1]]
                    if not (xn > xv):
                        continue
                    if cw < min_leaf:
                        continue
                    wr = W - cw
                    if wr < min_leaf:
                        break
                    sr = Sc - cs
                    # division-free pre-filter; the exact test below decides
                    if cs * cs * wr + sr * sr * cw < bound * (cw * wr):
                        continue
                    gval = cs * cs / cw + sr * sr / wr - base
                    if gval > best_gain or (best_f >= 0 and gval == best_gain and f < best_f):
                        best_gain = gval
                        best_f = <int>f
                        best_pos = i
                        thr = (xv + xn) * 0.5
                        if thr >= xn or thr < xv:
                            thr = xv
                        best_thr = thr
                        bound = (best_gain + base) * (1.0 - 1e-9)

            if best_f < 0:
                continue

            feature[node] = best_f
            threshold[node] = best_thr
            gain[node] = best_gain

            for i in range(s, e):
                goes_left[idx[0, i]] = 0
            for i in range(s, best_pos + 1):
                goes_left[idx[best_f, i]] = 1
            # both children terminal: only idx[0] (the summation order) is still needed
            cw = 0.0
            for i in range(s, best_pos + 1):
                cw = cw + w[idx[best_f, i]]
            both_leaves = ((max_depth >= 0 and depth + 1 >= max_depth)
                           or (cw < 2.0 * min_leaf and W - cw < 2.0 * min_leaf))
            for g in range(p):
                if g == best_f or (both_leaves and g != 0):
                    continue
                k = s
                nr = 0
                for i in range(s, e):
                    r = idx[g, i]
                    gl = goes_left[r]
                    # branchless stable partition
                    idx[g, k] = <int32_t>r
                    tmp[nr] = <int32_t>r
                    k += gl
                    nr += 1 - gl
                for i in range(nr):
                    idx[g, k + i] = tmp[i]

            st_start[top] = best_pos + 1
            st_end[top] = e
            st_depth[top] = depth + 1
            st_parent[top] = node
            st_side[top] = 1
            top += 1
            st_start[top] = s
            st_end[top] = best_pos + 1
            st_depth[top] = depth + 1
            st_parent[top] = node
            st_side[top] = 0
            top += 1

    free(feats); free(tmp); free(goes_left); free(st_start); free(st_end)
    free(st_depth); free(st_parent); free(st_side)
    return (feature_a[:node_count].copy(), threshold_a[:node_count].copy(),
            left_a[:node_count].copy(), right_a[:node_count].copy(),
            value_a[:node_count].copy(), weight_a[:node_count].copy(),
            gain_a[:node_count].copy())


def predict_tree(const int32_t[::1] feature, const double[::1] threshold,
                 const int32_t[::1] left, const int32_t[::1] right,
                 const double[::1] value, const double[:, ::1] X):
    cdef Py_ssize_t n = X.shape[0], i
    cdef int32_t node, f
    out_a = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_a
    with nogil:
        for i in range(n):
            node = 0
            f = feature[0]
            while f >= 0:
                if X[i, f] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
                f = feature[node]
            out[i] = value[node]
    return out_a


def predict_tree_override(const int32_t[::1] feature, const double[::1] threshold,
                          const int32_t[::1] left, const int32_t[::1] right,
                          const double[::1] value, const double[:, ::1] X,
                          const cnp.intp_t[::1] rows, int column,
                          const double[::1] replacement):
    """Predict ``X[rows]`` with column ``column`` swapped for ``replacement``."""
    cdef Py_ssize_t n = rows.shape[0], i, r
    cdef int32_t node, f
    cdef double xv
    out_a = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_a
    with nogil:
        for i in range(n):
            r = rows[i]
            node = 0
            f = feature[0]
            while f >= 0:
                if f == column:
                    xv = replacement[i]
                else:
                    xv = X[r, f]
                if xv <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
                f = feature[node]
            out[i] = value[node]
    return out_a
