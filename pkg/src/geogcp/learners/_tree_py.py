"""Pure-numpy CART kernels.

Mirror of ``_tree_c.pyx``: identical arithmetic order and tie rules, so both
backends grow the same trees bit for bit. Used when the extension is not
built or when ``GEOGCP_BACKEND=python``.
"""
import numpy as np

_MASK = (1 << 64) - 1


class _SplitMix64:
    __slots__ = ("state",)

    def __init__(self, seed):
        self.state = int(seed) & _MASK

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)


def build_tree(Xt, y, w, order, min_leaf, mtry, max_depth, seed):
    p, n = Xt.shape
    inbag = w > 0
    m = int(inbag.sum())
    if m == 0:
        raise ValueError("no in-bag rows")
    if mtry < 1 or mtry > p:
        raise ValueError("mtry out of range")
    min_leaf = float(min_leaf)

    idx = np.empty((p, m), dtype=np.int32)
    for f in range(p):
        col = order[f]
        idx[f] = col[inbag[col]]

    feats = list(range(p))
    rng = _SplitMix64(seed)
    feature, threshold, left, right, value, weight, gain = [], [], [], [], [], [], []
    goes_left = np.zeros(n, dtype=bool)
    stack = [(0, m, 0, -1, 0)]
    while stack:
        s, e, depth, parent, side = stack.pop()
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        gain.append(0.0)
        if parent >= 0:
            if side == 0:
                left[parent] = node
            else:
                right[parent] = node

        rows0 = idx[0, s:e]
        wr0 = w[rows0]
        yr0 = y[rows0]
        W = float(np.cumsum(wr0)[-1])
        S = float(np.cumsum(wr0 * yr0)[-1])
        mu = S / W
        value.append(mu)
        weight.append(W)
        if W < 2.0 * min_leaf or yr0.max() <= yr0.min() or (max_depth >= 0 and depth >= max_depth):
            continue

        Sc = float(np.cumsum((yr0 - mu) * wr0)[-1])
        base = Sc * Sc / W

        for c in range(mtry):
            j = c + rng.next() % (p - c)
            feats[c], feats[j] = feats[j], feats[c]

        best_gain, best_f, best_pos, best_thr = 0.0, -1, -1, 0.0
        for c in range(mtry):
            f = feats[c]
            rows = idx[f, s:e]
            xs = Xt[f, rows]
            yc = (y[rows[:-1]] - mu) * w[rows[:-1]]
            cs = np.cumsum(yc)
            cw = np.cumsum(w[rows[:-1]])
            wr = W - cw
            ok = (xs[1:] > xs[:-1]) & (cw >= min_leaf) & (wr >= min_leaf)
            if not ok.any():
                continue
            sr = Sc - cs
            with np.errstate(divide="ignore", invalid="ignore"):
                g = cs * cs / cw + sr * sr / wr - base
            g = np.where(ok, g, -np.inf)
            i = int(np.argmax(g))
            gval = float(g[i])
            if gval > best_gain or (best_f >= 0 and gval == best_gain and f < best_f):
                best_gain, best_f, best_pos = gval, f, s + i
                xv, xn = float(xs[i]), float(xs[i + 1])
                thr = (xv + xn) * 0.5
                if thr >= xn or thr < xv:
                    thr = xv
                best_thr = thr

        if best_f < 0:
            continue
        feature[node] = best_f
        threshold[node] = best_thr
        gain[node] = best_gain

        goes_left[idx[0, s:e]] = False
        goes_left[idx[best_f, s:best_pos + 1]] = True
        block = idx[:, s:e]
        perm = np.argsort(~goes_left[block], axis=1, kind="stable")
        idx[:, s:e] = np.take_along_axis(block, perm, axis=1)

        stack.append((best_pos + 1, e, depth + 1, node, 1))
        stack.append((s, best_pos + 1, depth + 1, node, 0))

    return (np.asarray(feature, dtype=np.int32), np.asarray(threshold, dtype=np.float64),
            np.asarray(left, dtype=np.int32), np.asarray(right, dtype=np.int32),
            np.asarray(value, dtype=np.float64), np.asarray(weight, dtype=np.float64),
            np.asarray(gain, dtype=np.float64))


def _descend(feature, threshold, left, right, X, rows, column=-1, replacement=None):
    node = np.zeros(len(rows), dtype=np.intp)
    active = np.nonzero(feature[node] >= 0)[0]
    while active.size:
        nd = node[active]
        f = feature[nd]
        xv = X[rows[active], f]
        if replacement is not None and column >= 0:
            hit = f == column
            xv = np.where(hit, replacement[active], xv)
        node[active] = np.where(xv <= threshold[nd], left[nd], right[nd])
        active = active[feature[node[active]] >= 0]
    return node


def predict_tree(feature, threshold, left, right, value, X):
    rows = np.arange(X.shape[0])
    return value[_descend(feature, threshold, left, right, X, rows)]


def predict_tree_override(feature, threshold, left, right, value, X, rows, column, replacement):
    rows = np.asarray(rows, dtype=np.intp)
    return value[_descend(feature, threshold, left, right, X, rows, column,
                          np.asarray(replacement, dtype=np.float64))]
