"""Compiled CART kernels (Gini criterion). Kernels release the GIL."""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True, nogil=True)
def _splitmix(state):
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def _randbelow(state, k):
    u = (_splitmix(state) >> np.uint64(11)) * (1.0 / 9007199254740992.0)
    r = int(u * k)
    return r if r < k else k - 1


@njit(cache=True, nogil=True)
def _gini(counts, total):
    if total == 0:
        return 0.0
    acc = 0.0
    for c in counts:
        p = c / total
        acc += p * p
    return 1.0 - acc


@njit(cache=True, nogil=True)
def build_tree(X, y, sample_idx, n_classes, max_features, max_depth, min_samples_split, seed):
    """Grow one tree on the rows ``sample_idx`` (repeats allowed).

    max_depth < 0 means unbounded. Returns node arrays
    (feature, threshold, left, right, value); leaves have feature == -1.
    """
    n = sample_idx.shape[0]
    d = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros((cap, n_classes), dtype=np.float64)

    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64(seed)
    idx = sample_idx.copy()
    perm = np.arange(d)
    cand = np.empty(max_features, dtype=np.int64)
    vals = np.empty(n, dtype=np.float64)
    counts = np.zeros(n_classes, dtype=np.float64)
    lcounts = np.zeros(n_classes, dtype=np.float64)

    # stack of (node, start, end, depth)
    stack = np.empty((cap, 4), dtype=np.int64)
    top = 0
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        size = end - start

        counts[:] = 0.0
        for p in range(start, end):
            counts[y[idx[p]]] += 1.0
        for c in range(n_classes):
            value[node, c] = counts[c] / size

        parent = _gini(counts, size)
        if parent <= 0.0 or size < min_samples_split or (max_depth >= 0 and depth >= max_depth):
            continue

        # fresh uniform draw of candidate features (partial Fisher-Yates)
        for i in range(d):
            perm[i] = i
        for i in range(max_features):
            j = i + _randbelow(state, d - i)
            tmp = perm[i]
            perm[i] = perm[j]
            perm[j] = tmp
            cand[i] = perm[i]
        cand_sorted = np.sort(cand)

        best_gain = 0.0
        best_f = -1
        best_thr = 0.0
        for f in cand_sorted:
            for p in range(size):
                vals[p] = X[idx[start + p], f]
            order = np.argsort(vals[:size], kind="mergesort")
            lcounts[:] = 0.0
            for p in range(size - 1):
                r = idx[start + order[p]]
                lcounts[y[r]] += 1.0
                a = vals[order[p]]
                b = vals[order[p + 1]]
                if a >= b:
                    continue
                nl = p + 1
                nr = size - nl
                gl = 0.0
                gr = 0.0
                for c in range(n_classes):
                    pl = lcounts[c] / nl
                    pr = (counts[c] - lcounts[c]) / nr
                    gl += pl * pl
                    gr += pr * pr
                child = (nl * (1.0 - gl) + nr * (1.0 - gr)) / size
                gain = parent - child
                if gain > best_gain:
                    mid = 0.5 * (a + b)
                    if mid >= b or mid < a:
                        mid = a
                    best_gain = gain
                    best_f = f
                    best_thr = mid
        if best_f < 0 or best_gain <= 1e-15:
            continue

        # partition rows: x <= threshold goes left
        i = start
        j = end - 1
        while i <= j:
            if X[idx[i], best_f] <= best_thr:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[j]
                idx[j] = tmp
                j -= 1
        feature[node] = best_f
        threshold[node] = best_thr
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        stack[top, 0] = rnode
        stack[top, 1] = i
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = lnode
        stack[top, 1] = start
        stack[top, 2] = i
        stack[top, 3] = depth + 1
        top += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy())


@njit(cache=True, nogil=True)
def apply_tree(feature, threshold, left, right, X):
    """Leaf index reached by each row of X."""
    out = np.empty(X.shape[0], dtype=np.int64)
    for r in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = node
    return out
