"""Compiled tree operations over the array representation of :class:`Tree`.

Node ``v`` owns arena row ``v``.  ``left[v] == -1`` marks a leaf.  Leaf
counts ``lcount``/``rcount`` are only meaningful on internal nodes.
Scalar bookkeeping lives in the int64 ``meta`` array (slots below) so the
kernels can mutate it in place.
"""

import numpy as np
from numba import njit

from ..regressor import predict_row, reset_row, update_row

N_NODES = 0
DISAGREEMENTS = 1
MAX_DEPTH = 2
TOTAL_DEPTH = 3
UPDATES = 4
MAX_TOUCH = 5
STRICT_VIOLATIONS = 6
CLOSED_VIOLATIONS = 7
SKIPPED = 8
INSERTIONS = 9
FIRST_VIOLATION_AT = 10
FIRST_VIOLATION_NODE = 11
FIRST_VIOLATION_L = 12
FIRST_VIOLATION_R = 13
META_SIZE = 16

# Relative slack for the closed (<=) balance check; absorbs rounding of kappa*N.
CLOSED_SLACK = 1e-9


@njit(cache=True)
def obj(p, L, R, alpha):
    """Routing score ``(1-alpha)*2*(p-1/2) + alpha*log2(L/R)``; > 0 means right."""
    return (1.0 - alpha) * 2.0 * (p - 0.5) + alpha * np.log2(L / R)


@njit(cache=True)
def _coin(rng):
    # splitmix64 step; the top output bit is the coin.
    rng[0] += np.uint64(0x9E3779B97F4A7C15)
    z = rng[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(63)) == np.uint64(1)


@njit(cache=True)
def _touch(meta, n):
    meta[UPDATES] += n
    if n > meta[MAX_TOUCH]:
        meta[MAX_TOUCH] = n


@njit(cache=True)
def predict_leaf(right, parent, W, leaf, idx, val):
    q = 1.0
    child = leaf
    node = parent[leaf]
    while node >= 0:
        f = predict_row(W, node, idx, val)
        if right[node] == child:
            q *= f
        else:
            q *= 1.0 - f
        child = node
        node = parent[node]
    return q


@njit(cache=True)
def train_leaf(right, parent, W, counts, meta, leaf, idx, val, eta0, decay):
    touched = 0
    child = leaf
    node = parent[leaf]
    while node >= 0:
        target = 1.0 if right[node] == child else 0.0
        update_row(W, counts, node, idx, val, target, eta0, decay)
        touched += 1
        child = node
        node = parent[node]
    update_row(W, counts, leaf, idx, val, 0.0, eta0, decay)
    _touch(meta, touched + 1)


@njit(cache=True)
def _check_balance_path(lcount, rcount, parent, node, kappa, meta):
    slack = 1.0 - kappa
    while node >= 0:
        L = lcount[node]
        R = rcount[node]
        lim = kappa * (L + R) + slack
        if not (L < lim and R < lim):
            if meta[STRICT_VIOLATIONS] == 0:
                meta[FIRST_VIOLATION_AT] = meta[INSERTIONS]
                meta[FIRST_VIOLATION_NODE] = node
                meta[FIRST_VIOLATION_L] = L
                meta[FIRST_VIOLATION_R] = R
            meta[STRICT_VIOLATIONS] += 1
        tol = lim * (1.0 + CLOSED_SLACK)
        if L > tol or R > tol:
            meta[CLOSED_VIOLATIONS] += 1
        node = parent[node]


@njit(cache=True)
def insert_label(
    left, right, parent, lcount, rcount, depth, node_label, label_leaf,
    W, counts, meta, rng, label, idx, val, alpha, random_mode, eta0, decay, check_kappa,
):
    """Place an unseen label; returns its new leaf.  Capacity must be reserved."""
    n = meta[N_NODES]
    meta[INSERTIONS] += 1
    if n == 0:
        left[0] = -1
        right[0] = -1
        parent[0] = -1
        lcount[0] = 0
        rcount[0] = 0
        depth[0] = 0
        node_label[0] = label
        label_leaf[label] = 0
        reset_row(W, counts, 0)
        meta[N_NODES] = 1
        return 0

    touched = 0
    i = 0
    while left[i] >= 0:
        p = predict_row(W, i, idx, val)
        if random_mode:
            go_right = _coin(rng)
        else:
            go_right = obj(p, lcount[i], rcount[i], alpha) > 0.0
        if go_right != (p > 0.5):
            meta[DISAGREEMENTS] += 1
        update_row(W, counts, i, idx, val, 1.0 if go_right else 0.0, eta0, decay)
        touched += 1
        if go_right:
            rcount[i] += 1
            i = right[i]
        else:
            lcount[i] += 1
            i = left[i]

    j = i
    a = n
    b = n + 1
    d = depth[j] + 1

    # left: copy of j, keeps j's label and regressor state
    W[a, :] = W[j, :]
    counts[a] = counts[j]
    left[a] = -1
    right[a] = -1
    parent[a] = j
    lcount[a] = 0
    rcount[a] = 0
    depth[a] = d
    node_label[a] = node_label[j]
    label_leaf[node_label[j]] = a

    # right: the new label with a fresh regressor trained on (x, 0)
    reset_row(W, counts, b)
    left[b] = -1
    right[b] = -1
    parent[b] = j
    lcount[b] = 0
    rcount[b] = 0
    depth[b] = d
    node_label[b] = label
    label_leaf[label] = b
    update_row(W, counts, b, idx, val, 0.0, eta0, decay)

    left[j] = a
    right[j] = b
    lcount[j] = 1
    rcount[j] = 1
    node_label[j] = -1
    update_row(W, counts, j, idx, val, 1.0, eta0, decay)
    _touch(meta, touched + 2)

    meta[N_NODES] = n + 2
    meta[TOTAL_DEPTH] += d + 1  # j's depth (d-1) is replaced by two leaves at d
    if d > meta[MAX_DEPTH]:
        meta[MAX_DEPTH] = d
    if check_kappa > 0.0:
        _check_balance_path(lcount, rcount, parent, j, check_kappa, meta)
    return b


@njit(cache=True)
def stream(
    left, right, parent, lcount, rcount, depth, node_label, label_leaf,
    W, counts, meta, rng, indptr, indices, values, labels, out,
    do_predict, do_learn, allow_insert, alpha, random_mode, eta0, decay, check_kappa,
):
    """Predict-then-learn over a CSR batch; ``out[e]`` gets Q(y_e | x_e)."""
    for e in range(labels.shape[0]):
        a = indptr[e]
        b = indptr[e + 1]
        idx = indices[a:b]
        val = values[a:b]
        lab = labels[e]
        leaf = label_leaf[lab]
        if do_predict:
            if leaf >= 0:
                out[e] = predict_leaf(right, parent, W, leaf, idx, val)
            else:
                out[e] = 0.0
        if do_learn:
            if leaf >= 0:
                train_leaf(right, parent, W, counts, meta, leaf, idx, val, eta0, decay)
            elif allow_insert:
                insert_label(
                    left, right, parent, lcount, rcount, depth, node_label, label_leaf,
                    W, counts, meta, rng, lab, idx, val, alpha, random_mode, eta0, decay,
                    check_kappa,
                )
            else:
                meta[SKIPPED] += 1


@njit(cache=True)
def predict_pairs(right, parent, W, label_leaf, indptr, indices, values, labels, out):
    for e in range(labels.shape[0]):
        leaf = label_leaf[labels[e]] if labels[e] >= 0 else -1
        if leaf < 0:
            out[e] = 0.0
        else:
            a = indptr[e]
            b = indptr[e + 1]
            out[e] = predict_leaf(right, parent, W, leaf, indices[a:b], values[a:b])
