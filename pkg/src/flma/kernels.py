"""Numeric inner loops, each in a numba and a pure-numpy flavour.

The public names (``knn_indices``, ``subset_counts``, ``correct_scores``)
dispatch to numba unless it is missing or ``FLMA_DISABLE_NUMBA`` is set to a
truthy value before import. Both flavours are always importable under their
``_nb``/``_np`` suffixed names so they can be compared against each other.

The two flavours perform the same floating point operations in the same order
and therefore agree bit for bit.
"""
import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_DISABLED = os.environ.get("FLMA_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

BACKEND = "numba" if HAVE_NUMBA and not _DISABLED else "numpy"


def _jit(fn):
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------------------
# k nearest neighbours (squared Euclidean, ties by ascending reference index)
# ---------------------------------------------------------------------------

def knn_indices_np(ref, query, k, exclude_self=False):
    ref = np.ascontiguousarray(ref, dtype=np.float64)
    query = np.ascontiguousarray(query, dtype=np.float64)
    m, n = query.shape[0], ref.shape[0]
    d2 = np.zeros((m, n))
    for c in range(ref.shape[1]):
        diff = query[:, c, None] - ref[None, :, c]
        d2 += diff * diff
    if exclude_self:
        d2[np.arange(m), np.arange(m)] = np.inf
    return np.argsort(d2, axis=1, kind="stable")[:, :k].astype(np.int64)


def _knn_indices_kernel(ref, query, k, exclude_self):
    m = query.shape[0]
    n = ref.shape[0]
    dim = ref.shape[1]
    out = np.empty((m, k), dtype=np.int64)
    row = np.empty(n)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for c in range(dim):
                diff = query[i, c] - ref[j, c]
                acc += diff * diff
            row[j] = acc
        if exclude_self:
            row[i] = np.inf
        order = np.argsort(row, kind="mergesort")
        for t in range(k):
            out[i, t] = order[t]
    return out


_knn_indices_jit = _jit(_knn_indices_kernel)


def knn_indices_nb(ref, query, k, exclude_self=False):
    ref = np.ascontiguousarray(ref, dtype=np.float64)
    query = np.ascontiguousarray(query, dtype=np.float64)
    return _knn_indices_jit(ref, query, int(k), bool(exclude_self))


# ---------------------------------------------------------------------------
# subset support counting over bitmask-encoded transactions
# ---------------------------------------------------------------------------

def subset_counts_np(transactions, masks, chunk=4096):
    transactions = np.asarray(transactions, dtype=np.int64)
    masks = np.asarray(masks, dtype=np.int64)
    out = np.empty(masks.shape[0], dtype=np.int64)
    for start in range(0, masks.shape[0], chunk):
        q = masks[start:start + chunk, None]
        out[start:start + chunk] = ((transactions[None, :] & q) == q).sum(axis=1)
    return out


def _subset_counts_kernel(transactions, masks):
    out = np.zeros(masks.shape[0], dtype=np.int64)
    for q in range(masks.shape[0]):
        mask = masks[q]
        count = 0
        for t in range(transactions.shape[0]):
            if transactions[t] & mask == mask:
                count += 1
        out[q] = count
    return out


_subset_counts_jit = _jit(_subset_counts_kernel)


def subset_counts_nb(transactions, masks):
    transactions = np.ascontiguousarray(transactions, dtype=np.int64)
    masks = np.ascontiguousarray(masks, dtype=np.int64)
    return _subset_counts_jit(transactions, masks)


# ---------------------------------------------------------------------------
# rule-driven score correction
#
# tags: +1 certain-relevant, -1 certain-irrelevant, 0 uncertain (frozen).
# Rules arrive in CSR layout: antecedent labels ant_idx[ant_ptr[r]:ant_ptr[r+1]],
# consequent labels likewise; sign +1 for CP, -1 for CA.
# Trace rows are ordered by (instance, rule position, ambiguity rank).
# ---------------------------------------------------------------------------

def _count_applications_kernel(tags, ant_ptr, ant_idx, con_ptr, con_idx, sign):
    m = tags.shape[0]
    n_rules = sign.shape[0]
    counts = np.zeros(m, dtype=np.int64)
    for i in range(m):
        total = 0
        for r in range(n_rules):
            fires = True
            for p in range(ant_ptr[r], ant_ptr[r + 1]):
                if tags[i, ant_idx[p]] != sign[r]:
                    fires = False
                    break
            if not fires:
                continue
            for p in range(con_ptr[r], con_ptr[r + 1]):
                if tags[i, con_idx[p]] == 0:
                    total += 1
        counts[i] = total
    return counts


def _correct_kernel(scores, tags, ant_ptr, ant_idx, con_ptr, con_idx, sign, conf, eps,
                    offsets, t_inst, t_label, t_rule, t_delta, t_before, t_after):
    m = scores.shape[0]
    n_rules = sign.shape[0]
    out = scores.copy()
    max_con = 0
    for r in range(n_rules):
        if con_ptr[r + 1] - con_ptr[r] > max_con:
            max_con = con_ptr[r + 1] - con_ptr[r]
    pending = np.empty(max_con, dtype=np.int64)
    ambiguity = np.empty(max_con)
    for i in range(m):
        pos = offsets[i]
        for r in range(n_rules):
            fires = True
            x_dist = 0.0
            for p in range(ant_ptr[r], ant_ptr[r + 1]):
                a = ant_idx[p]
                if tags[i, a] != sign[r]:
                    fires = False
                    break
                s = scores[i, a]
                d = min(s, 1.0 - s)
                if d > x_dist:
                    x_dist = d
            if not fires:
                continue
            n_pending = 0
            for p in range(con_ptr[r], con_ptr[r + 1]):
                j = con_idx[p]
                if tags[i, j] == 0:
                    pending[n_pending] = j
                    ambiguity[n_pending] = abs(out[i, j] - 0.5)
                    n_pending += 1
            # insertion sort: most ambiguous first, ties by label index
            for u in range(1, n_pending):
                lab = pending[u]
                amb = ambiguity[u]
                v = u - 1
                while v >= 0 and (ambiguity[v] > amb or (ambiguity[v] == amb and pending[v] > lab)):
                    pending[v + 1] = pending[v]
                    ambiguity[v + 1] = ambiguity[v]
                    v -= 1
                pending[v + 1] = lab
                ambiguity[v + 1] = amb
            denom = max(x_dist, eps)
            for u in range(n_pending):
                j = pending[u]
                y = out[i, j]
                delta = conf[r] * min(y, 1.0 - y) / denom
                new = y + sign[r] * delta
                new = min(max(new, 0.0), 1.0)
                out[i, j] = new
                t_inst[pos] = i
                t_label[pos] = j
                t_rule[pos] = r
                t_delta[pos] = delta
                t_before[pos] = y
                t_after[pos] = new
                pos += 1
    return out


_count_applications_jit = _jit(_count_applications_kernel)
_correct_jit = _jit(_correct_kernel)


def _alloc_trace(n):
    return (np.empty(n, dtype=np.int64), np.empty(n, dtype=np.int64), np.empty(n, dtype=np.int64),
            np.empty(n), np.empty(n), np.empty(n))


def correct_scores_nb(scores, tags, ant_ptr, ant_idx, con_ptr, con_idx, sign, conf, eps=1e-6):
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    tags = np.ascontiguousarray(tags, dtype=np.int8)
    ant_ptr, ant_idx, con_ptr, con_idx = (np.ascontiguousarray(a, dtype=np.int64)
                                          for a in (ant_ptr, ant_idx, con_ptr, con_idx))
    sign = np.ascontiguousarray(sign, dtype=np.int8)
    conf = np.ascontiguousarray(conf, dtype=np.float64)
    counts = _count_applications_jit(tags, ant_ptr, ant_idx, con_ptr, con_idx, sign)
    offsets = np.zeros(counts.shape[0] + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    trace = _alloc_trace(int(offsets[-1]))
    out = _correct_jit(scores, tags, ant_ptr, ant_idx, con_ptr, con_idx, sign, conf, float(eps),
                       offsets, *trace)
    return (out,) + trace


def correct_scores_np(scores, tags, ant_ptr, ant_idx, con_ptr, con_idx, sign, conf, eps=1e-6):
    scores = np.asarray(scores, dtype=np.float64)
    tags = np.asarray(tags, dtype=np.int8)
    out = scores.copy()
    dist = np.minimum(scores, 1.0 - scores)
    m = scores.shape[0]
    rows = np.arange(m)
    parts = []
    for r in range(len(sign)):
        ants = np.asarray(ant_idx[ant_ptr[r]:ant_ptr[r + 1]], dtype=np.int64)
        cons = np.asarray(con_idx[con_ptr[r]:con_ptr[r + 1]], dtype=np.int64)
        fires = np.all(tags[:, ants] == sign[r], axis=1)
        if not fires.any():
            continue
        x_dist = np.maximum(dist[:, ants].max(axis=1), 0.0)
        denom = np.maximum(x_dist, eps)
        rank = np.argsort(np.abs(out[:, cons] - 0.5), axis=1, kind="stable")
        for p in range(len(cons)):
            lab = cons[rank[:, p]]
            hit = fires & (tags[rows, lab] == 0)
            if not hit.any():
                continue
            i = rows[hit]
            j = lab[hit]
            y = out[i, j]
            delta = conf[r] * np.minimum(y, 1.0 - y) / denom[hit]
            new = np.minimum(np.maximum(y + sign[r] * delta, 0.0), 1.0)
            out[i, j] = new
            parts.append((i, j, np.full(len(i), r), np.full(len(i), p), delta, y, new))
    if not parts:
        return (out,) + _alloc_trace(0)
    inst, lab, rule, rank, delta, before, after = (np.concatenate(col) for col in zip(*parts))
    order = np.lexsort((rank, rule, inst))
    return (out, inst[order].astype(np.int64), lab[order].astype(np.int64),
            rule[order].astype(np.int64), delta[order], before[order], after[order])


if BACKEND == "numba":
    knn_indices = knn_indices_nb
    subset_counts = subset_counts_nb
    correct_scores = correct_scores_nb
else:
    knn_indices = knn_indices_np
    subset_counts = subset_counts_np
    correct_scores = correct_scores_np
