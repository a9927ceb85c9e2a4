# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled scoring kernel: batch trigram-Jaccard of one query against many labels.

Labels are pre-encoded as sorted trigram-id arrays concatenated into ``flat``
with ``offsets`` delimiting each label. The query arrives as a sorted id
array plus its total distinct-trigram count (ids unknown to the vocabulary
cannot intersect but still enlarge the union).
"""


def jaccard_scores(const int[::1] query,
                   Py_ssize_t query_total,
                   const int[::1] flat,
                   const long long[::1] offsets,
                   double[::1] out):
    cdef Py_ssize_t n = offsets.shape[0] - 1
    cdef Py_ssize_t k, i, j, lo, hi, isect, union
    for k in range(n):
        lo = <Py_ssize_t> offsets[k]
        hi = <Py_ssize_t> offsets[k + 1]
        isect = 0
        i = 0
        j = lo
        while i < query.shape[0] and j < hi:
            if query[i] < flat[j]:
                i += 1
            elif query[i] > flat[j]:
                j += 1
            else:
                isect += 1
                i += 1
                j += 1
        union = query_total + (hi - lo) - isect
        out[k] = (<double> isect / <double> union) if union > 0 else 0.0
    return None
