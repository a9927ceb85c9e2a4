"""Pure-Python scoring fallback, used when the compiled kernel is absent."""

from __future__ import annotations


def jaccard_scores(query_trigrams: frozenset, label_sets: list) -> list:
    """Trigram-Jaccard of one query set against every label set."""
    out = []
    qn = len(query_trigrams)
    for tris in label_sets:
        union = qn + len(tris)
        if union == 0:
            out.append(0.0)
            continue
        isect = len(query_trigrams & tris)
        out.append(isect / (union - isect) if union - isect else 0.0)
    return out
