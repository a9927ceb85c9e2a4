"""Label normalization and trigram similarity.

similarity(a, b) is 1.0 exactly when the normalized forms are equal;
otherwise it is the Jaccard overlap of character trigrams of the normalized
forms, capped just below 1.0 (repetitive strings like "abab"/"ababab" share
identical trigram sets without being equal, and a fuzzy match must never
reach the auto-commit score).

`TrigramIndex` is the batch form used by the store's candidate lookup: one
query scored against every indexed label in a single pass. It selects the
compiled kernel at import when available and falls back to pure Python.
"""

from __future__ import annotations

import string
from array import array

from semtable._kernels import HAVE_COMPILED, pure

if HAVE_COMPILED:
    from semtable._kernels import _trigram

FUZZY_CAP = 0.99

_STRIP_CHARS = string.punctuation + string.whitespace


def normalize_label(text: str) -> str:
    """Trim, casefold, collapse internal whitespace, strip edge punctuation."""
    t = " ".join(text.split()).casefold()
    return t.strip(_STRIP_CHARS)


def trigrams(normalized: str) -> frozenset:
    """Distinct character 3-grams; empty for strings shorter than 3."""
    return frozenset(normalized[i : i + 3] for i in range(len(normalized) - 2))


def trigram_jaccard(a_normalized: str, b_normalized: str) -> float:
    ta, tb = trigrams(a_normalized), trigrams(b_normalized)
    union = len(ta | tb)
    return len(ta & tb) / union if union else 0.0


def similarity(a: str, b: str) -> float:
    """Symmetric label similarity in [0, 1]; 1.0 iff normalized-equal."""
    na, nb = normalize_label(a), normalize_label(b)
    if na == nb:
        return 1.0
    return min(trigram_jaccard(na, nb), FUZZY_CAP)


class TrigramIndex:
    """Append-only index of normalized labels with batch similarity scoring.

    Scores carry the full similarity definition: 1.0 for normalized-equal
    labels, capped trigram Jaccard otherwise.
    """

    def __init__(self, backend: str = "auto"):
        if backend not in ("auto", "pure", "compiled"):
            raise ValueError(f"unknown backend {backend!r}")
        if backend == "compiled" and not HAVE_COMPILED:
            raise RuntimeError("compiled kernel is not available")
        self._compiled = HAVE_COMPILED if backend == "auto" else backend == "compiled"
        self._normalized: list[str] = []
        self._sets: list[frozenset] = []
        # compiled path: trigram vocabulary and per-label sorted id arrays
        self._vocab: dict[str, int] = {}
        self._ids: list[array] = []
        self._flat: array | None = None
        self._offsets: array | None = None

    def __len__(self) -> int:
        return len(self._normalized)

    @property
    def backend(self) -> str:
        return "compiled" if self._compiled else "pure"

    def add(self, normalized: str) -> int:
        tris = trigrams(normalized)
        self._normalized.append(normalized)
        self._sets.append(tris)
        if self._compiled:
            vocab = self._vocab
            ids = array("i")
            for t in tris:
                tid = vocab.get(t)
                if tid is None:
                    tid = len(vocab)
                    vocab[t] = tid
                ids.append(tid)
            self._ids.append(array("i", sorted(ids)))
            self._flat = None  # invalidate packed cache
        return len(self._normalized) - 1

    def _packed(self) -> tuple[array, array]:
        if self._flat is None:
            flat = array("i")
            offsets = array("q", [0])
            for ids in self._ids:
                flat.extend(ids)
                offsets.append(len(flat))
            self._flat, self._offsets = flat, offsets
        return self._flat, self._offsets

    def scores(self, normalized_query: str) -> list[float]:
        """Similarity of the query against every indexed label, in order."""
        n = len(self._normalized)
        if n == 0:
            return []
        qtris = trigrams(normalized_query)
        if self._compiled:
            known = array("i", sorted(self._vocab[t] for t in qtris if t in self._vocab))
            flat, offsets = self._packed()
            out = array("d", bytes(8 * n))
            _trigram.jaccard_scores(known, len(qtris), flat, offsets, out)
            raw = out.tolist()
        else:
            raw = pure.jaccard_scores(qtris, self._sets)
        return [
            1.0 if self._normalized[i] == normalized_query else min(raw[i], FUZZY_CAP)
            for i in range(n)
        ]
