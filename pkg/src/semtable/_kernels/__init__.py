"""Scoring kernels: compiled extension when built, pure Python otherwise."""

try:
    from semtable._kernels import _trigram  # noqa: F401

    HAVE_COMPILED = True
except ImportError:  # extension not built on this install
    HAVE_COMPILED = False
