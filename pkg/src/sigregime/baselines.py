"""Comparator detectors: the shuffle-product variance norm and SIG-CON.

The variance norm is a Mahalanobis-like quadratic form on truncated
signature space whose matrix pairs basis words through the shuffle product
against the order-2N expected signature of a reference corpus.  SIG-CON
flags a path when the minimum variance-norm distance from its signature to
the corpus exceeds a calibrated quantile threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import CapacityError, NumericError
from .signature import signatures_flat

_ENTRY_CAP = 1_000_000


@lru_cache(maxsize=None)
def _shuffle(u: tuple, v: tuple) -> tuple:
    """Shuffle product of two words as ((word, multiplicity), ...)."""
    if not u:
        return ((v, 1),)
    if not v:
        return ((u, 1),)
    acc: dict[tuple, int] = {}
    for w, c in _shuffle(u[:-1], v):
        key = w + (u[-1],)
        acc[key] = acc.get(key, 0) + c
    for w, c in _shuffle(u, v[:-1]):
        key = w + (v[-1],)
        acc[key] = acc.get(key, 0) + c
    return tuple(sorted(acc.items()))


def shuffle_product(u, v) -> dict:
    """All order-preserving interleavings of two words, with multiplicities.

    Words are tuples of letters in {1, ..., d}; the empty word is the unit.
    """
    return {w: c for w, c in _shuffle(tuple(u), tuple(v))}


def _words_up_to(dimension: int, order: int) -> list[tuple]:
    """Basis words by length then lexicographic order, starting with the empty word."""
    words: list[tuple] = [()]
    level: list[tuple] = [()]
    for _ in range(order):
        level = [w + (a,) for w in level for a in range(1, dimension + 1)]
        words.extend(level)
    return words


def _word_index(word: tuple, dimension: int) -> int:
    """Index of a word in the flattened level-major signature layout."""
    offset = sum(dimension**l for l in range(len(word)))
    idx = 0
    for letter in word:
        idx = idx * dimension + (letter - 1)
    return offset + idx


def _basis_size(dimension: int, order: int) -> int:
    return sum(dimension**l for l in range(order + 1))


@dataclass(frozen=True)
class VarianceNormModel:
    """Quadratic form on order-N signature space built from a corpus.

    ``matrix`` is the shuffle-pairing matrix A; ``inverse`` its
    pseudo-inverse projected onto the PSD cone, so the form is nonnegative
    even when sampling noise makes A indefinite.  ``ill_conditioned`` flags
    that the pseudo-inverse truncated directions.
    """

    order: int
    dimension: int
    matrix: np.ndarray
    inverse: np.ndarray
    ill_conditioned: bool


def build_variance_norm(corpus: np.ndarray, order: int,
                        cutoff: float = 1e-10) -> VarianceNormModel:
    """Fit the variance-norm model from a corpus of paths.

    Args:
        corpus: (count, length, channels) array of reference paths.
        order: signature truncation N; the pairing needs the expected
            signature up to order 2N.
        cutoff: relative eigenvalue cutoff of the pseudo-inverse.
    """
    corpus = np.asarray(corpus, dtype=float)
    d = corpus.shape[2]
    if _basis_size(d, 2 * order) > _ENTRY_CAP:
        raise CapacityError(
            f"variance norm at order {order} in dimension {d} needs an order-{2 * order} "
            f"expected signature with {_basis_size(d, 2 * order)} entries (cap {_ENTRY_CAP})"
        )
    expected = signatures_flat(corpus, 2 * order, include_scalar=True).mean(axis=0)
    words = _words_up_to(d, order)
    dn = len(words)
    A = np.zeros((dn, dn))
    for i, u in enumerate(words):
        for j in range(i, dn):
            v = words[j]
            val = 0.0
            for w, c in _shuffle(u, v):
                val += c * expected[_word_index(w, d)]
            A[i, j] = val
            A[j, i] = val
    eigvals, eigvecs = np.linalg.eigh(A)
    scale = np.max(np.abs(eigvals))
    if scale == 0.0:
        raise NumericError("shuffle pairing matrix is identically zero")
    keep = eigvals > cutoff * scale
    inv_vals = np.zeros_like(eigvals)
    inv_vals[keep] = 1.0 / eigvals[keep]
    inverse = (eigvecs * inv_vals) @ eigvecs.T
    return VarianceNormModel(order, d, A, inverse, ill_conditioned=bool(np.any(~keep)))


def variance_norm(w: np.ndarray, model: VarianceNormModel) -> float:
    """Quadratic form <w, A^+ w> on a flattened order-N signature vector."""
    w = np.asarray(w, dtype=float)
    if w.shape[0] != model.matrix.shape[0]:
        raise ValueError(f"expected a vector of length {model.matrix.shape[0]}")
    return float(max(w @ model.inverse @ w, 0.0))


def conformance(x_signature: np.ndarray, corpus_signatures: np.ndarray,
                model: VarianceNormModel) -> float:
    """Minimum variance-norm distance from one signature to a corpus.

    Distance is the square root of the quadratic form of the difference.
    """
    x = np.atleast_2d(np.asarray(x_signature, dtype=float))
    return float(_conformance_many(x, np.asarray(corpus_signatures, dtype=float), model)[0])


def _conformance_many(xs: np.ndarray, corpus: np.ndarray, model: VarianceNormModel) -> np.ndarray:
    B = model.inverse
    qx = np.einsum("ni,ij,nj->n", xs, B, xs)
    qy = np.einsum("mi,ij,mj->m", corpus, B, corpus)
    cross = xs @ B @ corpus.T
    d2 = qx[:, None] - 2.0 * cross + qy[None, :]
    return np.sqrt(np.maximum(d2.min(axis=1), 0.0))


@dataclass(frozen=True)
class SigConResult:
    scores: np.ndarray
    threshold: float
    flags: np.ndarray
    model: VarianceNormModel


def sigcon_detect(observed: np.ndarray, corpus: np.ndarray, order: int,
                  alpha: float = 0.05, seed: int = 0) -> SigConResult:
    """Conformance-based anomaly detection against a reference corpus.

    The corpus is split into two equal halves; the variance-norm model and
    the reference signatures come from the second half, the null
    distribution of conformances from scoring the first half against it,
    and the threshold is the (1 - alpha) quantile.  Observed paths whose
    conformance exceeds the threshold are flagged.
    """
    corpus = np.asarray(corpus, dtype=float)
    n = corpus.shape[0]
    if n < 4:
        raise ValueError("corpus too small to split into calibration halves")
    rng = np.random.default_rng([int(seed) & (2**63 - 1), 0])
    perm = rng.permutation(n)
    half = n // 2
    first, second = perm[:half], perm[half:2 * half]
    model = build_variance_norm(corpus[second], order)
    sigs_second = signatures_flat(corpus[second], order, include_scalar=True)
    sigs_first = signatures_flat(corpus[first], order, include_scalar=True)
    null = _conformance_many(sigs_first, sigs_second, model)
    threshold = float(np.quantile(null, 1.0 - alpha, method="higher"))
    sigs_obs = signatures_flat(np.asarray(observed, dtype=float), order, include_scalar=True)
    scores = _conformance_many(sigs_obs, sigs_second, model)
    return SigConResult(scores, threshold, scores > threshold, model)
