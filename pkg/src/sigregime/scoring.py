"""Signature-kernel scoring rule and similarity scores for set-to-point tests.

The kernel score penalises a candidate law (a bank of sample paths) against
a single observed path; differences of two such scores give the similarity
score whose sign indicates the closer law.  Scoring is restricted to rank-1
kernels: the rank-2 construction has no many-to-one estimator, so asking
for it is a configuration error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .sigkernel import (KernelSpec, PreparedPaths, cross_gram_batch, pair_kernels,
                        prepare, self_gram_batch)


def _require_rank1(spec: KernelSpec):
    if spec.rank != 1:
        raise ConfigError("scoring rules are defined for rank-1 kernels only")


def _score_from_blocks(gram_pp: np.ndarray, cross: np.ndarray) -> float:
    n = gram_pp.shape[0]
    within = (gram_pp.sum() - np.trace(gram_pp)) / (n * (n - 1))
    return float(within - 2.0 * cross.mean())


def kernel_score(ensemble, y, spec: KernelSpec = KernelSpec()) -> float:
    """Unbiased kernel scoring rule of a sample bank against one path.

    (1/(N(N-1))) sum_{i != j} k(x_i, x_j) - (2/N) sum_i k(x_i, y); lower is
    better (the rule is strictly proper).
    """
    _require_rank1(spec)
    pp = prepare(ensemble, spec)
    if len(pp) < 2:
        raise ValueError("kernel_score needs at least two sample paths")
    py = prepare(y, spec)
    n = len(pp)
    idx = np.arange(n)[None, :]
    gram_pp = self_gram_batch(pp, idx)[0]
    cross = pair_kernels(pp, py, np.arange(n), np.zeros(n, dtype=np.intp))
    return _score_from_blocks(gram_pp, cross)


def similarity_score(p_samples, q_samples, x, spec: KernelSpec = KernelSpec()) -> float:
    """Difference of kernel scores s(P, x) - s(Q, x).

    Negative values indicate x is closer to the law behind P, positive
    values closer to Q.
    """
    return kernel_score(p_samples, x, spec) - kernel_score(q_samples, x, spec)


@dataclass(frozen=True)
class SimilarityReport:
    """Similarity matrices of a sub-path sequence against k candidate banks.

    ``matrices`` has shape (n_subpaths, k, k-1): row i of matrix t holds
    Sigma^{bank_i, bank_j}(x_t) over all j != i in bank order.  ``scores``
    keeps the underlying kernel scores (n_subpaths, k).  ``flags`` marks
    positive entries.  Within one evaluation each bank's draw is shared
    across entries, making paired entries exact negations.
    """

    matrices: np.ndarray
    scores: np.ndarray
    n_samples: int
    seed: int
    flags: np.ndarray

    @property
    def n_subpaths(self) -> int:
        return self.matrices.shape[0]


def _matrix_from_scores(scores: np.ndarray) -> np.ndarray:
    """Turn per-bank scores (k,) into the (k, k-1) similarity matrix."""
    k = scores.shape[0]
    out = np.empty((k, k - 1))
    for i in range(k):
        out[i] = scores[i] - np.delete(scores, i)
    return out


def similarity_matrix(banks, x, n_samples: int, spec: KernelSpec = KernelSpec(),
                      seed: int = 0) -> np.ndarray:
    """Similarity matrix of one path against k banks with shared sampling.

    Each bank's ``n_samples`` draw is made once and reused across all
    entries, so the matrix is exactly antisymmetric in its paired entries.
    Returns shape (k, k-1).
    """
    _require_rank1(spec)
    if len(banks) < 2:
        raise ValueError("similarity_matrix needs at least two banks")
    scores = np.empty(len(banks))
    for i, bank in enumerate(banks):
        pb = prepare(bank, spec)
        if len(pb) < n_samples:
            raise ValueError(f"bank {i} holds {len(pb)} paths, fewer than n_samples={n_samples}")
        rng = np.random.default_rng([int(seed) & (2**63 - 1), i])
        idx = rng.choice(len(pb), size=n_samples, replace=False)
        sub = PreparedPaths(pb.arrays[idx], pb.spec)
        py = prepare(x, spec)
        gram_pp = self_gram_batch(sub, np.arange(n_samples)[None, :])[0]
        cross = pair_kernels(sub, py, np.arange(n_samples), np.zeros(n_samples, dtype=np.intp))
        scores[i] = _score_from_blocks(gram_pp, cross)
    return _matrix_from_scores(scores)
