"""Offline regime classification: pairwise MMD distances and agglomeration.

Ensembles slide with stride 1, so every ensemble-to-ensemble MMD reduces to
block sums over the sub-path Gram matrix; one Gram pass plus a summed-area
table yields the full distance matrix.  The agglomeration itself is the
standard bottom-up merge with Lance-Williams linkage updates and a
lowest-index tie-break.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sigkernel import KernelSpec, gram_from_prepared, prepare

_LINKAGES = ("max", "min", "average")


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric nonnegative matrix of MMD distances between ensembles."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[0] != vals.shape[1]:
            raise ValueError("distance matrix must be square")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.shape[0]


def distance_matrix(subpaths: np.ndarray, ensemble_size: int,
                    spec: KernelSpec = KernelSpec()) -> DistanceMatrix:
    """Pairwise MMD distances between all sliding ensembles of a sub-path tensor.

    Distances are the square root of the clamped biased squared MMD, so the
    diagonal is exactly zero and the matrix is symmetric by construction.
    """
    subpaths = np.asarray(subpaths, dtype=float)
    n1 = subpaths.shape[0]
    n2 = n1 - ensemble_size
    if n2 < 2:
        raise ValueError("need at least two ensembles for a distance matrix")
    pe = prepare(subpaths, spec)
    K = gram_from_prepared(pe)
    sat = np.zeros((n1 + 1, n1 + 1))
    sat[1:, 1:] = K.cumsum(axis=0).cumsum(axis=1)
    h = ensemble_size
    # block sums S[i, j] = sum of K over [i, i+h) x [j, j+h), all i, j at once
    S = sat[h:h + n2, h:h + n2] - sat[:n2, h:h + n2] - sat[h:h + n2, :n2] + sat[:n2, :n2]
    diag = np.diag(S)
    sq = diag[:, None] / h**2 - 2.0 * S / h**2 + diag[None, :] / h**2
    vals = np.sqrt(np.maximum(sq, 0.0))
    vals = 0.5 * (vals + vals.T)
    np.fill_diagonal(vals, 0.0)
    return DistanceMatrix(vals)


@dataclass(frozen=True)
class ClusterAssignment:
    """Result of agglomerative clustering over a distance matrix.

    ``labels`` maps each ensemble to 0..k-1, numbered by first appearance.
    ``merges`` logs (i, j, height) cluster-slot merges in order; slots are
    the original ensemble indices, with merged clusters living in the lower
    slot.
    """

    labels: np.ndarray
    k: int
    linkage: str
    merges: tuple


def agglomerate(distances: DistanceMatrix, k: int, linkage: str = "average") -> ClusterAssignment:
    """Bottom-up merging of the closest cluster pair until k clusters remain.

    Ties break on the smallest pair of cluster slots.  Linkage is one of
    "max", "min", "average".
    """
    if linkage not in _LINKAGES:
        raise ValueError(f"linkage must be one of {_LINKAGES}")
    n = len(distances)
    if not 1 <= k <= n:
        raise ValueError(f"cluster count must lie in [1, {n}]")
    W = distances.values.astype(float).copy()
    np.fill_diagonal(W, np.inf)
    sizes = np.ones(n)
    members: list[list[int] | None] = [[i] for i in range(n)]
    merges = []
    for _ in range(n - k):
        flat = np.argmin(W)
        i, j = divmod(int(flat), n)
        if i > j:
            i, j = j, i
        height = W[i, j]
        merges.append((i, j, float(height)))
        row_i, row_j = W[i], W[j]
        if linkage == "max":
            new_row = np.maximum(row_i, row_j)
        elif linkage == "min":
            new_row = np.minimum(row_i, row_j)
        else:
            new_row = (sizes[i] * row_i + sizes[j] * row_j) / (sizes[i] + sizes[j])
        W[i, :] = new_row
        W[:, i] = new_row
        W[i, i] = np.inf
        W[j, :] = np.inf
        W[:, j] = np.inf
        sizes[i] += sizes[j]
        members[i] = members[i] + members[j]  # type: ignore[operator]
        members[j] = None
    labels = np.empty(n, dtype=int)
    live = [m for m in members if m is not None]
    live.sort(key=min)
    for label, group in enumerate(live):
        labels[group] = label
    return ClusterAssignment(labels, k, linkage, tuple(merges))


def assign_subpath_labels(labels: np.ndarray, n_subpaths: int, ensemble_size: int) -> np.ndarray:
    """Average ensemble label over the ensembles containing each sub-path.

    Sub-paths covered by no ensemble (the final one, by construction of the
    sliding windows) are NaN.
    """
    labels = np.asarray(labels, dtype=float)
    n2 = labels.shape[0]
    out = np.full(n_subpaths, np.nan)
    for s in range(n_subpaths):
        lo = max(0, s - ensemble_size + 1)
        hi = min(s, n2 - 1)
        if hi >= lo:
            out[s] = float(np.mean(labels[lo:hi + 1]))
    return out
