"""Truncated signatures of piecewise-linear paths in the tensor algebra.

The signature of a piecewise-linear path is the iterated tensor product of
per-segment tensor exponentials of the knot increments, so everything here
reduces to two primitives: ``tensor_exp`` and the graded ``chen_product``.
Levels are stored densely; desk-scale dimensions keep d^M manageable.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial
from typing import Sequence

import numpy as np

from .errors import CapacityError
from .streams import TimeAugmentedStream

_DENSE_ENTRY_CAP = 5_000_000


def _check_capacity(dim: int, order: int):
    total = sum(dim**k for k in range(order + 1))
    if total > _DENSE_ENTRY_CAP:
        raise CapacityError(
            f"dense signature with d={dim}, order={order} needs {total} entries "
            f"(cap {_DENSE_ENTRY_CAP})"
        )


@dataclass(frozen=True)
class TruncatedTensorSeries:
    """Element of the order-M truncated tensor algebra over R^d.

    ``levels[k]`` is a dense array of shape (d,)*k; level 0 is the scalar 1
    for any signature.
    """

    dimension: int
    order: int
    levels: tuple

    def __post_init__(self):
        if len(self.levels) != self.order + 1:
            raise ValueError("expected one block per level 0..order")
        lv = []
        for k, a in enumerate(self.levels):
            a = np.asarray(a, dtype=float)
            if a.size != self.dimension**k:
                raise ValueError(f"level {k} must have d^{k} = {self.dimension ** k} entries")
            lv.append(a.reshape((self.dimension,) * k))
        object.__setattr__(self, "levels", tuple(lv))

    def level(self, k: int) -> np.ndarray:
        return self.levels[k]

    def flatten(self, include_scalar: bool = False) -> np.ndarray:
        """Concatenate levels (1..M by default) into a single vector."""
        blocks = [a.ravel() for a in self.levels[0 if include_scalar else 1:]]
        return np.concatenate(blocks) if blocks else np.zeros(0)

    def level_norms(self) -> np.ndarray:
        return np.array([np.linalg.norm(a.ravel()) for a in self.levels])

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, TruncatedTensorSeries)
            and self.dimension == other.dimension
            and self.order == other.order
            and all(np.array_equal(a, b) for a, b in zip(self.levels, other.levels))
        )


def unit_series(dimension: int, order: int) -> TruncatedTensorSeries:
    """The multiplicative unit (1, 0, 0, ...)."""
    levels = [np.ones(())] + [np.zeros((dimension,) * k) for k in range(1, order + 1)]
    return TruncatedTensorSeries(dimension, order, tuple(levels))


def tensor_exp(increment: Sequence[float] | np.ndarray, order: int) -> TruncatedTensorSeries:
    """Tensor exponential: level k equals v^{⊗k} / k!.

    This is the signature of a single straight-line segment with total
    increment v.
    """
    v = np.atleast_1d(np.asarray(increment, dtype=float))
    if v.ndim != 1:
        raise ValueError("increment must be a vector")
    if order < 1:
        raise ValueError("order must be at least 1")
    d = v.shape[0]
    _check_capacity(d, order)
    levels = [np.ones(())]
    block = np.ones(())
    for k in range(1, order + 1):
        block = np.multiply.outer(block, v) / k
        levels.append(block)
    return TruncatedTensorSeries(d, order, tuple(levels))


def chen_product(a: TruncatedTensorSeries, b: TruncatedTensorSeries) -> TruncatedTensorSeries:
    """Graded tensor-algebra product truncated at the common order.

    Level i of the output is sum_{l=0..i} a_l ⊗ b_{i-l}.  This realises
    Chen's identity: the signature of a concatenation of two paths is the
    product of their signatures.
    """
    if a.dimension != b.dimension or a.order != b.order:
        raise ValueError("operands must share dimension and order")
    d, M = a.dimension, a.order
    levels = [np.ones(())]
    for i in range(1, M + 1):
        acc = np.zeros((d,) * i)
        for l in range(i + 1):
            left = a.levels[l]
            right = b.levels[i - l]
            acc += np.multiply.outer(left, right).reshape((d,) * i)
        levels.append(acc)
    return TruncatedTensorSeries(d, M, tuple(levels))


# ---------------------------------------------------------------------------
# Batched flat-level kernels (shared by the public ops and by the rank-2
# pipelines, which need signatures of many sub-paths at once)
# ---------------------------------------------------------------------------

def _exp_levels_flat(inc: np.ndarray, order: int) -> list[np.ndarray]:
    """Flattened tensor-exponential levels for a batch of increments (B, d)."""
    B, d = inc.shape
    out = [np.ones((B, 1))]
    block = np.ones((B, 1))
    for k in range(1, order + 1):
        block = (block[:, :, None] * inc[:, None, :]).reshape(B, -1) / k
        out.append(block)
    return out


def _fold_segment(levels: list[np.ndarray], inc: np.ndarray, order: int, d: int):
    """In-place Chen product of running signatures with one segment exponential."""
    e = _exp_levels_flat(inc, order)
    B = inc.shape[0]
    for k in range(order, 0, -1):
        acc = levels[k] + e[k]
        for j in range(1, k):
            acc = acc + (levels[j][:, :, None] * e[k - j][:, None, :]).reshape(B, -1)
        levels[k] = acc


def signatures_batch(paths: np.ndarray, order: int) -> list[np.ndarray]:
    """Flattened signature levels of a batch of discrete paths.

    Args:
        paths: array of shape (B, L, d), each row a path of L knots.
        order: truncation order M.

    Returns:
        List of arrays [level 0 (B, 1), level 1 (B, d), ..., level M (B, d^M)].
    """
    paths = np.asarray(paths, dtype=float)
    if paths.ndim == 2:
        paths = paths[None]
    B, L, d = paths.shape
    if L < 2:
        raise ValueError("paths need at least two knots")
    _check_capacity(d, order)
    levels = [np.ones((B, 1))] + [np.zeros((B, d**k)) for k in range(1, order + 1)]
    for i in range(L - 1):
        inc = paths[:, i + 1] - paths[:, i]
        _fold_segment(levels, inc, order, d)
    return levels


def signatures_flat(paths: np.ndarray, order: int, include_scalar: bool = False) -> np.ndarray:
    """Stacked flattened signatures, shape (B, D) with D = sum d^k."""
    levels = signatures_batch(paths, order)
    return np.concatenate(levels if include_scalar else levels[1:], axis=1)


def signature_lift_batch(paths: np.ndarray, order: int) -> np.ndarray:
    """Expanding-window signatures along each path, flattened per knot.

    Output shape (B, L, D): row i holds the signature of the path restricted
    to knots [0, i], levels 1..M (the constant level 0 is dropped).  Row 0 is
    zero.
    """
    paths = np.asarray(paths, dtype=float)
    if paths.ndim == 2:
        paths = paths[None]
    B, L, d = paths.shape
    _check_capacity(d, order)
    D = sum(d**k for k in range(1, order + 1))
    out = np.zeros((B, L, D))
    levels = [np.ones((B, 1))] + [np.zeros((B, d**k)) for k in range(1, order + 1)]
    for i in range(L - 1):
        inc = paths[:, i + 1] - paths[:, i]
        _fold_segment(levels, inc, order, d)
        out[:, i + 1] = np.concatenate(levels[1:], axis=1)
    return out


# ---------------------------------------------------------------------------
# Public single-path operations
# ---------------------------------------------------------------------------

def _as_path_array(path, include_time: bool) -> np.ndarray:
    if isinstance(path, TimeAugmentedStream):
        return path.channels(include_time)
    arr = np.asarray(path, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def _levels_to_series(levels: list[np.ndarray], d: int, order: int, row: int = 0) -> TruncatedTensorSeries:
    blocks = [levels[k][row].reshape((d,) * k) for k in range(order + 1)]
    return TruncatedTensorSeries(d, order, tuple(blocks))


def truncated_signature(path, order: int, include_time: bool = False) -> TruncatedTensorSeries:
    """Truncated signature of the piecewise-linear interpolant of a path.

    ``path`` may be a TimeAugmentedStream (values only unless
    ``include_time`` prepends the time channel as coordinate 0) or a plain
    (L, d) array of knots.
    """
    arr = _as_path_array(path, include_time)
    levels = signatures_batch(arr[None], order)
    return _levels_to_series(levels, arr.shape[1], order)


def expected_signature(paths, order: int, include_time: bool = False) -> TruncatedTensorSeries:
    """Level-wise arithmetic mean of the member signatures of an ensemble.

    ``paths`` is a nonempty sequence of streams/arrays or a stacked array of
    shape (B, L, d).
    """
    if isinstance(paths, np.ndarray) and paths.ndim == 3:
        arrs = paths
    else:
        members = [_as_path_array(p, include_time) for p in paths]
        if len(members) == 0:
            raise ValueError("expected_signature needs a nonempty ensemble")
        arrs = np.stack(members)
    levels = signatures_batch(arrs, order)
    d = arrs.shape[2]
    blocks = [levels[k].mean(axis=0).reshape((d,) * k) for k in range(order + 1)]
    return TruncatedTensorSeries(d, order, tuple(blocks))


def signature_lift(stream, order: int, include_time: bool = False):
    """Expanding-window signature path used by the rank-2 kernel.

    For a stream input, returns a new TimeAugmentedStream on the same
    timestamps whose value at t_i is the flattened signature (levels 1..M)
    of the path restricted to [t_0, t_i]; the value at t_0 is the zero
    vector.  For an (L, d) array input, returns the lifted (L, D) array.
    """
    if isinstance(stream, TimeAugmentedStream):
        arr = stream.channels(include_time)
        lifted = signature_lift_batch(arr[None], order)[0]
        return TimeAugmentedStream(stream.timestamps, lifted)
    arr = _as_path_array(stream, include_time=False)
    return signature_lift_batch(arr[None], order)[0]


def signature_dot(a: TruncatedTensorSeries, b: TruncatedTensorSeries) -> float:
    """Inner product in the truncated tensor algebra (level-wise dot, level 0 included)."""
    if a.dimension != b.dimension or a.order != b.order:
        raise ValueError("operands must share dimension and order")
    return float(sum(np.dot(x.ravel(), y.ravel()) for x, y in zip(a.levels, b.levels)))


def factorial_decay_bound(one_variation: float, order: int) -> np.ndarray:
    """Upper bounds L^k / k! for the level norms of a path with 1-variation L."""
    return np.array([one_variation**k / factorial(k) for k in range(order + 1)])
