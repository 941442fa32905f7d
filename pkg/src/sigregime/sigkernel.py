"""Signature-kernel evaluation: Goursat PDE solver, static lifts, Gram matrices.

The untruncated signature kernel of two piecewise-linear paths solves a
second-order hyperbolic (Goursat) equation whose data are the pairwise inner
products of path increments under the chosen static lift.  We solve it with
an explicit second-order update, sweeping anti-diagonals so that a whole
batch of path pairs advances in lockstep.  A dynamic-programming recursion
provides the order-N truncated kernel under the same static lifts, and the
rank-2 kernel evaluates the same PDE on expanding-window signature lifts.

Everything funnels through ``prepare`` + ``pair_kernels``: callers prepare a
path collection once (lift, refine) and then request kernel values for
arbitrary index pairs; evaluation is chunked but order-independent, so
results do not depend on batch or worker layout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CapacityError, NumericError
from .signature import signature_lift_batch
from .streams import TimeAugmentedStream

_CHUNK_BYTES = 1 << 26  # upper bound for one chunk of PDE grid data


@dataclass(frozen=True)
class KernelSpec:
    """Configuration of a signature-kernel evaluation.

    Attributes:
        rank: 1 for the plain signature kernel, 2 for the kernel on
            expanding-window signature lifts.
        lift: static lift applied to path values, "linear" or "rbf".
        sigma: bandwidths.  Rank 1 uses a single RBF bandwidth; rank 2 takes
            (inner_scale, outer_bandwidth), where the inner scale divides
            path values before the signature lift and the outer bandwidth
            parameterises the static kernel on lifted states.
        dyadic_order: grid-halving level of the PDE solver; each original
            increment is split 2**dyadic_order-fold.
        inner_order: truncation order of the rank-2 signature lift.
        truncated: evaluate the order-``trunc_level`` truncated kernel
            instead of solving the PDE (baseline mode, rank 1 only).
        trunc_level: truncation order N for truncated mode.
        trunc_cap: refuse truncated evaluation when d**N exceeds this cap.
    """

    rank: int = 1
    lift: str = "linear"
    sigma: float | tuple = 1.0
    dyadic_order: int = 2
    inner_order: int = 3
    truncated: bool = False
    trunc_level: int = 5
    trunc_cap: int = 1_000_000

    def __post_init__(self):
        if self.rank not in (1, 2):
            raise ValueError("rank must be 1 or 2")
        if self.lift not in ("linear", "rbf"):
            raise ValueError("lift must be 'linear' or 'rbf'")
        sig = tuple(float(s) for s in (self.sigma if isinstance(self.sigma, (tuple, list)) else (self.sigma,)))
        if any(s <= 0 for s in sig):
            raise ValueError("bandwidths must be positive")
        if self.rank == 2 and len(sig) < 2:
            sig = (sig[0], sig[0])
        object.__setattr__(self, "sigma", sig)
        if self.dyadic_order < 0 or int(self.dyadic_order) != self.dyadic_order:
            raise ValueError("dyadic_order must be a non-negative integer")
        if self.truncated and self.rank != 1:
            raise ValueError("truncated mode is defined for rank 1 only")
        if self.trunc_level < 1 or self.inner_order < 1:
            raise ValueError("truncation orders must be at least 1")

    @property
    def bandwidth(self) -> float:
        """RBF bandwidth of the static kernel at the outermost rank."""
        return self.sigma[-1]

    @property
    def inner_scale(self) -> float:
        """Divisor applied to path values before the rank-2 signature lift."""
        return self.sigma[0]


@dataclass(frozen=True)
class GramMatrix:
    """Kernel values between two path collections, shape (n, m)."""

    values: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise NumericError("Gram matrix contains non-finite entries")
        object.__setattr__(self, "values", vals)

    @property
    def shape(self):
        return self.values.shape


# ---------------------------------------------------------------------------
# Path preparation
# ---------------------------------------------------------------------------

def as_path_batch(paths) -> np.ndarray:
    """Coerce a stream, array, or sequence of either into a (B, L, C) array."""
    if isinstance(paths, TimeAugmentedStream):
        return paths.channels(include_time=False)[None]
    if isinstance(paths, np.ndarray):
        if paths.ndim == 3:
            return np.asarray(paths, dtype=float)
        if paths.ndim == 2:
            return np.asarray(paths, dtype=float)[None]
        if paths.ndim == 1:
            return np.asarray(paths, dtype=float)[None, :, None]
        raise ValueError("path arrays must have 1 to 3 dimensions")
    members = []
    for p in paths:
        if isinstance(p, TimeAugmentedStream):
            members.append(p.channels(include_time=False))
        else:
            arr = np.asarray(p, dtype=float)
            members.append(arr[:, None] if arr.ndim == 1 else arr)
    return np.stack(members)


def refine_paths(paths: np.ndarray, dyadic_order: int) -> np.ndarray:
    """Insert 2**dyadic_order - 1 linearly interpolated knots per segment."""
    if dyadic_order == 0:
        return paths
    f = 1 << dyadic_order
    base = paths[:, :-1]
    step = paths[:, 1:] - base
    w = np.arange(f) / f
    fine = base[:, :, None, :] + step[:, :, None, :] * w[None, None, :, None]
    B, L1, _, C = fine.shape
    return np.concatenate([fine.reshape(B, L1 * f, C), paths[:, -1:]], axis=1)


@dataclass(frozen=True)
class PreparedPaths:
    """A path collection readied for kernel evaluation (lifted and refined)."""

    arrays: np.ndarray          # (B, L', C'), refined unless truncated mode
    spec: KernelSpec            # effective rank-1 spec used at solve time

    def __len__(self) -> int:
        return self.arrays.shape[0]


def prepare(paths, spec: KernelSpec) -> PreparedPaths:
    """Lift (rank 2), guard capacity, and pre-refine a path collection."""
    arrays = as_path_batch(paths)
    d = arrays.shape[2]
    if spec.truncated:
        if d**spec.trunc_level > spec.trunc_cap:
            raise CapacityError(
                f"truncated kernel at order {spec.trunc_level} in dimension {d} "
                f"needs d^N = {d ** spec.trunc_level} entries per level (cap {spec.trunc_cap})"
            )
        return PreparedPaths(arrays, spec)
    if spec.rank == 2:
        if d**spec.inner_order > spec.trunc_cap:
            raise CapacityError(
                f"rank-2 lift at inner order {spec.inner_order} in dimension {d} exceeds the cap"
            )
        arrays = signature_lift_batch(arrays / spec.inner_scale, spec.inner_order)
        spec = KernelSpec(rank=1, lift=spec.lift, sigma=spec.bandwidth,
                          dyadic_order=spec.dyadic_order)
    return PreparedPaths(refine_paths(arrays, spec.dyadic_order), spec)


def _pair_data(X: np.ndarray, Y: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Static-lift increment products for matched path pairs, shape (K, m, n).

    Linear lift: raw increment inner products.  RBF lift: second mixed
    difference of the static kernel on knot values (the discrete kernel
    trick), so feature maps are never materialised.
    """
    if spec.lift == "linear":
        return np.einsum("kic,kjc->kij", np.diff(X, axis=1), np.diff(Y, axis=1), optimize=True)
    sq_x = np.einsum("kic,kic->ki", X, X)
    sq_y = np.einsum("kjc,kjc->kj", Y, Y)
    cross = np.einsum("kic,kjc->kij", X, Y, optimize=True)
    d2 = sq_x[:, :, None] + sq_y[:, None, :] - 2.0 * cross
    K = np.exp(-np.maximum(d2, 0.0) / (2.0 * spec.bandwidth**2))
    return K[:, 1:, 1:] - K[:, 1:, :-1] - K[:, :-1, 1:] + K[:, :-1, :-1]


# ---------------------------------------------------------------------------
# Goursat PDE solver
# ---------------------------------------------------------------------------

def goursat_solve_batch(data: np.ndarray) -> np.ndarray:
    """Solve the Goursat equation for a batch of increment-product grids.

    Args:
        data: array of shape (B, m, n); entry (b, i, j) is the inner product
            of increment i of path x_b with increment j of path y_b under
            the static lift.

    Returns:
        Array of shape (B,) with the kernel values f(T, T).

    The update is the explicit second-order stencil
        f[i+1, j+1] = (f[i+1, j] + f[i, j+1]) (1 + D/2 + D^2/12)
                      - f[i, j] (1 - D^2/12)
    swept along anti-diagonals with rolling buffers, so memory stays
    O(B * m) regardless of grid size.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim == 2:
        data = data[None]
    B, m, n = data.shape
    A = 1.0 + 0.5 * data + data**2 / 12.0
    C = 1.0 - data**2 / 12.0

    prev2 = np.ones((B, m + 1))  # diagonal s-2; entry a holds f[a, s-2-a]
    prev = np.ones((B, m + 1))   # diagonal s-1
    cur = np.ones((B, m + 1))
    rows = np.arange(m + 1)
    for s in range(2, m + n + 1):
        lo = max(1, s - n)
        hi = min(m, s - 1)
        r = rows[lo:hi + 1]
        cols = s - 1 - r
        a_coef = A[:, r - 1, cols]
        c_coef = C[:, r - 1, cols]
        cur[:, lo:hi + 1] = (prev[:, lo:hi + 1] + prev[:, lo - 1:hi]) * a_coef \
            - prev2[:, lo - 1:hi] * c_coef
        if s <= n:
            cur[:, 0] = 1.0
        if s <= m:
            cur[:, s] = 1.0
        prev2, prev, cur = prev, cur, prev2
    out = prev[:, m]
    if not np.all(np.isfinite(out)):
        raise NumericError("Goursat solve produced non-finite kernel values")
    return np.array(out)


# ---------------------------------------------------------------------------
# Truncated kernel (dynamic programming over levels)
# ---------------------------------------------------------------------------

def truncated_kernel_batch(data: np.ndarray, order: int) -> np.ndarray:
    """Order-N truncated signature kernel from increment-product grids.

    Exact for piecewise-linear paths: repeated use of a segment within one
    level carries the factorial weights of the segment tensor exponential.
    ``data`` has shape (B, m, n); returns shape (B,).
    """
    data = np.asarray(data, dtype=float)
    if data.ndim == 2:
        data = data[None]
    B, m, n = data.shape
    out = 1.0 + data.sum(axis=(1, 2))
    if order == 1:
        return out
    R = data[None, None]  # (x-repeats, y-repeats, B, m, n)
    for lev in range(1, order):
        width = min(lev + 1, order)
        nxt = np.empty((width, width, B, m, n))
        total = R.sum(axis=(0, 1))
        z = np.zeros_like(total)
        z[:, 1:, 1:] = total.cumsum(axis=1).cumsum(axis=2)[:, :-1, :-1]
        nxt[0, 0] = data * z
        for j in range(1, width):
            row = R[:, j - 1].sum(axis=0)
            zx = np.zeros_like(row)
            zx[:, 1:, :] = row.cumsum(axis=1)[:, :-1, :]
            nxt[0, j] = data * zx / (j + 1)
            col = R[j - 1].sum(axis=0)
            zy = np.zeros_like(col)
            zy[:, :, 1:] = col.cumsum(axis=2)[:, :, :-1]
            nxt[j, 0] = data * zy / (j + 1)
        for i in range(1, width):
            for j in range(1, width):
                nxt[i, j] = data * R[i - 1, j - 1] / ((i + 1) * (j + 1))
        R = nxt
        out = out + R.sum(axis=(0, 1, 3, 4))
    return out


# ---------------------------------------------------------------------------
# Pairwise evaluation plumbing
# ---------------------------------------------------------------------------

def pair_kernels(px: PreparedPaths, py: PreparedPaths,
                 idx_x: np.ndarray, idx_y: np.ndarray) -> np.ndarray:
    """Kernel values k(x[idx_x[k]], y[idx_y[k]]) for matched index arrays.

    Evaluation is chunked to bound memory; chunking never changes results.
    """
    if px.spec != py.spec:
        raise ValueError("prepared collections must share their kernel spec")
    spec = px.spec
    idx_x = np.asarray(idx_x, dtype=np.intp).ravel()
    idx_y = np.asarray(idx_y, dtype=np.intp).ravel()
    if idx_x.shape != idx_y.shape:
        raise ValueError("index arrays must have equal length")
    m = px.arrays.shape[1] - 1
    n = py.arrays.shape[1] - 1
    # working-set factor: the PDE keeps coefficient grids and buffers, the
    # truncated recursion carries (order x order) grid blocks per pair
    factor = (spec.trunc_level**2 + 2) if spec.truncated else 4
    per_pair = max(m * n * 8 * factor, 1)
    chunk = max(1, int(_CHUNK_BYTES // per_pair))
    out = np.empty(idx_x.shape[0])
    solver = (lambda d: truncated_kernel_batch(d, spec.trunc_level)) if spec.truncated \
        else goursat_solve_batch
    for lo in range(0, idx_x.shape[0], chunk):
        hi = min(lo + chunk, idx_x.shape[0])
        data = _pair_data(px.arrays[idx_x[lo:hi]], py.arrays[idx_y[lo:hi]], spec)
        out[lo:hi] = solver(data)
    return out


def gram(xs, ys=None, spec: KernelSpec = KernelSpec()) -> GramMatrix:
    """Kernel Gram matrix between two path collections.

    ``xs`` / ``ys`` are (count, length, channels) arrays or sequences of
    paths; omit ``ys`` (or pass the same object) for a symmetric self-Gram,
    in which case each unordered pair is evaluated exactly once.
    """
    symmetric = ys is None or ys is xs
    px = prepare(xs, spec)
    py = px if symmetric else prepare(ys, spec)
    nx, ny = len(px), len(py)
    if nx == 0 or ny == 0:
        raise ValueError("gram needs nonempty path collections")
    if px.arrays.shape[2] != py.arrays.shape[2]:
        raise ValueError("path collections must share their channel count")
    values = np.empty((nx, ny))
    if symmetric:
        iu, ju = np.triu_indices(nx)
        vals = pair_kernels(px, py, iu, ju)
        values[iu, ju] = vals
        values[ju, iu] = vals
    else:
        ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        values[:] = pair_kernels(px, py, ii.ravel(), jj.ravel()).reshape(nx, ny)
    return GramMatrix(values, symmetric=symmetric)


def self_gram_batch(prepared: PreparedPaths, index_sets: np.ndarray) -> np.ndarray:
    """Symmetric Grams of many index subsets of one prepared collection.

    ``index_sets`` has shape (P, S); returns (P, S, S) with each unordered
    pair within a subset evaluated once.
    """
    index_sets = np.asarray(index_sets, dtype=np.intp)
    P, S = index_sets.shape
    iu, ju = np.triu_indices(S)
    flat_x = index_sets[:, iu].ravel()
    flat_y = index_sets[:, ju].ravel()
    vals = pair_kernels(prepared, prepared, flat_x, flat_y).reshape(P, -1)
    out = np.empty((P, S, S))
    out[:, iu, ju] = vals
    out[:, ju, iu] = vals
    return out


def cross_gram_batch(px: PreparedPaths, idx_x: np.ndarray,
                     py: PreparedPaths, idx_y: np.ndarray) -> np.ndarray:
    """Cross Grams for matched subset pairs: (P, S1) x (P, S2) -> (P, S1, S2)."""
    idx_x = np.asarray(idx_x, dtype=np.intp)
    idx_y = np.asarray(idx_y, dtype=np.intp)
    P, S1 = idx_x.shape
    _, S2 = idx_y.shape
    flat_x = np.repeat(idx_x, S2, axis=1).ravel()
    flat_y = np.tile(idx_y, (1, S1)).ravel()
    return pair_kernels(px, py, flat_x, flat_y).reshape(P, S1, S2)


def banded_self_gram(prepared: PreparedPaths, band: int | None = None) -> np.ndarray:
    """Self-Gram of a prepared collection, restricted to |i - j| < band.

    Entries outside the band are zero; pass band=None for the full matrix.
    Used by detectors whose block sums only ever touch near-diagonal pairs.
    """
    n = len(prepared)
    if band is None or band >= n:
        return gram_from_prepared(prepared)
    ii, jj = [], []
    for i in range(n):
        hi = min(n, i + band)
        ii.append(np.full(hi - i, i))
        jj.append(np.arange(i, hi))
    ii = np.concatenate(ii)
    jj = np.concatenate(jj)
    vals = pair_kernels(prepared, prepared, ii, jj)
    out = np.zeros((n, n))
    out[ii, jj] = vals
    out[jj, ii] = vals
    return out


def gram_from_prepared(prepared: PreparedPaths) -> np.ndarray:
    """Full symmetric self-Gram values of a prepared collection."""
    n = len(prepared)
    iu, ju = np.triu_indices(n)
    vals = pair_kernels(prepared, prepared, iu, ju)
    out = np.empty((n, n))
    out[iu, ju] = vals
    out[ju, iu] = vals
    return out


# ---------------------------------------------------------------------------
# Scalar entry points
# ---------------------------------------------------------------------------

def solve_goursat(x, y, spec: KernelSpec = KernelSpec()) -> float:
    """Untruncated rank-1 signature kernel of two paths via the Goursat PDE."""
    if spec.rank != 1:
        raise ValueError("solve_goursat handles rank-1 kernels; use rank2_kernel otherwise")
    if spec.truncated:
        spec = KernelSpec(rank=1, lift=spec.lift, sigma=spec.sigma, dyadic_order=spec.dyadic_order)
    return float(pair_kernels(prepare(x, spec), prepare(y, spec), [0], [0])[0])


def truncated_kernel(x, y, order: int, spec: KernelSpec = KernelSpec()) -> float:
    """Level-wise inner product of order-N truncated signatures.

    Shares the static-lift machinery with the PDE solver, so RBF-lifted
    truncated kernels are available without materialising feature maps.
    """
    tspec = KernelSpec(rank=1, lift=spec.lift, sigma=spec.sigma, truncated=True,
                       trunc_level=order, trunc_cap=spec.trunc_cap)
    return float(pair_kernels(prepare(x, tspec), prepare(y, tspec), [0], [0])[0])


def rank2_kernel(x, y, spec: KernelSpec) -> float:
    """Signature kernel of the expanding-window signature lifts of two paths.

    The inner scale sigma[0] divides path values before lifting; the outer
    static kernel (with sigma[1]) and the PDE solve act on the lifted paths
    exactly as in the rank-1 case.
    """
    if spec.rank != 2:
        spec = KernelSpec(rank=2, lift=spec.lift, sigma=spec.sigma,
                          dyadic_order=spec.dyadic_order, inner_order=spec.inner_order)
    return float(pair_kernels(prepare(x, spec), prepare(y, spec), [0], [0])[0])


def sig_kernel(x, y, spec: KernelSpec = KernelSpec()) -> float:
    """Signature kernel under the given spec (PDE, truncated, or rank 2)."""
    return float(pair_kernels(prepare(x, spec), prepare(y, spec), [0], [0])[0])
