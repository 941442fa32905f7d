"""Discretely observed paths, stream transformations and window extraction.

A stream is an ordered set of (timestamp, value-vector) observations.  All
downstream inference runs on contiguous sub-path windows of a stream and on
sliding ensembles of those windows, so this module owns the slicing rules:
sub-paths are non-overlapping windows of a fixed observation count, while
ensembles slide over the sub-path sequence with stride one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class TimeAugmentedStream:
    """Ordered observations (t_i, x_i) with strictly increasing timestamps.

    ``values`` has shape (n, d); ``timestamps`` has shape (n,).  Instances
    are immutable and safe to share across workers.
    """

    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if ts.ndim != 1:
            raise ValueError("timestamps must be one-dimensional")
        if vals.ndim != 2 or vals.shape[0] != ts.shape[0]:
            raise ValueError("values must have shape (len(timestamps), d)")
        if ts.shape[0] < 2:
            raise ValueError("a stream needs at least two observations")
        if not np.all(np.diff(ts) > 0):
            raise ValueError("timestamps must be strictly increasing")
        if not (np.all(np.isfinite(ts)) and np.all(np.isfinite(vals))):
            raise ValueError("stream entries must be finite")
        ts.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.timestamps.shape[0]

    @property
    def dimension(self) -> int:
        return self.values.shape[1]

    def slice(self, start: int, stop: int) -> "TimeAugmentedStream":
        """Contiguous observation window [start, stop)."""
        return TimeAugmentedStream(self.timestamps[start:stop], self.values[start:stop])

    def channels(self, include_time: bool = True) -> np.ndarray:
        """Return the stream as a plain (n, d) or (n, 1+d) array.

        With ``include_time`` the timestamp becomes coordinate 0, which is
        the representation fed to signature kernels in the experiment
        pipelines.
        """
        if include_time:
            return np.column_stack([self.timestamps, self.values])
        return np.array(self.values)


def embed_linear(stream: TimeAugmentedStream, t: float) -> np.ndarray:
    """Evaluate the piecewise-linear interpolant of the stream at time t.

    Exact at every knot; raises ValueError outside [t_0, t_n].
    """
    ts = stream.timestamps
    if t < ts[0] or t > ts[-1]:
        raise ValueError(f"t={t} outside the stream time range [{ts[0]}, {ts[-1]}]")
    i = int(np.searchsorted(ts, t, side="right")) - 1
    if i >= len(ts) - 1:
        return np.array(stream.values[-1])
    w = (t - ts[i]) / (ts[i + 1] - ts[i])
    return (1.0 - w) * stream.values[i] + w * stream.values[i + 1]


# ---------------------------------------------------------------------------
# Stream transformations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Transform:
    """Descriptor of a single stream transformation.

    Supported kinds:
      - "time-normalise": timestamps become i/n on (0, 1], values unchanged
      - "state-normalise": values divided component-wise by the first value
      - "increment": x_0 plus the running sum of |x_i - x_{i-1}| per component
      - "scale": values multiplied (Hadamard) by a scalar or d-vector
      - "lead-lag": interleaves current and next value, (n, d) -> (2n-1, 2d)
    """

    kind: str
    param: float | Sequence[float] | None = None

    _KINDS = ("time-normalise", "state-normalise", "increment", "scale", "lead-lag")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}; expected one of {self._KINDS}")
        if self.kind == "scale" and self.param is None:
            raise ValueError("scale transform needs a scalar or vector parameter")


def _time_normalise(stream: TimeAugmentedStream) -> TimeAugmentedStream:
    n = len(stream)
    return TimeAugmentedStream(np.arange(1, n + 1) / n, stream.values)


def _state_normalise(stream: TimeAugmentedStream) -> TimeAugmentedStream:
    x0 = stream.values[0]
    if np.any(x0 == 0.0):
        raise ValueError("state normalisation undefined: initial value has a zero component")
    return TimeAugmentedStream(stream.timestamps, stream.values / x0)


def _increment(stream: TimeAugmentedStream) -> TimeAugmentedStream:
    incr = np.abs(np.diff(stream.values, axis=0))
    out = np.vstack([stream.values[0], stream.values[0] + np.cumsum(incr, axis=0)])
    return TimeAugmentedStream(stream.timestamps, out)


def _scale(stream: TimeAugmentedStream, lam) -> TimeAugmentedStream:
    lam = np.asarray(lam, dtype=float)
    if lam.ndim > 1 or (lam.ndim == 1 and lam.shape[0] != stream.dimension):
        raise ValueError(f"scale parameter must be scalar or a {stream.dimension}-vector")
    return TimeAugmentedStream(stream.timestamps, stream.values * lam)


def _lead_lag(stream: TimeAugmentedStream) -> TimeAugmentedStream:
    x = stream.values
    n, d = x.shape
    out = np.empty((2 * n - 1, 2 * d))
    out[0::2, :d] = x
    out[0::2, d:] = x
    out[1::2, :d] = x[:-1]
    out[1::2, d:] = x[1:]
    # the doubled state sequence needs 2n-1 strictly increasing timestamps
    ts = np.linspace(stream.timestamps[0], stream.timestamps[-1], 2 * n - 1)
    return TimeAugmentedStream(ts, out)


def apply_transform(transform: Transform | str, stream: TimeAugmentedStream) -> TimeAugmentedStream:
    """Apply a single transformation to a stream, returning a new stream."""
    if isinstance(transform, str):
        transform = Transform(transform)
    if transform.kind == "time-normalise":
        return _time_normalise(stream)
    if transform.kind == "state-normalise":
        return _state_normalise(stream)
    if transform.kind == "increment":
        return _increment(stream)
    if transform.kind == "scale":
        return _scale(stream, transform.param)
    return _lead_lag(stream)


@dataclass(frozen=True)
class StreamTransformer:
    """Ordered composition of transformations, applied right-to-left.

    ``StreamTransformer([a, b, c])`` applies c first, then b, then a,
    mirroring functional composition a ∘ b ∘ c.  An empty list is the
    identity.
    """

    transforms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        normalised = tuple(
            t if isinstance(t, Transform) else Transform(**t) if isinstance(t, dict) else Transform(t)
            for t in self.transforms
        )
        object.__setattr__(self, "transforms", normalised)

    def __call__(self, stream: TimeAugmentedStream) -> TimeAugmentedStream:
        for t in reversed(self.transforms):
            stream = apply_transform(t, stream)
        return stream

    def output_dimension(self, input_dim: int) -> int:
        dim = input_dim
        for t in reversed(self.transforms):
            if t.kind == "lead-lag":
                dim *= 2
        return dim


def compose(transforms: Sequence[Transform | str | dict]) -> StreamTransformer:
    """Build a transformer from descriptors; order is significant (right-to-left)."""
    return StreamTransformer(tuple(transforms))


# ---------------------------------------------------------------------------
# Sub-paths and ensembles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SubPathSet:
    """Contiguous non-overlapping windows of ``window_len`` observations.

    Exactly floor(N / window_len) windows are produced in stream order;
    trailing remainder observations are dropped.
    """

    window_len: int
    subpaths: tuple

    def __len__(self) -> int:
        return len(self.subpaths)

    def __getitem__(self, i: int) -> TimeAugmentedStream:
        return self.subpaths[i]

    def transformed(self, transformer: StreamTransformer | None) -> "SubPathSet":
        if transformer is None or not transformer.transforms:
            return self
        return SubPathSet(self.window_len, tuple(transformer(s) for s in self.subpaths))

    def as_tensor(self, include_time: bool = True) -> np.ndarray:
        """Stack sub-paths into an array of shape (count, length, channels)."""
        return np.stack([s.channels(include_time) for s in self.subpaths])


def extract_subpaths(stream: TimeAugmentedStream, window_len: int) -> SubPathSet:
    """Split a stream into floor(N / window_len) ordered sub-paths."""
    if window_len < 2:
        raise ValueError("window_len must be at least 2")
    n = len(stream)
    count = n // window_len
    if count < 1:
        raise ValueError(f"stream of length {n} too short for window_len={window_len}")
    subs = tuple(stream.slice(j * window_len, (j + 1) * window_len) for j in range(count))
    return SubPathSet(window_len, subs)


@dataclass(frozen=True)
class EnsembleSet:
    """Sliding windows of ``ensemble_size`` consecutive sub-paths, stride 1.

    Ensemble k holds sub-paths k .. k+ensemble_size-1 and represents an
    empirical measure with equal weights.  The count is
    n_subpaths - ensemble_size, so consecutive ensembles overlap in
    ensemble_size - 1 sub-paths.
    """

    subpath_set: SubPathSet
    ensemble_size: int

    def __post_init__(self):
        if self.ensemble_size < 2:
            raise ValueError("ensemble_size must be at least 2")
        if len(self.subpath_set) <= self.ensemble_size:
            raise ValueError(
                f"{len(self.subpath_set)} sub-paths cannot form ensembles of size {self.ensemble_size}"
            )

    def __len__(self) -> int:
        return len(self.subpath_set) - self.ensemble_size

    def window(self, k: int) -> tuple[int, int]:
        """Sub-path index range [start, stop) forming ensemble k."""
        if not 0 <= k < len(self):
            raise IndexError(f"ensemble index {k} out of range")
        return k, k + self.ensemble_size

    def member_paths(self, k: int) -> tuple:
        start, stop = self.window(k)
        return self.subpath_set.subpaths[start:stop]

    def covering_ensembles(self, subpath_index: int) -> range:
        """Indices of ensembles containing the given sub-path (may be empty)."""
        lo = max(0, subpath_index - self.ensemble_size + 1)
        hi = min(subpath_index, len(self) - 1)
        return range(lo, hi + 1)


def extract_ensembles(subpaths: SubPathSet, ensemble_size: int) -> EnsembleSet:
    """Group sub-paths into sliding ensembles of the given size."""
    return EnsembleSet(subpaths, ensemble_size)


# ---------------------------------------------------------------------------
# Batched pipeline helpers
# ---------------------------------------------------------------------------

def apply_transformer_tensor(timestamps: np.ndarray, values: np.ndarray,
                             transformer: StreamTransformer | None):
    """Vectorised transformer application over a batch of equal-length paths.

    Args:
        timestamps: shape (L,) shared by the batch, or (B, L) per path.
        values: shape (B, L, d).
        transformer: composition to apply right-to-left (None for identity).

    Returns:
        (timestamps (B, L'), values (B, L', p)) after all transformations.

    Semantically identical to applying the transformer to each path as a
    stream; value transforms never read timestamps, so the batch layout is
    safe even when paths carry different clocks.
    """
    values = np.asarray(values, dtype=float)
    B, L, d = values.shape
    ts = np.asarray(timestamps, dtype=float)
    if ts.ndim == 1:
        ts = np.broadcast_to(ts, (B, L)).copy()
    if transformer is None:
        return ts, values
    for t in reversed(transformer.transforms):
        if t.kind == "time-normalise":
            n = ts.shape[1]
            ts = np.broadcast_to(np.arange(1, n + 1) / n, ts.shape).copy()
        elif t.kind == "state-normalise":
            x0 = values[:, :1, :]
            if np.any(x0 == 0.0):
                raise ValueError("state normalisation undefined: an initial value has a zero component")
            values = values / x0
        elif t.kind == "increment":
            incr = np.abs(np.diff(values, axis=1))
            values = np.concatenate(
                [values[:, :1], values[:, :1] + np.cumsum(incr, axis=1)], axis=1)
        elif t.kind == "scale":
            lam = np.asarray(t.param, dtype=float)
            values = values * lam
        else:  # lead-lag
            Bc, Lc, dc = values.shape
            out = np.empty((Bc, 2 * Lc - 1, 2 * dc))
            out[:, 0::2, :dc] = values
            out[:, 0::2, dc:] = values
            out[:, 1::2, :dc] = values[:, :-1]
            out[:, 1::2, dc:] = values[:, 1:]
            w = np.linspace(0.0, 1.0, 2 * Lc - 1)
            ts = ts[:, :1] * (1 - w) + ts[:, -1:] * w
            values = out
    return ts, values


def subpath_tensor(stream: TimeAugmentedStream, window_len: int,
                   transformer: StreamTransformer | None = None,
                   include_time: bool = True) -> np.ndarray:
    """Transformed sub-path windows stacked for kernel evaluation.

    Returns shape (n_subpaths, window_len', channels); with ``include_time``
    the (possibly normalised) clock becomes coordinate 0, matching the
    representation the detection pipelines feed to signature kernels.
    """
    n = len(stream)
    count = n // window_len
    if window_len < 2 or count < 1:
        raise ValueError("stream too short for the requested window length")
    used = count * window_len
    vals = stream.values[:used].reshape(count, window_len, stream.dimension)
    ts = stream.timestamps[:used].reshape(count, window_len)
    ts, vals = apply_transformer_tensor(ts, vals, transformer)
    if include_time:
        return np.concatenate([ts[:, :, None], vals], axis=2)
    return vals
