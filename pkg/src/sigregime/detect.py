"""Online regime detectors.

Three detection modes share the kernel plumbing here:

  - detect_online: ensembles of observed sub-paths are tested against
    pre-simulated belief banks via MMD scores and per-belief critical values;
  - auto_evaluate / rolling_threshold: a non-parametric evaluator scores each
    ensemble against its own lagged predecessors and thresholds the score
    series with a rolling Gamma fit;
  - pathwise_detect: single sub-paths are scored against candidate banks with
    the kernel scoring rule (optionally re-simulating beliefs from the
    observed state for conditional, non-Markovian comparisons).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import gamma as gamma_dist

from .errors import ConfigError
from .mmd import NullDistribution, batch_mmd
from .models import ModelPair, simulate_model, _rng
from .scoring import SimilarityReport, _matrix_from_scores, _score_from_blocks
from .sigkernel import (KernelSpec, PreparedPaths, banded_self_gram, cross_gram_batch,
                        pair_kernels, prepare, self_gram_batch)
from .streams import StreamTransformer, SubPathSet, apply_transformer_tensor

_SEED_MASK = 2**63 - 1


# ---------------------------------------------------------------------------
# Beliefs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Beliefs:
    """Banks of reference sub-paths the detectors test observations against.

    Each bank is a (count, window_len, channels) array already carrying the
    experiment's transform pipeline and channel layout.  ``models`` is kept
    when the banks were simulated, enabling conditional re-simulation.
    """

    banks: tuple
    names: tuple
    models: tuple | None = None

    def __post_init__(self):
        banks = tuple(np.asarray(b, dtype=float) for b in self.banks)
        if not banks:
            raise ValueError("at least one belief bank is required")
        shape = banks[0].shape[1:]
        if any(b.shape[1:] != shape for b in banks):
            raise ValueError("all banks must share window length and channel count")
        object.__setattr__(self, "banks", banks)
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def k(self) -> int:
        return len(self.banks)

    @property
    def window_len(self) -> int:
        return self.banks[0].shape[1]


def build_beliefs(models, n_paths: int, window_len: int, mesh: float,
                  transformer: StreamTransformer | None = None,
                  include_time: bool = True, seed: int = 0, x0: float = 1.0) -> Beliefs:
    """Simulate and transform parametric belief banks.

    Each bank holds ``n_paths`` sub-paths of ``window_len`` observations on
    the same mesh as the evaluated data, passed through the same transform
    pipeline (volatility channels are appended when a model emits them).
    """
    banks, names = [], []
    for i, model in enumerate(models):
        prices, var = simulate_model(model, mesh, window_len - 1, n_paths,
                                     x0=x0, seed=_rng(seed, role=7000 + i))
        vals = prices if var is None else np.concatenate([prices, var], axis=2)
        ts = mesh * np.arange(window_len)
        ts_t, vals_t = apply_transformer_tensor(ts, vals, transformer)
        bank = np.concatenate([ts_t[:, :, None], vals_t], axis=2) if include_time else vals_t
        banks.append(bank)
        names.append(model.label())
    return Beliefs(tuple(banks), tuple(names), models=tuple(models))


# ---------------------------------------------------------------------------
# Block-sum helpers over a sub-path Gram matrix
# ---------------------------------------------------------------------------

def _sat(matrix: np.ndarray) -> np.ndarray:
    p = np.zeros((matrix.shape[0] + 1, matrix.shape[1] + 1))
    p[1:, 1:] = matrix.cumsum(axis=0).cumsum(axis=1)
    return p


def _window_mmd_series(K: np.ndarray, size: int, lag: int, biased: bool) -> np.ndarray:
    """MMD(ensemble_{i-lag}, ensemble_i) for all valid i, from one Gram matrix."""
    n1 = K.shape[0]
    n2 = n1 - size
    sat = _sat(K)
    diag = np.concatenate([[0.0], np.cumsum(np.diag(K))])

    def block(r0, c0):
        # vectorised block sums over start offsets r0, c0 (arrays)
        return sat[r0 + size, c0 + size] - sat[r0, c0 + size] - sat[r0 + size, c0] + sat[r0, c0]

    i = np.arange(lag, n2)
    xx = block(i - lag, i - lag)
    yy = block(i, i)
    xy = block(i - lag, i)
    out = np.full(n2, np.nan)
    if biased:
        out[i] = np.maximum(xx / size**2 - 2 * xy / size**2 + yy / size**2, 0.0)
    else:
        dx = diag[i - lag + size] - diag[i - lag]
        dy = diag[i + size] - diag[i]
        denom = size * (size - 1)
        out[i] = (xx - dx) / denom - 2 * xy / size**2 + (yy - dy) / denom
    return out


# ---------------------------------------------------------------------------
# Parametric (beliefs) detector
# ---------------------------------------------------------------------------

def _draw_bank_indices(bank_size: int, size: int, seed: int, belief: int,
                       key: int, n_evals: int) -> np.ndarray:
    out = np.empty((n_evals, size), dtype=np.intp)
    for l in range(n_evals):
        rng = np.random.default_rng([int(seed) & _SEED_MASK, belief, key, l])
        out[l] = rng.choice(bank_size, size=size, replace=False)
    return out


def score_vector(ensemble, beliefs: Beliefs, spec: KernelSpec,
                 n_evals: int = 1, seed: int = 0, draw_key: int = 0,
                 biased: bool = False, prepared_banks=None) -> np.ndarray:
    """Average MMD of one ensemble against draws from each belief bank.

    Entry i is the mean over ``n_evals`` repeat draws of the MMD between the
    ensemble and an equal-size random subset of bank i.  ``draw_key``
    namespaces the random draws (the online detector passes the ensemble
    index, making whole runs reproducible draw-for-draw).
    """
    ens = np.asarray(ensemble, dtype=float)
    size = ens.shape[0]
    pe = prepare(ens, spec)
    banks = prepared_banks or [prepare(b, spec) for b in beliefs.banks]
    gxx = self_gram_batch(pe, np.arange(size)[None, :])[0]
    out = np.empty(beliefs.k)
    for b, pb in enumerate(banks):
        idx = _draw_bank_indices(len(pb), size, seed, b, draw_key, n_evals)
        gyy = self_gram_batch(pb, idx)
        left = np.broadcast_to(np.arange(size), (n_evals, size))
        gxy = cross_gram_batch(pe, left, pb, idx)
        joint = np.empty((n_evals, 2 * size, 2 * size))
        joint[:, :size, :size] = gxx
        joint[:, :size, size:] = gxy
        joint[:, size:, :size] = np.swapaxes(gxy, 1, 2)
        joint[:, size:, size:] = gyy
        out[b] = batch_mmd(joint, size, biased=biased).mean()
    return out


@dataclass(frozen=True)
class DetectionReport:
    """Everything the online MMD detector produces for one evaluated stream."""

    score_matrix: np.ndarray       # (k, n_ensembles) progressive MMD scores
    critical_values: np.ndarray    # (k,) per-belief thresholds
    per_belief_flags: np.ndarray   # (k, n_ensembles) score > threshold
    anomalous: np.ndarray          # (n_ensembles,) flagged against every belief
    exceedance: np.ndarray         # (n_subpaths,) share of covering ensembles flagged
    quantiles: np.ndarray          # (k, n_ensembles) conformity quantiles under the nulls
    ensemble_size: int
    n_evals: int
    seed: int

    @property
    def n_ensembles(self) -> int:
        return self.score_matrix.shape[1]


def exceedance_fractions(flags: np.ndarray, n_subpaths: int, ensemble_size: int) -> np.ndarray:
    """Per-sub-path share of covering ensembles that were flagged.

    Sub-paths covered by no ensemble (the final one, by construction) get
    NaN.
    """
    n2 = flags.shape[0]
    out = np.full(n_subpaths, np.nan)
    for s in range(n_subpaths):
        lo = max(0, s - ensemble_size + 1)
        hi = min(s, n2 - 1)
        if hi >= lo:
            out[s] = float(np.mean(flags[lo:hi + 1]))
    return out


def detect_online(subpaths: np.ndarray, ensemble_size: int, beliefs: Beliefs,
                  nulls, spec: KernelSpec, n_evals: int = 1, seed: int = 0,
                  biased: bool = False) -> DetectionReport:
    """Run the MMD detector over the sliding ensembles of a sub-path tensor.

    Args:
        subpaths: (n_subpaths, window_len, channels) transformed tensor.
        ensemble_size: sub-paths per ensemble; ensembles slide with stride 1.
        beliefs: banks sharing the tensor's layout.
        nulls: one NullDistribution per belief.
        n_evals: repeat draws averaged into each score.

    An ensemble is anomalous when its score exceeds the critical value of
    every belief.  Scores in column k use only sub-paths up to index
    k + ensemble_size - 1, so the report is causal.
    """
    subpaths = np.asarray(subpaths, dtype=float)
    n1 = subpaths.shape[0]
    n2 = n1 - ensemble_size
    if n2 < 1:
        raise ValueError("not enough sub-paths for one ensemble")
    if len(nulls) != beliefs.k:
        raise ValueError("need exactly one null distribution per belief")
    pe = prepare(subpaths, spec)
    banks = [prepare(b, spec) for b in beliefs.banks]

    K = banded_self_gram(pe, band=ensemble_size)
    sat = _sat(K)
    diag = np.concatenate([[0.0], np.cumsum(np.diag(K))])
    starts = np.arange(n2)
    xx_sum = sat[starts + ensemble_size, starts + ensemble_size] - sat[starts, starts + ensemble_size] \
        - sat[starts + ensemble_size, starts] + sat[starts, starts]
    xx_diag = diag[starts + ensemble_size] - diag[starts]

    size = ensemble_size
    denom = size * (size - 1)
    scores = np.empty((beliefs.k, n2))
    windows = starts[:, None] + np.arange(size)[None, :]
    for b, pb in enumerate(banks):
        acc = np.zeros(n2)
        for l in range(n_evals):
            idx = np.empty((n2, size), dtype=np.intp)
            for k in range(n2):
                rng = np.random.default_rng([int(seed) & _SEED_MASK, b, k, l])
                idx[k] = rng.choice(len(pb), size=size, replace=False)
            gyy = self_gram_batch(pb, idx)
            gxy = cross_gram_batch(pe, windows, pb, idx)
            yy_sum = gyy.sum(axis=(1, 2))
            yy_diag = np.trace(gyy, axis1=1, axis2=2)
            xy_sum = gxy.sum(axis=(1, 2))
            if biased:
                acc += np.maximum((xx_sum - 2 * xy_sum + yy_sum) / size**2, 0.0)
            else:
                acc += (xx_sum - xx_diag) / denom - 2 * xy_sum / size**2 + (yy_sum - yy_diag) / denom
        scores[b] = acc / n_evals

    crits = np.array([null.critical_value for null in nulls])
    per_belief = scores > crits[:, None]
    anomalous = per_belief.all(axis=0)
    quantiles = np.array([[nulls[b].cdf(scores[b, k]) for k in range(n2)]
                          for b in range(beliefs.k)])
    exceed = exceedance_fractions(anomalous, n1, ensemble_size)
    return DetectionReport(scores, crits, per_belief, anomalous, exceed, quantiles,
                           ensemble_size, n_evals, seed)


# ---------------------------------------------------------------------------
# Non-parametric auto evaluator
# ---------------------------------------------------------------------------

def auto_evaluate(subpaths: np.ndarray, ensemble_size: int, lags,
                  weights=None, spec: KernelSpec = KernelSpec(),
                  biased: bool = False, distance: bool = False) -> np.ndarray:
    """Lagged self-evaluation score of each ensemble against its own past.

    Score_i = sum_l w_l * MMD(ensemble_{i-l}, ensemble_i), defined for
    i >= max(lags); earlier entries are NaN.  Weights default to uniform.
    With ``distance`` each lag contributes the MMD distance (square root of
    the clamped statistic) rather than the squared form; small lags overlap
    heavily and shrink in the squared form, so the distance scale is the one
    on which extra lags actually smooth the series.
    """
    lags = list(lags)
    if not lags or min(lags) < 1:
        raise ValueError("lags must be a nonempty collection of positive integers")
    if weights is None:
        weights = np.full(len(lags), 1.0 / len(lags))
    weights = np.asarray(weights, dtype=float)
    if weights.shape[0] != len(lags):
        raise ValueError("need exactly one weight per lag")
    subpaths = np.asarray(subpaths, dtype=float)
    n1 = subpaths.shape[0]
    n2 = n1 - ensemble_size
    if max(lags) >= n2:
        raise ValueError("largest lag leaves no ensembles to score")
    pe = prepare(subpaths, spec)
    K = banded_self_gram(pe, band=ensemble_size + max(lags))
    out = np.zeros(n2)
    defined = np.ones(n2, dtype=bool)
    for w, lag in zip(weights, lags):
        series = _window_mmd_series(K, ensemble_size, lag, biased)
        if distance:
            series = np.sqrt(np.maximum(series, 0.0))
        mask = np.isnan(series)
        defined &= ~mask
        out = out + w * np.where(mask, 0.0, series)
    out[~defined] = np.nan
    return out


@dataclass(frozen=True)
class RollingNull:
    """Rolling Gamma fit over trailing auto-evaluation scores.

    For each time t with a full window of W past defined scores, the Gamma
    with shape mean^2/var and scale W*var/mean models W times the score;
    the threshold is its (1-alpha) quantile in score units.  Windows with a
    non-positive mean or vanishing variance fall back to the empirical
    window quantile (recorded in ``fallback``).
    """

    window: int
    alpha: float
    shapes: np.ndarray
    scales: np.ndarray
    thresholds: np.ndarray
    fallback: np.ndarray
    burn_in: int


def rolling_threshold(scores: np.ndarray, window: int, alpha: float = 0.05):
    """Causal rolling thresholds and flags for an auto-evaluation score series.

    Returns (RollingNull, flags); flags are False through the burn-in and
    True where a defined score exceeds its rolling threshold.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    scores = np.asarray(scores, dtype=float)
    n = scores.shape[0]
    thresholds = np.full(n, np.nan)
    shapes = np.full(n, np.nan)
    scales = np.full(n, np.nan)
    fallback = np.zeros(n, dtype=bool)
    flags = np.zeros(n, dtype=bool)
    past: list[float] = []
    burn_in = n
    for t in range(n):
        if len(past) >= window:
            win = np.array(past[-window:])
            mean = win.mean()
            var = win.var(ddof=1)
            if mean > 0.0 and var > 1e-18 * max(mean**2, 1e-30):
                shape = mean**2 / var
                scale = window * var / mean
                thr = float(gamma_dist.ppf(1.0 - alpha, shape, scale=scale) / window)
                shapes[t], scales[t] = shape, scale
            else:
                thr = float(np.quantile(win, 1.0 - alpha, method="higher"))
                fallback[t] = True
            thresholds[t] = thr
            burn_in = min(burn_in, t)
            if np.isfinite(scores[t]):
                flags[t] = scores[t] > thr
        if np.isfinite(scores[t]):
            past.append(float(scores[t]))
    return RollingNull(window, alpha, shapes, scales, thresholds, fallback, burn_in), flags


# ---------------------------------------------------------------------------
# Path-by-path (single-sample) detector
# ---------------------------------------------------------------------------

def _conditional_bank(model: ModelPair, raw_window, n_samples: int,
                      transformer, include_time: bool, seed, key: int) -> np.ndarray:
    """Re-simulate a belief bank over one window from the observed state."""
    ts = raw_window.timestamps
    mesh = float(ts[1] - ts[0])
    d = model.dimension
    x0 = raw_window.values[0, :d]
    v0 = None
    if model.family == "rbergomi" and raw_window.values.shape[1] >= 2 * d:
        v0 = float(np.mean(raw_window.values[0, d:2 * d]))
    prices, var = simulate_model(model, mesh, len(ts) - 1, n_samples,
                                 x0=x0, v0=v0, seed=_rng(seed, role=key))
    vals = prices if var is None else np.concatenate([prices, var], axis=2)
    ts_t, vals_t = apply_transformer_tensor(ts, vals, transformer)
    if include_time:
        return np.concatenate([ts_t[:, :, None], vals_t], axis=2)
    return vals_t


def pathwise_detect(subpaths: SubPathSet, beliefs: Beliefs, n_samples: int,
                    spec: KernelSpec, seed: int = 0, conditional: bool = False,
                    transformer: StreamTransformer | None = None,
                    include_time: bool = True) -> SimilarityReport:
    """Similarity-score detection of single sub-paths against k belief banks.

    For each sub-path, every bank contributes one kernel score computed from
    a shared draw of ``n_samples`` paths, and the similarity matrix collects
    all pairwise score differences; positive entries flag greater closeness
    to the comparison bank.  With ``conditional`` set, banks are re-simulated
    per window from the observed initial state (price rescaling for gBm and
    Merton, spot-variance restart for rough Bergomi), so each comparison
    conditions on the information available at the window start.
    """
    if spec.rank != 1:
        raise ConfigError("pathwise detection uses scoring rules, which need a rank-1 kernel")
    if beliefs.k < 2:
        raise ValueError("pathwise detection needs at least two belief banks")
    if conditional and not beliefs.models:
        raise ConfigError("conditional pathwise detection needs model-backed beliefs")
    n1 = len(subpaths)
    k = beliefs.k
    scores = np.empty((n1, k))
    static_banks = None
    if not conditional:
        static_banks = [prepare(b, spec) for b in beliefs.banks]
        for b, pb in enumerate(static_banks):
            if len(pb) < n_samples:
                raise ValueError(f"bank {b} holds {len(pb)} paths, fewer than n_samples={n_samples}")
    for j in range(n1):
        raw = subpaths[j]
        ts_t, vals_t = apply_transformer_tensor(raw.timestamps[None, :], raw.values[None], transformer)
        x = np.concatenate([ts_t[:, :, None], vals_t], axis=2) if include_time else vals_t
        px = prepare(x, spec)
        for b in range(k):
            if conditional:
                bank = _conditional_bank(beliefs.models[b], raw, n_samples,
                                         transformer, include_time, seed, 9000 + j * k + b)
                pb = prepare(bank, spec)
                sub = pb
            else:
                pb = static_banks[b]
                rng = np.random.default_rng([int(seed) & _SEED_MASK, j, b])
                take = rng.choice(len(pb), size=n_samples, replace=False)
                sub = PreparedPaths(pb.arrays[take], pb.spec)
            gram_pp = self_gram_batch(sub, np.arange(n_samples)[None, :])[0]
            cross = pair_kernels(sub, px, np.arange(n_samples), np.zeros(n_samples, dtype=np.intp))
            scores[j, b] = _score_from_blocks(gram_pp, cross)
    matrices = np.stack([_matrix_from_scores(s) for s in scores])
    return SimilarityReport(matrices, scores, n_samples, seed, matrices > 0)
