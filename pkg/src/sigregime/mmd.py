"""MMD estimators, null distributions, critical values, and the two-sample test.

Null distributions come from three sources: bootstrapped pair draws from a
belief bank, a moment-matched Gamma fit, or a permutation resample of two
observed ensembles.  All of them expose a critical value at a confidence
level alpha and a distribution function for conformity quantiles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import gamma as gamma_dist

from .sigkernel import KernelSpec, PreparedPaths, cross_gram_batch, gram, prepare, self_gram_batch


def mmd_biased(gram_xx: np.ndarray, gram_xy: np.ndarray, gram_yy: np.ndarray) -> float:
    """Biased squared MMD estimate from Gram blocks, clamped at zero.

    (1/n^2) sum k(x,x) - (2/nm) sum k(x,y) + (1/m^2) sum k(y,y).
    """
    gxx = np.asarray(gram_xx, dtype=float)
    gxy = np.asarray(gram_xy, dtype=float)
    gyy = np.asarray(gram_yy, dtype=float)
    n, m = gxy.shape
    if gxx.shape != (n, n) or gyy.shape != (m, m):
        raise ValueError("inconsistent Gram block shapes")
    val = gxx.sum() / n**2 - 2.0 * gxy.sum() / (n * m) + gyy.sum() / m**2
    return max(float(val), 0.0)


def mmd_unbiased(gram_xx: np.ndarray, gram_xy: np.ndarray, gram_yy: np.ndarray) -> float:
    """Unbiased squared MMD estimate from Gram blocks; may be negative.

    Within-sample blocks use off-diagonal means, the cross block the full
    mean.
    """
    gxx = np.asarray(gram_xx, dtype=float)
    gxy = np.asarray(gram_xy, dtype=float)
    gyy = np.asarray(gram_yy, dtype=float)
    n, m = gxy.shape
    if n < 2 or m < 2:
        raise ValueError("the unbiased estimator needs at least two samples per side")
    if gxx.shape != (n, n) or gyy.shape != (m, m):
        raise ValueError("inconsistent Gram block shapes")
    xx = (gxx.sum() - np.trace(gxx)) / (n * (n - 1))
    yy = (gyy.sum() - np.trace(gyy)) / (m * (m - 1))
    xy = gxy.sum() / (n * m)
    return float(xx - 2.0 * xy + yy)


def _blocks_stat(gxx, gxy, gyy, biased: bool) -> float:
    return mmd_biased(gxx, gxy, gyy) if biased else mmd_unbiased(gxx, gxy, gyy)


def mmd_between(xs, ys, spec: KernelSpec = KernelSpec(), biased: bool = False) -> float:
    """Squared MMD between two path collections under a kernel spec."""
    gxx = gram(xs, spec=spec).values
    gyy = gram(ys, spec=spec).values
    gxy = gram(xs, ys, spec=spec).values
    return _blocks_stat(gxx, gxy, gyy, biased)


def batch_mmd(self_grams: np.ndarray, split: int, biased: bool = False) -> np.ndarray:
    """MMD statistics from stacked joint Grams of disjoint pairs.

    ``self_grams`` has shape (P, S, S) where rows [:split] of each Gram are
    the x-sample and the rest the y-sample.
    """
    gxx = self_grams[:, :split, :split]
    gxy = self_grams[:, :split, split:]
    gyy = self_grams[:, split:, split:]
    n = split
    m = self_grams.shape[1] - split
    cross = gxy.sum(axis=(1, 2)) / (n * m)
    if biased:
        xx = gxx.sum(axis=(1, 2)) / n**2
        yy = gyy.sum(axis=(1, 2)) / m**2
        return np.maximum(xx - 2 * cross + yy, 0.0)
    tr_x = np.trace(gxx, axis1=1, axis2=2)
    tr_y = np.trace(gyy, axis1=1, axis2=2)
    xx = (gxx.sum(axis=(1, 2)) - tr_x) / (n * (n - 1))
    yy = (gyy.sum(axis=(1, 2)) - tr_y) / (m * (m - 1))
    return xx - 2 * cross + yy


# ---------------------------------------------------------------------------
# Null distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NullDistribution:
    """Distribution of an MMD statistic under the null, with its critical value.

    ``source`` is one of "bootstrap", "gamma", "rolling", "permutation".
    Empirical sources keep their samples; the gamma source keeps the fitted
    (shape, scale, n) triple, where the fit models n times the statistic.
    """

    source: str
    alpha: float
    critical_value: float
    samples: np.ndarray | None = None
    shape: float | None = None
    scale: float | None = None
    n_samples: int | None = None

    def cdf(self, value: float) -> float:
        """Distribution function; used as a conformity quantile for scores."""
        if self.samples is not None:
            return float(np.mean(self.samples <= value))
        return float(gamma_dist.cdf(value * self.n_samples, self.shape, scale=self.scale))

    def quantile(self, q: float) -> float:
        if self.samples is not None:
            return float(np.quantile(self.samples, q, method="higher"))
        return float(gamma_dist.ppf(q, self.shape, scale=self.scale) / self.n_samples)


@dataclass(frozen=True)
class TestResult:
    statistic: float
    critical_value: float
    reject: bool


def draw_disjoint_pairs(bank_size: int, ensemble_size: int, n_pairs: int, seed: int) -> np.ndarray:
    """Index sets of 2*ensemble_size bank paths per draw, without replacement.

    Each draw uses its own counter-derived stream, so results are identical
    however the draws are scheduled.
    """
    if bank_size < 2 * ensemble_size:
        raise ValueError("bank too small to draw two disjoint ensembles")
    out = np.empty((n_pairs, 2 * ensemble_size), dtype=np.intp)
    for p in range(n_pairs):
        rng = np.random.default_rng([int(seed) & (2**63 - 1), p])
        out[p] = rng.choice(bank_size, size=2 * ensemble_size, replace=False)
    return out


def bootstrap_null(bank, ensemble_size: int, n_pairs: int,
                   spec: KernelSpec = KernelSpec(), seed: int = 0,
                   alpha: float = 0.05, biased: bool = False,
                   prepared: PreparedPaths | None = None) -> NullDistribution:
    """Bootstrapped null of the MMD between ensemble draws from one bank.

    Each of the ``n_pairs`` samples is the MMD between two disjoint
    ``ensemble_size``-subsets drawn jointly without replacement.  The
    critical value is the (1 - alpha) order statistic.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    px = prepared if prepared is not None else prepare(bank, spec)
    idx = draw_disjoint_pairs(len(px), ensemble_size, n_pairs, seed)
    grams = self_gram_batch(px, idx)
    samples = batch_mmd(grams, ensemble_size, biased=biased)
    crit = float(np.quantile(samples, 1.0 - alpha, method="higher"))
    return NullDistribution("bootstrap", alpha, crit, samples=samples)


def gamma_threshold(samples=None, moments: tuple | None = None,
                    n: int = 1, alpha: float = 0.05) -> NullDistribution:
    """Gamma approximation of an MMD null by moment matching.

    shape = mean^2 / var and scale = n * var / mean model the law of
    n * statistic, so the critical value in statistic units is the Gamma
    (1 - alpha)-quantile divided by n.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if moments is None:
        arr = np.asarray(samples, dtype=float)
        mean, var = float(arr.mean()), float(arr.var(ddof=1))
    else:
        mean, var = float(moments[0]), float(moments[1])
    if var <= 0.0 or mean <= 0.0:
        raise ValueError("gamma approximation needs positive mean and variance")
    shape = mean**2 / var
    scale = n * var / mean
    crit = float(gamma_dist.ppf(1.0 - alpha, shape, scale=scale) / n)
    return NullDistribution("gamma", alpha, crit, shape=shape, scale=scale, n_samples=n)


def permutation_null(xs, ys, spec: KernelSpec = KernelSpec(), n_permutations: int = 200,
                     seed: int = 0, alpha: float = 0.05, biased: bool = False) -> NullDistribution:
    """Permutation null: resplit the pooled samples and recompute the MMD."""
    px = prepare(xs, spec)
    py = prepare(ys, spec)
    pooled = np.concatenate([px.arrays, py.arrays], axis=0)
    prepared = PreparedPaths(pooled, px.spec)
    n = len(px)
    total = pooled.shape[0]
    idx = np.empty((n_permutations, total), dtype=np.intp)
    for p in range(n_permutations):
        rng = np.random.default_rng([int(seed) & (2**63 - 1), p])
        idx[p] = rng.permutation(total)
    grams = self_gram_batch(prepared, idx)
    samples = batch_mmd(grams, n, biased=biased)
    crit = float(np.quantile(samples, 1.0 - alpha, method="higher"))
    return NullDistribution("permutation", alpha, crit, samples=samples)


def two_sample_test(x_ensemble, y_ensemble, spec: KernelSpec,
                    null: NullDistribution, biased: bool = False) -> TestResult:
    """Reject equality of the two sampled laws iff the MMD exceeds c_alpha."""
    stat = mmd_between(x_ensemble, y_ensemble, spec, biased=biased)
    return TestResult(stat, null.critical_value, bool(stat > null.critical_value))
