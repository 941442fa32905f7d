"""Synthetic path generators and the Poisson regime-switching simulator.

All simulators draw from counter-based Philox streams keyed by (seed, role),
with draws laid out path-major, so enlarging a batch never perturbs the paths
already in it and parallel callers see identical output for a given seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import hyp2f1

from .errors import NumericError
from .streams import TimeAugmentedStream

_FAMILIES = ("gbm", "merton", "rbergomi")


@dataclass(frozen=True)
class ModelPair:
    """A model family together with its parameter vector.

    theta by family:
      gbm:      (mu, sigma)
      merton:   (mu, sigma, jump_intensity, jump_mean, jump_std)
      rbergomi: (xi0, eta, rho, hurst)
    """

    family: str
    theta: tuple
    dimension: int = 1
    emit_volatility: bool = False

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}")
        th = tuple(float(v) for v in self.theta)
        object.__setattr__(self, "theta", th)
        if self.family == "gbm":
            if len(th) != 2 or th[1] < 0:
                raise ValueError("gbm needs theta=(mu, sigma) with sigma >= 0")
        elif self.family == "merton":
            if len(th) != 5 or th[1] < 0 or th[2] < 0 or th[4] < 0:
                raise ValueError("merton needs (mu, sigma, lam, gamma, delta) with sigma, lam, delta >= 0")
        else:
            if len(th) != 4:
                raise ValueError("rbergomi needs (xi0, eta, rho, hurst)")
            xi0, _, rho, hurst = th
            if xi0 <= 0 or not -1.0 <= rho <= 1.0 or not 0.0 < hurst < 1.0:
                raise ValueError("rbergomi requires xi0 > 0, rho in [-1, 1], hurst in (0, 1)")
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if self.emit_volatility and self.family != "rbergomi":
            # constant-volatility families emit a flat variance channel
            pass

    def label(self) -> str:
        return f"{self.family}{self.theta}"


def _rng(seed, role: int = 0) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1), int(role)]))


# ---------------------------------------------------------------------------
# Elementary models
# ---------------------------------------------------------------------------

def simulate_gbm(theta, dimension: int, mesh: float, n_steps: int, n_paths: int,
                 x0: float | np.ndarray = 1.0, seed=0) -> np.ndarray:
    """Geometric Brownian motion via the exact log-Euler scheme.

    Returns an array of shape (n_paths, n_steps + 1, dimension); components
    are independent for dimension > 1.
    """
    mu, sigma = theta
    rng = _rng(seed)
    z = rng.standard_normal((n_paths, n_steps, dimension))
    log_ret = (mu - 0.5 * sigma**2) * mesh + sigma * np.sqrt(mesh) * z
    out = np.empty((n_paths, n_steps + 1, dimension))
    out[:, 0] = np.asarray(x0, dtype=float)
    out[:, 1:] = out[:, :1] * np.exp(np.cumsum(log_ret, axis=1))
    return out


def simulate_merton(theta, dimension: int, mesh: float, n_steps: int, n_paths: int,
                    x0: float | np.ndarray = 1.0, seed=0) -> np.ndarray:
    """Merton jump diffusion: gBm step compounded with lognormal jumps.

    Jump counts per step are Poisson(lam * mesh); given k jumps the total
    log jump is N(k * gamma, k * delta^2).  With lam = 0 the Brownian draws
    coincide with simulate_gbm under the same seed, so paths match bitwise.
    """
    mu, sigma, lam, gamma, delta = theta
    rng = _rng(seed)
    z = rng.standard_normal((n_paths, n_steps, dimension))
    counts = _rng(seed, role=1).poisson(lam * mesh, size=(n_paths, n_steps, dimension))
    zj = _rng(seed, role=2).standard_normal((n_paths, n_steps, dimension))
    log_jump = counts * gamma + delta * np.sqrt(counts) * zj
    log_ret = (mu - 0.5 * sigma**2) * mesh + sigma * np.sqrt(mesh) * z + log_jump
    out = np.empty((n_paths, n_steps + 1, dimension))
    out[:, 0] = np.asarray(x0, dtype=float)
    out[:, 1:] = out[:, :1] * np.exp(np.cumsum(log_ret, axis=1))
    return out


# -- rough Bergomi -----------------------------------------------------------

_CHOL_CACHE: dict = {}
_CHOL_CACHE_MAX = 8


def _volterra_price_cholesky(n_steps: int, mesh: float, hurst: float, rho: float) -> np.ndarray:
    """Cholesky factor of the joint law of (Y_{t_1..t_n}, W_{t_1..t_n}).

    Y is the Volterra process with kernel sqrt(2a+1) (t-s)^a, a = H - 1/2,
    so Var[Y_t] = t^{2H} exactly.  Covariances are evaluated in closed form
    (Gauss hypergeometric for the Y block), giving a scheme exact in law on
    the grid.
    """
    key = (n_steps, round(mesh, 14), round(hurst, 12), round(rho, 12))
    if key in _CHOL_CACHE:
        return _CHOL_CACHE[key]
    a = hurst - 0.5
    t = mesh * np.arange(1, n_steps + 1)
    s = np.minimum(t[:, None], t[None, :])
    u = np.maximum(t[:, None], t[None, :])
    # Cov(Y_s, Y_t) = (2a+1)/(a+1) * s^(a+1) t^a * 2F1(-a, 1, a+2, s/t), s <= t
    cov_yy = ((2 * a + 1) / (a + 1)) * s ** (a + 1) * u**a * hyp2f1(-a, 1.0, a + 2.0, s / u)
    cov_ww = s
    # Cov(Y_t, W_s) = rho sqrt(2a+1)/(a+1) (t^(a+1) - (t - min(s,t))^(a+1))
    tt = t[:, None]
    ss = np.minimum(tt, t[None, :])
    cov_yw = rho * (np.sqrt(2 * a + 1) / (a + 1)) * (tt ** (a + 1) - (tt - ss) ** (a + 1))
    cov = np.block([[cov_yy, cov_yw], [cov_yw.T, cov_ww]])
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericError(
            "joint Volterra/Brownian covariance is not numerically positive definite; "
            "a small diagonal jitter or a coarser grid may help"
        ) from exc
    if len(_CHOL_CACHE) >= _CHOL_CACHE_MAX:
        _CHOL_CACHE.pop(next(iter(_CHOL_CACHE)))
    _CHOL_CACHE[key] = chol
    return chol


def simulate_rbergomi(theta, dimension: int, mesh: float, n_steps: int, n_paths: int,
                      x0: float | np.ndarray = 1.0, v0: float | None = None,
                      seed=0) -> tuple[np.ndarray, np.ndarray]:
    """Rough Bergomi price and variance paths by exact Gaussian simulation.

    V_t = xi0 * exp(eta * Y_t - 0.5 * eta^2 * t^(2H)) with Y the Volterra
    Gaussian process; prices follow the log-Euler step with the price
    Brownian correlated to the Volterra driver at rho.  ``v0`` overrides the
    flat forward variance (used when restarting from an observed state).

    Returns (prices, variances), each of shape (n_paths, n_steps + 1, dimension).
    """
    xi0, eta, rho, hurst = theta
    if v0 is not None:
        xi0 = float(v0)
    chol = _volterra_price_cholesky(n_steps, mesh, hurst, rho)
    rng = _rng(seed)
    z = rng.standard_normal((n_paths, dimension, 2 * n_steps))
    joint = np.einsum("kl,pdl->pdk", chol, z)
    y = joint[:, :, :n_steps]
    w = joint[:, :, n_steps:]
    t = mesh * np.arange(1, n_steps + 1)
    var = xi0 * np.exp(eta * y - 0.5 * eta**2 * t ** (2 * hurst))
    variances = np.concatenate([np.full((n_paths, dimension, 1), xi0), var], axis=2)
    dw = np.diff(np.concatenate([np.zeros((n_paths, dimension, 1)), w], axis=2), axis=2)
    v_start = variances[:, :, :-1]
    log_ret = -0.5 * v_start * mesh + np.sqrt(v_start) * dw
    prices = np.empty((n_paths, dimension, n_steps + 1))
    prices[:, :, 0] = np.asarray(x0, dtype=float)
    prices[:, :, 1:] = prices[:, :, :1] * np.exp(np.cumsum(log_ret, axis=2))
    return prices.transpose(0, 2, 1), variances.transpose(0, 2, 1)


def simulate_model(model: ModelPair, mesh: float, n_steps: int, n_paths: int,
                   x0=1.0, v0=None, seed=0) -> tuple[np.ndarray, np.ndarray | None]:
    """Dispatch a simulation, returning (prices, variances-or-None).

    Constant-volatility families report a flat variance channel when the
    model asks for volatility emission.
    """
    if model.family == "gbm":
        paths = simulate_gbm(model.theta, model.dimension, mesh, n_steps, n_paths, x0, seed)
        var = None
        if model.emit_volatility:
            var = np.full_like(paths, model.theta[1] ** 2)
    elif model.family == "merton":
        paths = simulate_merton(model.theta, model.dimension, mesh, n_steps, n_paths, x0, seed)
        var = None
        if model.emit_volatility:
            var = np.full_like(paths, model.theta[1] ** 2)
    else:
        paths, var = simulate_rbergomi(model.theta, model.dimension, mesh, n_steps,
                                       n_paths, x0, v0, seed)
        if not model.emit_volatility:
            var = None
    return paths, var


# ---------------------------------------------------------------------------
# Regime switching
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegimeSwitchSpec:
    """Configuration of a regime-switching path simulation.

    Switch checks happen every ``window_len`` observations: out of a change,
    a draw Po(entry_intensity) > 0 enters one; inside a change,
    Po(exit_intensity) > 0 exits at the checkpoint plus one observation
    (the paper-literal offset) or exactly at the checkpoint when
    ``lattice_aligned``.  Models cycle through ``models`` with each
    transition, restarting at the first model once exhausted.
    """

    models: tuple
    window_len: int
    horizon: float
    mesh: float
    entry_intensity: float = 2.0
    exit_intensity: float = 1.0
    mode: str = "poisson"
    fixed_duration: float | None = None
    n_episodes: int = 3
    seed: int = 0
    x0: float = 1.0
    lattice_aligned: bool = False

    def __post_init__(self):
        models = tuple(self.models)
        if not models:
            raise ValueError("at least one model pair is required")
        object.__setattr__(self, "models", models)
        if self.mode not in ("poisson", "fixed-duration", "midpoint"):
            raise ValueError("mode must be 'poisson', 'fixed-duration', or 'midpoint'")
        if self.mode == "fixed-duration" and not self.fixed_duration:
            raise ValueError("fixed-duration mode needs a positive duration")
        n_steps = int(round(self.horizon / self.mesh))
        if self.window_len >= n_steps:
            raise ValueError("window_len must be smaller than the number of steps")
        dims = {m.dimension for m in models}
        fams_emit = {m.emit_volatility for m in models}
        if len(dims) > 1 or len(fams_emit) > 1:
            raise ValueError("all models must share dimension and volatility emission")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.mesh))


@dataclass(frozen=True)
class RegimeSwitchResult:
    stream: TimeAugmentedStream
    labels: np.ndarray            # 0 in the base state, 1 inside a change, per observation
    switch_times: tuple           # observation indices where a change was entered
    model_ids: np.ndarray         # index into spec.models of the governing model


def _switch_segments(spec: RegimeSwitchSpec) -> list[tuple[int, int, int]]:
    """Segment list [(start_obs, end_obs, segment_index)] covering [0, n_steps]."""
    n = spec.n_steps
    h = spec.window_len
    rng = _rng(spec.seed, role=0)
    segments = []
    if spec.mode == "midpoint":
        # single permanent switch at the lattice point nearest the midpoint
        mid = max(h, (n // 2) // h * h)
        return [(0, mid, 0), (mid, n, 1)]
    if spec.mode == "fixed-duration":
        dur = max(1, int(round(spec.fixed_duration / spec.mesh)))
        lattice = list(range(h, n - 1, h))
        rng.shuffle(lattice)
        entries: list[int] = []
        for p in sorted(lattice):
            if len(entries) >= spec.n_episodes:
                break
            if all(p >= e + dur or p + dur <= e for e in entries):
                entries.append(p)
        entries.sort()
        cursor, seg_idx = 0, 0
        for p in entries:
            if p > cursor:
                segments.append((cursor, p, seg_idx))
            seg_idx += 1
            end = min(p + dur, n)
            segments.append((p, end, seg_idx))
            seg_idx += 1
            cursor = end
        if cursor < n:
            segments.append((cursor, n, seg_idx))
        return segments

    in_change = False
    seg_idx = 0
    start = 0
    for k in range(h, n, h):
        if not in_change:
            if rng.poisson(spec.entry_intensity) > 0:
                segments.append((start, k, seg_idx))
                seg_idx += 1
                start = k
                in_change = True
        else:
            if rng.poisson(spec.exit_intensity) > 0:
                exit_idx = k if spec.lattice_aligned else min(k + 1, n)
                segments.append((start, exit_idx, seg_idx))
                seg_idx += 1
                start = exit_idx
                in_change = False
    segments.append((start, n, seg_idx))
    return [(a, b, i) for (a, b, i) in segments if b > a]


def simulate_regime_switching(spec: RegimeSwitchSpec) -> RegimeSwitchResult:
    """Generate one labelled regime-switching path.

    Prices are stitched continuously: each segment starts at the previous
    segment's final value.  When volatility is emitted, the variance channel
    restarts each segment at the incoming model's spot variance.
    """
    segments = _switch_segments(spec)
    n = spec.n_steps
    base = spec.models[0]
    d = base.dimension
    emit_vol = base.emit_volatility
    width = 2 * d if emit_vol else d
    values = np.empty((n + 1, width))
    labels = np.zeros(n + 1, dtype=int)
    model_ids = np.zeros(n + 1, dtype=int)
    current = np.full(d, spec.x0, dtype=float)
    switch_times = []
    for start, end, seg_idx in segments:
        model = spec.models[seg_idx % len(spec.models)]
        steps = end - start
        prices, var = simulate_model(model, spec.mesh, steps, 1,
                                     x0=current, seed=_rng(spec.seed, role=1000 + seg_idx))
        values[start:end + 1, :d] = prices[0]
        if emit_vol:
            if var is None:
                var = np.full_like(prices, model.theta[1] ** 2)
            values[start:end + 1, d:] = var[0]
        # an observation is labelled by the regime that generated the step
        # leading out of it, so sub-paths aligned to the switch lattice stay pure
        labels[start:end] = seg_idx % 2
        model_ids[start:end] = seg_idx % len(spec.models)
        if seg_idx % 2 == 1:
            switch_times.append(start)
        current = prices[0, -1]
    labels[n] = labels[n - 1]
    model_ids[n] = model_ids[n - 1]
    timestamps = spec.mesh * np.arange(n + 1)
    stream = TimeAugmentedStream(timestamps, values)
    return RegimeSwitchResult(stream, labels, tuple(switch_times), model_ids)
