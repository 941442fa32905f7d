"""Experiment configuration: schema, validation, defaults.

Configs are flat JSON documents mirroring ExperimentConfig.  Parsing is
strict: unknown keys are rejected, and the fully resolved configuration
(all defaults filled in) is embedded in every emitted report so a run can
be reproduced from its artifacts alone.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigError
from .models import ModelPair
from .sigkernel import KernelSpec
from .streams import StreamTransformer, Transform, compose

EXPERIMENTS = (
    "toy-detect", "multiclass", "single-path", "rbergomi-detect", "rank2-compare",
    "baseline-compare", "nonmarkov", "cluster", "realdata-auto", "realdata-pipeline",
)

_KERNEL_KEYS = {"rank", "lift", "sigma", "dyadic_order", "inner_order", "truncated", "trunc_level"}
_SWITCH_KEYS = {"mode", "entry_intensity", "exit_intensity", "fixed_duration",
                "n_episodes", "lattice_aligned"}
_MODEL_KEYS = {"family", "theta", "dimension", "emit_volatility"}
_BASELINE_KEYS = {"trunc_level", "trunc_sigma", "trunc_lift", "sigcon_order", "sigcon_corpus"}


@dataclass(frozen=True)
class SwitchingConfig:
    mode: str = "poisson"
    entry_intensity: float = 0.04
    exit_intensity: float = 0.3
    fixed_duration: float | None = None
    n_episodes: int = 3
    lattice_aligned: bool = False


@dataclass(frozen=True)
class BaselineConfig:
    trunc_level: int = 5
    trunc_sigma: float | None = None
    trunc_lift: str | None = None
    sigcon_order: int = 2
    sigcon_corpus: int = 1000


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved settings of one experiment run."""

    experiment: str
    seed: int = 0
    n_runs: int = 1
    out_dir: str | None = None
    horizon: float = 2.0
    mesh: float = 1.0 / (252.0 * 7.0)
    dimension: int = 1
    subpath_len: int = 7
    ensemble_size: int = 10
    alpha: float = 0.05
    transforms: tuple = (("increment", None), ("time-normalise", None),
                         ("state-normalise", None))
    include_time: bool = False
    kernel: KernelSpec = field(default_factory=KernelSpec)
    models: tuple = ()
    beliefs: tuple = ()
    belief_bank_size: int = 2000
    bootstrap_pairs: int = 300
    n_evals: int = 1
    switching: SwitchingConfig = field(default_factory=SwitchingConfig)
    emit_volatility: bool = False
    lags: tuple = (1,)
    lag_weights: tuple | None = None
    rolling_window: int = 200
    n_clusters: int = 2
    linkage: str = "average"
    score_samples: int = 64
    conditional: bool = False
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    csv: str | None = None
    belief_split: float = 1.0
    figures: bool = True
    threads: int = 1

    def transformer(self) -> StreamTransformer:
        return compose([Transform(kind, param) for kind, param in self.transforms])

    def to_dict(self) -> dict:
        out = asdict(self)
        out["kernel"] = {k: (list(v) if isinstance(v, tuple) else v)
                         for k, v in asdict(self.kernel).items() if k != "trunc_cap"}
        out["models"] = [_model_to_dict(m) for m in self.models]
        out["beliefs"] = [_model_to_dict(m) for m in self.beliefs]
        out["switching"] = asdict(self.switching)
        out["baseline"] = asdict(self.baseline)
        out["transforms"] = [_transform_to_dict(t) for t in self.transformer().transforms]
        for key in ("lags", "lag_weights"):
            if out[key] is not None:
                out[key] = list(out[key])
        return out


def _model_to_dict(m: ModelPair) -> dict:
    return {"family": m.family, "theta": list(m.theta), "dimension": m.dimension,
            "emit_volatility": m.emit_volatility}


def _transform_to_dict(t: Transform) -> dict:
    out = {"kind": t.kind}
    if t.param is not None:
        out["param"] = t.param if not hasattr(t.param, "tolist") else t.param.tolist()
    return out


def _require(cond: bool, msg: str):
    if not cond:
        raise ConfigError(msg)


def _parse_model(raw, where: str) -> ModelPair:
    _require(isinstance(raw, dict), f"{where}: each model must be an object")
    unknown = set(raw) - _MODEL_KEYS
    _require(not unknown, f"{where}: unknown model keys {sorted(unknown)}")
    _require("family" in raw and "theta" in raw, f"{where}: model needs 'family' and 'theta'")
    try:
        return ModelPair(raw["family"], tuple(raw["theta"]),
                         dimension=int(raw.get("dimension", 1)),
                         emit_volatility=bool(raw.get("emit_volatility", False)))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _parse_kernel(raw) -> KernelSpec:
    _require(isinstance(raw, dict), "'kernel' must be an object")
    unknown = set(raw) - _KERNEL_KEYS
    _require(not unknown, f"unknown kernel keys {sorted(unknown)}")
    sigma = raw.get("sigma", 1.0)
    if isinstance(sigma, list):
        sigma = tuple(sigma)
    try:
        return KernelSpec(rank=int(raw.get("rank", 1)), lift=raw.get("lift", "linear"),
                          sigma=sigma, dyadic_order=int(raw.get("dyadic_order", 2)),
                          inner_order=int(raw.get("inner_order", 3)),
                          truncated=bool(raw.get("truncated", False)),
                          trunc_level=int(raw.get("trunc_level", 5)))
    except ValueError as exc:
        raise ConfigError(f"kernel: {exc}") from exc


def _parse_transforms(raw) -> tuple:
    _require(isinstance(raw, list), "'transforms' must be a list")
    out = []
    for item in raw:
        if isinstance(item, str):
            out.append({"kind": item})
        elif isinstance(item, dict):
            unknown = set(item) - {"kind", "param"}
            _require(not unknown, f"unknown transform keys {sorted(unknown)}")
            _require("kind" in item, "transform objects need a 'kind'")
            out.append(dict(item))
        else:
            raise ConfigError("transforms must be strings or {kind, param} objects")
    try:
        compose([Transform(**t) for t in out])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"transforms: {exc}") from exc
    # canonical form: frozen (kind, param) pairs so configs compare by value
    return tuple((t["kind"], t.get("param")) for t in out)


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a raw config mapping and resolve every default."""
    _require(isinstance(raw, dict), "config root must be an object")
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(raw) - known
    _require(not unknown, f"unknown config keys: {sorted(unknown)}")
    _require("experiment" in raw, "config needs an 'experiment' kind")
    _require(raw["experiment"] in EXPERIMENTS,
             f"unknown experiment {raw['experiment']!r}; expected one of {EXPERIMENTS}")

    kwargs: dict = {"experiment": raw["experiment"]}
    for key in ("seed", "n_runs", "dimension", "subpath_len", "ensemble_size",
                "belief_bank_size", "bootstrap_pairs", "n_evals", "rolling_window",
                "n_clusters", "score_samples", "threads"):
        if key in raw:
            _require(isinstance(raw[key], int) and not isinstance(raw[key], bool),
                     f"'{key}' must be an integer")
            kwargs[key] = raw[key]
    for key in ("horizon", "mesh", "alpha", "belief_split"):
        if key in raw:
            _require(isinstance(raw[key], (int, float)) and not isinstance(raw[key], bool),
                     f"'{key}' must be a number")
            kwargs[key] = float(raw[key])
    for key in ("include_time", "emit_volatility", "conditional", "figures"):
        if key in raw:
            _require(isinstance(raw[key], bool), f"'{key}' must be a boolean")
            kwargs[key] = raw[key]
    for key in ("out_dir", "csv", "linkage"):
        if key in raw and raw[key] is not None:
            _require(isinstance(raw[key], str), f"'{key}' must be a string")
            kwargs[key] = raw[key]
    if "transforms" in raw:
        kwargs["transforms"] = _parse_transforms(raw["transforms"])
    if "kernel" in raw:
        kwargs["kernel"] = _parse_kernel(raw["kernel"])
    if "models" in raw:
        _require(isinstance(raw["models"], list), "'models' must be a list")
        kwargs["models"] = tuple(_parse_model(m, "models") for m in raw["models"])
    if "beliefs" in raw:
        _require(isinstance(raw["beliefs"], list), "'beliefs' must be a list")
        kwargs["beliefs"] = tuple(_parse_model(m, "beliefs") for m in raw["beliefs"])
    if "switching" in raw:
        sw = raw["switching"]
        _require(isinstance(sw, dict), "'switching' must be an object")
        unknown = set(sw) - _SWITCH_KEYS
        _require(not unknown, f"unknown switching keys {sorted(unknown)}")
        kwargs["switching"] = SwitchingConfig(**sw)
    if "baseline" in raw:
        bl = raw["baseline"]
        _require(isinstance(bl, dict), "'baseline' must be an object")
        unknown = set(bl) - _BASELINE_KEYS
        _require(not unknown, f"unknown baseline keys {sorted(unknown)}")
        kwargs["baseline"] = BaselineConfig(**bl)
    if "lags" in raw:
        _require(isinstance(raw["lags"], list) and raw["lags"], "'lags' must be a nonempty list")
        kwargs["lags"] = tuple(int(l) for l in raw["lags"])
    if "lag_weights" in raw and raw["lag_weights"] is not None:
        kwargs["lag_weights"] = tuple(float(w) for w in raw["lag_weights"])

    cfg = ExperimentConfig(**kwargs)
    _validate_semantics(cfg)
    return cfg


def _validate_semantics(cfg: ExperimentConfig):
    _require(0.0 < cfg.alpha < 1.0, "alpha must lie in (0, 1)")
    _require(cfg.subpath_len >= 2, "subpath_len must be at least 2")
    _require(cfg.n_runs >= 1, "n_runs must be positive")
    _require(cfg.mesh > 0 and cfg.horizon > 0, "mesh and horizon must be positive")
    _require(cfg.linkage in ("max", "min", "average"), "linkage must be max, min, or average")
    _require(cfg.threads >= 1, "threads must be positive")
    if cfg.lag_weights is not None:
        _require(len(cfg.lag_weights) == len(cfg.lags), "need one weight per lag")
    needs_models = cfg.experiment in ("toy-detect", "multiclass", "single-path",
                                      "rbergomi-detect", "rank2-compare",
                                      "baseline-compare", "nonmarkov", "cluster")
    if needs_models:
        _require(len(cfg.models) >= 2, f"{cfg.experiment} needs at least two models")
    if cfg.experiment in ("realdata-auto", "realdata-pipeline"):
        _require(cfg.csv is not None, f"{cfg.experiment} needs a 'csv' input path")
    if cfg.experiment in ("single-path", "nonmarkov"):
        _require(len(cfg.beliefs or cfg.models) >= 2, "path-by-path detection needs two beliefs")


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON config file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(raw)
