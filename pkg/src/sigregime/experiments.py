"""Experiment runners: synthetic studies and real-data pipelines.

Each runner simulates (or ingests) its data, drives the detection or
clustering machinery, and hands back a report dictionary plus plot-ready
series; ``run_experiment`` owns artifact emission.  Repeat runs derive
their seeds from (config seed, run index), so results are independent of
scheduling and reproducible from the resolved config alone.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from itertools import permutations
from pathlib import Path

import numpy as np

from .baselines import sigcon_detect
from .cluster import agglomerate, assign_subpath_labels, distance_matrix
from .config import ExperimentConfig
from .data_io import ingest_csv
from .detect import (Beliefs, auto_evaluate, build_beliefs, detect_online,
                     pathwise_detect, rolling_threshold)
from .errors import ConfigError, DataError
from .metrics import RunMetrics, aggregate, metrics
from .mmd import bootstrap_null
from .models import ModelPair, RegimeSwitchSpec, simulate_regime_switching
from .reporting import (fig_clusters, fig_fractions, fig_path, fig_scores,
                        write_report, write_series)
from .sigkernel import KernelSpec
from .streams import extract_subpaths, subpath_tensor


def _run_seed(seed: int, run: int) -> int:
    return int(np.random.SeedSequence([seed, run]).generate_state(1, np.uint64)[0])


def _resolved_models(cfg: ExperimentConfig, which: str = "models"):
    models = getattr(cfg, which) or cfg.models
    out = []
    for m in models:
        dim = m.dimension if m.dimension > 1 else cfg.dimension
        out.append(ModelPair(m.family, m.theta, dimension=dim,
                             emit_volatility=cfg.emit_volatility))
    return tuple(out)


def _simulate_path(cfg: ExperimentConfig, seed: int, mode: str | None = None):
    sw = cfg.switching
    spec = RegimeSwitchSpec(
        models=_resolved_models(cfg), window_len=cfg.subpath_len, horizon=cfg.horizon,
        mesh=cfg.mesh, entry_intensity=sw.entry_intensity, exit_intensity=sw.exit_intensity,
        mode=mode or sw.mode, fixed_duration=sw.fixed_duration, n_episodes=sw.n_episodes,
        seed=seed, lattice_aligned=sw.lattice_aligned)
    return simulate_regime_switching(spec)


def _subpath_truth(labels: np.ndarray, n_subpaths: int, window_len: int) -> np.ndarray:
    used = labels[:n_subpaths * window_len].reshape(n_subpaths, window_len)
    return (used.mean(axis=1) > 0.5).astype(float)


def _belief_models(cfg: ExperimentConfig):
    return _resolved_models(cfg, "beliefs") if cfg.beliefs else (_resolved_models(cfg)[:1])


def _build_beliefs_and_nulls(cfg: ExperimentConfig, kspec: KernelSpec):
    beliefs = build_beliefs(_belief_models(cfg), cfg.belief_bank_size, cfg.subpath_len,
                            cfg.mesh, cfg.transformer(), include_time=cfg.include_time,
                            seed=cfg.seed + 777)
    nulls = [bootstrap_null(bank, cfg.ensemble_size, cfg.bootstrap_pairs, kspec,
                            seed=cfg.seed + 55 + i, alpha=cfg.alpha)
             for i, bank in enumerate(beliefs.banks)]
    return beliefs, nulls


def _parallel_runs(cfg: ExperimentConfig, job):
    if cfg.threads > 1 and cfg.n_runs > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            return list(pool.map(job, range(cfg.n_runs)))
    return [job(r) for r in range(cfg.n_runs)]


# ---------------------------------------------------------------------------
# Detection experiments (parametric beliefs)
# ---------------------------------------------------------------------------

def _detect_family(cfg: ExperimentConfig):
    """toy-detect, multiclass, and rbergomi-detect share this pipeline."""
    kspec = cfg.kernel
    beliefs, nulls = _build_beliefs_and_nulls(cfg, kspec)

    def one_run(r: int):
        seed = _run_seed(cfg.seed, r)
        t0 = time.perf_counter()
        sim = _simulate_path(cfg, seed)
        X = subpath_tensor(sim.stream, cfg.subpath_len, cfg.transformer(), cfg.include_time)
        rep = detect_online(X, cfg.ensemble_size, beliefs, nulls, kspec,
                            n_evals=cfg.n_evals, seed=seed)
        truth = _subpath_truth(sim.labels, X.shape[0], cfg.subpath_len)
        m = metrics(rep.exceedance, truth, runtime_seconds=time.perf_counter() - t0)
        return sim, X, rep, truth, m

    results = _parallel_runs(cfg, one_run)
    rows = [m for *_, m in results]
    sim0, X0, rep0, truth0, _ = results[0]

    series = {
        "path": {"time": sim0.stream.timestamps,
                 **{f"x{c}": sim0.stream.values[:, c]
                    for c in range(min(sim0.stream.dimension, 8))},
                 "label": sim0.labels},
        "scores": {"ensemble": np.arange(rep0.n_ensembles),
                   **{f"score_{name}": rep0.score_matrix[i]
                      for i, name in enumerate(beliefs.names)},
                   **{f"critical_{name}": np.full(rep0.n_ensembles, rep0.critical_values[i])
                      for i, name in enumerate(beliefs.names)},
                   "anomalous": rep0.anomalous},
        "exceedance": {"subpath": np.arange(len(rep0.exceedance)),
                       "fraction": rep0.exceedance, "label": truth0},
        "metrics": _metrics_table(rows),
    }

    def figures(fig_dir: Path):
        fig_path(fig_dir / "path.png", sim0.stream.timestamps, sim0.stream.values[:, :1],
                 sim0.labels, title="Regime-switching path (run 0)")
        fig_scores(fig_dir / "scores.png", np.arange(rep0.n_ensembles),
                   {name: rep0.score_matrix[i] for i, name in enumerate(beliefs.names)},
                   {f"c_alpha[{name}]": rep0.critical_values[i]
                    for i, name in enumerate(beliefs.names)},
                   title="MMD scores and thresholds (run 0)")
        fig_fractions(fig_dir / "exceedance.png", rep0.exceedance, truth0)

    report = {
        "experiment": cfg.experiment,
        "beliefs": list(beliefs.names),
        "critical_values": rep0.critical_values,
        "metrics": aggregate(rows),
        "runs": [m.as_dict() for m in rows],
    }
    return report, series, figures


def _metrics_table(rows: list[RunMetrics]) -> dict:
    return {"run": np.arange(len(rows)),
            "regime_on": [r.regime_on for r in rows],
            "regime_off": [r.regime_off for r in rows],
            "total": [r.total for r in rows],
            "auc": [r.auc if r.auc is not None else np.nan for r in rows]}


# ---------------------------------------------------------------------------
# Path-by-path experiments
# ---------------------------------------------------------------------------

def _pathwise_family(cfg: ExperimentConfig, mode: str | None = None,
                     conditional: bool | None = None):
    kspec = cfg.kernel
    belief_models = _belief_models(cfg)
    if len(belief_models) < 2:
        raise ConfigError("path-by-path detection needs at least two beliefs")
    beliefs = build_beliefs(belief_models, cfg.belief_bank_size, cfg.subpath_len,
                            cfg.mesh, cfg.transformer(), include_time=cfg.include_time,
                            seed=cfg.seed + 777)
    conditional = cfg.conditional if conditional is None else conditional

    def one_run(r: int):
        seed = _run_seed(cfg.seed, r)
        t0 = time.perf_counter()
        sim = _simulate_path(cfg, seed, mode=mode)
        raw = extract_subpaths(sim.stream, cfg.subpath_len)
        simrep = pathwise_detect(raw, beliefs, cfg.score_samples, kspec, seed=seed,
                                 conditional=conditional, transformer=cfg.transformer(),
                                 include_time=cfg.include_time)
        sigma = simrep.matrices[:, 0, 0]  # bank-0 vs bank-1 similarity
        truth = _subpath_truth(sim.labels, len(raw), cfg.subpath_len)
        m = metrics(sigma, truth, threshold=0.0, runtime_seconds=time.perf_counter() - t0)
        return sim, simrep, sigma, truth, m

    results = _parallel_runs(cfg, one_run)
    rows = [m for *_, m in results]
    sim0, simrep0, sigma0, truth0, _ = results[0]
    half = len(sigma0) // 2
    half_means = [{"first_half": float(np.nanmean(s[:len(s) // 2])),
                   "second_half": float(np.nanmean(s[len(s) // 2:]))}
                  for _, _, s, _, _ in results]

    series = {
        "path": {"time": sim0.stream.timestamps,
                 **{f"x{c}": sim0.stream.values[:, c]
                    for c in range(min(sim0.stream.dimension, 8))},
                 "label": sim0.labels},
        "similarity": {"subpath": np.arange(len(sigma0)), "sigma": sigma0,
                       "flag": (sigma0 > 0).astype(int), "label": truth0},
        "metrics": _metrics_table(rows),
    }

    def figures(fig_dir: Path):
        fig_path(fig_dir / "path.png", sim0.stream.timestamps, sim0.stream.values[:, :1],
                 sim0.labels, title="Evaluated path (run 0)")
        fig_scores(fig_dir / "similarity.png", np.arange(len(sigma0)), {"sigma": sigma0},
                   {"zero": np.zeros(len(sigma0))}, title="Similarity score (run 0)")

    report = {
        "experiment": cfg.experiment,
        "beliefs": list(beliefs.names),
        "conditional": conditional,
        "half_means": half_means,
        "mean_second_minus_first": float(np.mean([h["second_half"] - h["first_half"]
                                                  for h in half_means])),
        "metrics": aggregate(rows),
        "runs": [m.as_dict() for m in rows],
    }
    return report, series, figures


# ---------------------------------------------------------------------------
# Comparator experiments
# ---------------------------------------------------------------------------

def _compare_detectors(cfg: ExperimentConfig, detectors: dict):
    """Run several kernel detectors over the same simulated paths."""
    prepared = {}
    for name, kspec in detectors.items():
        beliefs, nulls = _build_beliefs_and_nulls(cfg, kspec)
        prepared[name] = (kspec, beliefs, nulls)

    def one_run(r: int):
        seed = _run_seed(cfg.seed, r)
        sim = _simulate_path(cfg, seed)
        X = subpath_tensor(sim.stream, cfg.subpath_len, cfg.transformer(), cfg.include_time)
        truth = _subpath_truth(sim.labels, X.shape[0], cfg.subpath_len)
        out = {}
        for name, (kspec, beliefs, nulls) in prepared.items():
            t0 = time.perf_counter()
            rep = detect_online(X, cfg.ensemble_size, beliefs, nulls, kspec,
                                n_evals=cfg.n_evals, seed=seed)
            out[name] = (rep, metrics(rep.exceedance, truth,
                                      runtime_seconds=time.perf_counter() - t0))
        return sim, X, truth, out

    results = _parallel_runs(cfg, one_run)
    sim0, X0, truth0, out0 = results[0]
    per_detector = {name: aggregate([res[3][name][1] for res in results])
                    for name in detectors}
    series = {
        "metrics": {"detector": list(detectors),
                    "total_mean": [per_detector[n]["total"]["mean"] for n in detectors],
                    "total_std": [per_detector[n]["total"]["std"] for n in detectors],
                    "auc_mean": [per_detector[n]["auc"]["mean"] for n in detectors],
                    "runtime_mean": [per_detector[n]["runtime_seconds"]["mean"]
                                     for n in detectors]},
        "exceedance": {"subpath": np.arange(len(truth0)), "label": truth0,
                       **{f"fraction_{name}": out0[name][0].exceedance
                          for name in detectors}},
    }

    def figures(fig_dir: Path):
        for name in detectors:
            fig_fractions(fig_dir / f"exceedance_{name}.png", out0[name][0].exceedance,
                          truth0, title=f"Per-sub-path exceedance, {name} (run 0)")

    report = {"experiment": cfg.experiment,
              "detectors": {name: per_detector[name] for name in detectors}}
    return report, series, figures, results


def _rank2_compare(cfg: ExperimentConfig):
    k2 = cfg.kernel if cfg.kernel.rank == 2 else KernelSpec(
        rank=2, lift=cfg.kernel.lift, sigma=cfg.kernel.sigma,
        dyadic_order=cfg.kernel.dyadic_order, inner_order=cfg.kernel.inner_order)
    k1 = KernelSpec(rank=1, lift=k2.lift, sigma=k2.inner_scale, dyadic_order=k2.dyadic_order)
    report, series, figures, _ = _compare_detectors(cfg, {"rank1": k1, "rank2": k2})
    r1 = report["detectors"]["rank1"]
    r2 = report["detectors"]["rank2"]
    report["rank2_minus_rank1_total"] = (r2["total"]["mean"] or 0.0) - (r1["total"]["mean"] or 0.0)
    rt1 = r1["runtime_seconds"]["mean"] or 1e-12
    report["runtime_ratio"] = (r2["runtime_seconds"]["mean"] or 0.0) / rt1
    return report, series, figures


def _baseline_compare(cfg: ExperimentConfig):
    bl = cfg.baseline
    full = cfg.kernel
    trunc = KernelSpec(rank=1, lift=bl.trunc_lift or full.lift,
                       sigma=bl.trunc_sigma or full.sigma,
                       truncated=True, trunc_level=bl.trunc_level)
    report, series, figures, results = _compare_detectors(
        cfg, {"full_kernel": full, "truncated": trunc})

    # SIG-CON corpus: raw belief sub-paths under the same transforms
    corpus = build_beliefs(_belief_models(cfg), 2 * bl.sigcon_corpus, cfg.subpath_len,
                           cfg.mesh, cfg.transformer(), include_time=cfg.include_time,
                           seed=cfg.seed + 777).banks[0]
    sig_rows = []
    sig0 = None
    for r, (sim, X, truth, _) in enumerate(results):
        t0 = time.perf_counter()
        res = sigcon_detect(X, corpus, bl.sigcon_order, alpha=cfg.alpha,
                            seed=_run_seed(cfg.seed, r))
        m = metrics(res.scores, truth, threshold=res.threshold,
                    runtime_seconds=time.perf_counter() - t0)
        sig_rows.append(m)
        if r == 0:
            sig0 = res
    report["detectors"]["sigcon"] = aggregate(sig_rows)
    series["metrics"]["detector"].append("sigcon")
    agg = report["detectors"]["sigcon"]
    series["metrics"]["total_mean"].append(agg["total"]["mean"])
    series["metrics"]["total_std"].append(agg["total"]["std"])
    series["metrics"]["auc_mean"].append(agg["auc"]["mean"])
    series["metrics"]["runtime_mean"].append(agg["runtime_seconds"]["mean"])
    series["sigcon"] = {"subpath": np.arange(len(sig0.scores)), "score": sig0.scores,
                        "threshold": np.full(len(sig0.scores), sig0.threshold),
                        "flag": sig0.flags.astype(int)}
    return report, series, figures


# ---------------------------------------------------------------------------
# Clustering experiment
# ---------------------------------------------------------------------------

def _best_binary_accuracy(avg_labels: np.ndarray, truth: np.ndarray, k: int):
    """Accuracy of averaged cluster labels against binary truth, best orientation."""
    ok = np.isfinite(avg_labels) & np.isfinite(truth)
    lab = avg_labels[ok]
    y = truth[ok].astype(int)
    scale = max(k - 1, 1)
    best = -1.0
    for perm in ([1, 0], [0, 1]) if k == 2 else [None]:
        if k == 2 and perm == [1, 0]:
            pred = (1.0 - lab) >= 0.5
        else:
            pred = lab / scale >= 0.5
        acc = float(np.mean(pred.astype(int) == y))
        best = max(best, acc)
    return best


def _cluster_experiment(cfg: ExperimentConfig):
    kspec = cfg.kernel

    def one_run(r: int):
        seed = _run_seed(cfg.seed, r)
        t0 = time.perf_counter()
        sim = _simulate_path(cfg, seed)
        X = subpath_tensor(sim.stream, cfg.subpath_len, cfg.transformer(), cfg.include_time)
        D = distance_matrix(X, cfg.ensemble_size, kspec)
        assignment = agglomerate(D, cfg.n_clusters, cfg.linkage)
        avg = assign_subpath_labels(assignment.labels, X.shape[0], cfg.ensemble_size)
        truth = _subpath_truth(sim.labels, X.shape[0], cfg.subpath_len)
        acc = _best_binary_accuracy(avg, truth, cfg.n_clusters)
        scaled = avg / max(cfg.n_clusters - 1, 1)
        flipped = scaled if metrics(scaled, truth).total >= metrics(1 - scaled, truth).total \
            else 1 - scaled
        m = metrics(flipped, truth, runtime_seconds=time.perf_counter() - t0)
        m = RunMetrics(m.regime_on, m.regime_off, acc, m.auc, m.runtime_seconds)
        return sim, assignment, avg, truth, m

    results = _parallel_runs(cfg, one_run)
    rows = [m for *_, m in results]
    sim0, assign0, avg0, truth0, _ = results[0]
    series = {
        "path": {"time": sim0.stream.timestamps,
                 **{f"x{c}": sim0.stream.values[:, c]
                    for c in range(min(sim0.stream.dimension, 8))},
                 "label": sim0.labels},
        "clusters": {"ensemble": np.arange(len(assign0.labels)), "label": assign0.labels},
        "subpath_labels": {"subpath": np.arange(len(avg0)), "avg_label": avg0,
                           "label": truth0},
        "metrics": _metrics_table(rows),
    }

    def figures(fig_dir: Path):
        fig_clusters(fig_dir / "clusters.png", sim0.stream.timestamps,
                     sim0.stream.values[:, 0], avg0, cfg.subpath_len)

    report = {"experiment": cfg.experiment, "k": cfg.n_clusters, "linkage": cfg.linkage,
              "metrics": aggregate(rows), "runs": [m.as_dict() for m in rows]}
    return report, series, figures


# ---------------------------------------------------------------------------
# Real-data pipelines
# ---------------------------------------------------------------------------

def _load_csv_stream(cfg: ExperimentConfig):
    if cfg.csv is None:
        raise ConfigError(f"{cfg.experiment} needs a 'csv' input path")
    stream, ingest = ingest_csv(cfg.csv)
    return stream, ingest


def _realdata_auto(cfg: ExperimentConfig):
    t0 = time.perf_counter()
    stream, ingest = _load_csv_stream(cfg)
    X = subpath_tensor(stream, cfg.subpath_len, cfg.transformer(), cfg.include_time)
    scores = auto_evaluate(X, cfg.ensemble_size, cfg.lags, cfg.lag_weights,
                           cfg.kernel, biased=True, distance=True)
    window = min(cfg.rolling_window, max(10, (np.isfinite(scores).sum()) // 2))
    rolling, flags = rolling_threshold(scores, window, cfg.alpha)
    D = distance_matrix(X, cfg.ensemble_size, cfg.kernel)
    assignment = agglomerate(D, cfg.n_clusters, cfg.linkage)
    avg = assign_subpath_labels(assignment.labels, X.shape[0], cfg.ensemble_size)
    runtime = time.perf_counter() - t0

    series = {
        "auto_scores": {"ensemble": np.arange(len(scores)), "score": scores,
                        "threshold": rolling.thresholds, "flag": flags.astype(int)},
        "clusters": {"ensemble": np.arange(len(assignment.labels)),
                     "label": assignment.labels},
        "subpath_labels": {"subpath": np.arange(len(avg)), "avg_label": avg},
    }

    def figures(fig_dir: Path):
        fig_path(fig_dir / "path.png", stream.timestamps, stream.values,
                 title="Ingested price path")
        fig_scores(fig_dir / "auto_scores.png", np.arange(len(scores)),
                   {"auto score": scores}, {"rolling threshold": rolling.thresholds},
                   title="Auto-evaluator score and rolling threshold")
        fig_clusters(fig_dir / "clusters.png", stream.timestamps, stream.values[:, 0],
                     avg, cfg.subpath_len)

    report = {
        "experiment": cfg.experiment,
        "ingest": {"columns": list(ingest.columns), "rows": ingest.n_rows,
                   "dropped_missing": ingest.n_dropped_missing,
                   "unparseable": ingest.n_unparseable},
        "rolling_window": window,
        "burn_in": int(rolling.burn_in),
        "n_flags": int(flags.sum()),
        "flag_rate_after_burn_in": float(flags[rolling.burn_in:].mean())
        if rolling.burn_in < len(flags) else None,
        "cluster_sizes": np.bincount(assignment.labels, minlength=cfg.n_clusters),
        "runtime": {"seconds": runtime},
    }
    return report, series, figures


def _realdata_pipeline(cfg: ExperimentConfig):
    t0 = time.perf_counter()
    stream, ingest = _load_csv_stream(cfg)
    X = subpath_tensor(stream, cfg.subpath_len, cfg.transformer(), cfg.include_time)
    D = distance_matrix(X, cfg.ensemble_size, cfg.kernel)
    assignment = agglomerate(D, cfg.n_clusters, cfg.linkage)
    avg = assign_subpath_labels(assignment.labels, X.shape[0], cfg.ensemble_size)
    calm = np.where(np.isfinite(avg) & (avg <= cfg.belief_split))[0]
    turmoil = np.where(np.isfinite(avg) & (avg > cfg.belief_split))[0]
    if len(calm) < 2 or len(turmoil) < 2:
        raise DataError("cluster split produced an unusable belief bank; adjust belief_split")
    beliefs = Beliefs((X[calm], X[turmoil]), ("calm", "turmoil"))
    n_samples = min(cfg.score_samples, len(calm), len(turmoil))
    raw = extract_subpaths(stream, cfg.subpath_len)
    simrep = pathwise_detect(raw, beliefs, n_samples, cfg.kernel, seed=cfg.seed,
                             conditional=False, transformer=cfg.transformer(),
                             include_time=cfg.include_time)
    sigma = simrep.matrices[:, 0, 0]
    ema = np.array(sigma)
    alpha_ema = 2.0 / (8 + 1)
    for i in range(1, len(ema)):
        ema[i] = alpha_ema * sigma[i] + (1 - alpha_ema) * ema[i - 1]
    runtime = time.perf_counter() - t0

    series = {
        "similarity": {"subpath": np.arange(len(sigma)), "sigma": sigma, "ema": ema,
                       "flag": (ema > 0).astype(int)},
        "clusters": {"ensemble": np.arange(len(assignment.labels)),
                     "label": assignment.labels},
    }

    def figures(fig_dir: Path):
        fig_scores(fig_dir / "similarity.png", np.arange(len(sigma)),
                   {"sigma": sigma, "ema": ema}, {"zero": np.zeros(len(sigma))},
                   title="Data-driven similarity score")

    report = {
        "experiment": cfg.experiment,
        "ingest": {"columns": list(ingest.columns), "rows": ingest.n_rows,
                   "dropped_missing": ingest.n_dropped_missing,
                   "unparseable": ingest.n_unparseable},
        "bank_sizes": {"calm": int(len(calm)), "turmoil": int(len(turmoil))},
        "n_samples": int(n_samples),
        "share_flagged": float(np.mean(ema > 0)),
        "runtime": {"seconds": runtime},
    }
    return report, series, figures


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

_RUNNERS = {
    "toy-detect": _detect_family,
    "multiclass": _detect_family,
    "rbergomi-detect": _detect_family,
    "single-path": lambda cfg: _pathwise_family(cfg),
    "nonmarkov": lambda cfg: _pathwise_family(cfg, mode="midpoint", conditional=True),
    "rank2-compare": _rank2_compare,
    "baseline-compare": _baseline_compare,
    "cluster": _cluster_experiment,
    "realdata-auto": _realdata_auto,
    "realdata-pipeline": _realdata_pipeline,
}


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Execute an experiment and write its artifact family to out_dir.

    Artifacts: resolved_config.json, report.json, report.txt, series/*.csv,
    and figures/*.png (unless figures are disabled).  Returns the report.
    """
    out = Path(out_dir or cfg.out_dir or f"sigregime-{cfg.experiment}")
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    report, series, figures = _RUNNERS[cfg.experiment](cfg)
    report.setdefault("runtime", {})["total_seconds"] = time.perf_counter() - started
    for name, columns in series.items():
        write_series(out / "series" / f"{name}.csv", columns)
    if cfg.figures:
        fig_dir = out / "figures"
        fig_dir.mkdir(parents=True, exist_ok=True)
        figures(fig_dir)
    write_report(out, report, cfg.to_dict())
    return report
