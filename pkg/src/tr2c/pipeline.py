"""Train-then-cluster runs and the sweeps built from them (seeds, ablation,
noise, timing)."""
from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import network
from .clustering import spectral_cluster
from .config import to_train_config, with_gates
from .data import NoiseSpec, corrupt
from .metrics import EvalReport, evaluate
from .network import NetworkParams
from .objective import CodingConfig, temporal_laplacian
from .sinkhorn import Affinity, SinkhornConfig, sinkhorn_project
from .trainer import RunTrace, loss_and_grad, train

# (rho, rho_c, temporal): six partial-loss rows, then full, then all off
ABLATION_GATES = (
    (1, 1, 0),
    (0, 1, 1),
    (1, 0, 1),
    (1, 0, 0),
    (0, 1, 0),
    (0, 0, 1),
    (1, 1, 1),
    (0, 0, 0),
)
FULL_GATES = (1, 1, 1)


@dataclass
class RunResult:
    labels: np.ndarray
    params: NetworkParams
    affinity: Affinity
    trace: RunTrace
    resolved: dict
    report: EvalReport | None = None


def resolve_k(resolved: dict, k: int | None = None, gt=None) -> dict:
    """Fill ``k_clusters`` from an explicit value, the config, or the ground truth."""
    if k is not None:
        return {**resolved, "k_clusters": int(k)}
    if resolved.get("k_clusters") is None and gt is not None:
        return {**resolved, "k_clusters": int(np.unique(gt).size)}
    return dict(resolved)


def run_once(X, resolved: dict, gt=None, seed: int | None = None) -> RunResult:
    """Train with ``resolved`` (seed overridden if given), then cluster Gamma."""
    if seed is not None:
        resolved = {**resolved, "seed": int(seed)}
    cfg = to_train_config(resolved)
    all_off = not any(cfg.coding.gates)
    if all_off:
        # nothing to optimize: cluster the affinity of the initial network
        params = network.init_params(X.shape[0], cfg.d_pre, cfg.d, cfg.seed)
        cache = network.forward(params, X)
        affinity = sinkhorn_project(cache.y.T @ cache.y, cfg.sinkhorn)
        trace = RunTrace()
    else:
        params, affinity, trace = train(X, cfg)
    labels = spectral_cluster(affinity.gamma, cfg.k_clusters, seed=cfg.seed)
    report = evaluate(labels, gt, config_echo=resolved, seed=cfg.seed) if gt is not None else None
    return RunResult(labels, params, affinity, trace, resolved, report)


def seed_list(base: int, seeds) -> list[int]:
    """``seeds`` is a count (int or digit string) or a comma-separated list."""
    if seeds is None:
        return [base]
    if isinstance(seeds, int):
        return list(range(base, base + seeds))
    text = str(seeds).strip()
    if "," not in text:
        return list(range(base, base + int(text)))
    return [int(s) for s in text.split(",") if s.strip()]


def run_job(job) -> RunResult:
    X, resolved, gt, seed = job
    return run_once(X, resolved, gt, seed)


def _score(job):
    X, resolved, gt, seed = job
    r = run_once(X, resolved, gt, seed)
    return r.report.acc, r.report.nmi


def map_jobs(fn, jobs, n_workers: int | None = None):
    """Run ``fn`` over ``jobs``; results come back in job order regardless of
    worker count."""
    jobs = list(jobs)
    n_workers = n_workers or 1
    if n_workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(n_workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


def default_workers() -> int:
    return os.cpu_count() or 1


def ablation(X, gt, resolved: dict, seeds: list[int], workers: int | None = None):
    """Mean/std ACC and NMI for every gate combination, in table order."""
    jobs = [(X, with_gates(resolved, g), gt, s) for g in ABLATION_GATES for s in seeds]
    scores = map_jobs(_score, jobs, workers)
    rows = []
    for i, g in enumerate(ABLATION_GATES):
        block = np.array(scores[i * len(seeds):(i + 1) * len(seeds)])
        rows.append({
            "gates": g,
            "acc": float(block[:, 0].mean()),
            "nmi": float(block[:, 1].mean()),
            "acc_std": float(block[:, 0].std()),
            "nmi_std": float(block[:, 1].std()),
            "accs": block[:, 0].tolist(),
        })
    return rows


def _noise_score(job):
    X, resolved, gt, sigma, seed = job
    Xc = corrupt(X, NoiseSpec(sigma=sigma, seed=seed))
    return _score((Xc, resolved, gt, seed))


def noise_curve(X, gt, resolved: dict, sigmas, seeds: list[int], workers: int | None = None):
    """Corrupt, retrain and evaluate for every (sigma, seed) pair."""
    jobs = [(X, resolved, gt, float(sig), s) for sig in sigmas for s in seeds]
    scores = map_jobs(_noise_score, jobs, workers)
    rows = []
    for i, sig in enumerate(sigmas):
        block = np.array(scores[i * len(seeds):(i + 1) * len(seeds)])
        rows.append({
            "sigma": float(sig),
            "acc_mean": float(block[:, 0].mean()),
            "acc_std": float(block[:, 0].std()),
            "nmi_mean": float(block[:, 1].mean()),
            "nmi_std": float(block[:, 1].std()),
            "n_seeds": len(seeds),
            "accs": block[:, 0].tolist(),
        })
    return rows


def bench(n_values, feature_dim: int = 324, d_pre: int = 512, d: int = 64,
          repeats: int = 3, seed: int = 0):
    """Median wall-clock ms for one loss + gradient evaluation per frame count."""
    rng = np.random.default_rng(seed)
    coding, sink = CodingConfig(), SinkhornConfig()
    params = network.init_params(feature_dim, d_pre, d, seed)
    rows = []
    for n in n_values:
        X = rng.standard_normal((feature_dim, int(n)))
        graph = temporal_laplacian(int(n), 2)
        loss_and_grad(params, X, graph, coding, sink)  # warm-up
        times = []
        for _ in range(repeats):
            start = time.perf_counter()
            loss_and_grad(params, X, graph, coding, sink)
            times.append((time.perf_counter() - start) * 1e3)
        rows.append({"n": int(n), "ms_per_iter": float(np.median(times))})
    return rows
