"""Full-batch training loop: forward, affinity, loss, backward, update."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import network
from .errors import InvalidConfigError, InvalidInputError, NumericalError
from .objective import CodingConfig, LossTerms, loss_adjoints, temporal_laplacian
from .sinkhorn import Affinity, SinkhornConfig, sinkhorn_backward, sinkhorn_project

log = logging.getLogger(__name__)

OPTIMIZERS = ("plain-gd", "adam")
TRACE_HEADER = ("iter", "loss", "rho", "rho_c", "reg", "grad_norm", "ms")


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 500
    lr: float = 5e-3
    optimizer: str = "plain-gd"
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0
    coding: CodingConfig = field(default_factory=CodingConfig)
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)
    window: int = 2
    k_clusters: int = 2
    d_pre: int = 512
    d: int = 64

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidConfigError(f"iterations must be >= 1, got {self.iterations}")
        if not self.lr > 0:
            raise InvalidConfigError(f"learning rate must be positive, got {self.lr}")
        if self.optimizer not in OPTIMIZERS:
            raise InvalidConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.k_clusters < 2:
            raise InvalidConfigError(f"cluster count must be >= 2, got {self.k_clusters}")
        if self.d_pre < 1 or self.d < 1:
            raise InvalidConfigError("network dimensions must be positive")


@dataclass
class TraceRow:
    iter: int
    loss: float
    rho: float
    rho_c: float
    reg: float
    grad_norm: float
    ms: float


@dataclass
class RunTrace:
    rows: list[TraceRow] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.rows])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_HEADER)
            for r in self.rows:
                writer.writerow([r.iter, repr(r.loss), repr(r.rho), repr(r.rho_c),
                                 repr(r.reg), repr(r.grad_norm), f"{r.ms:.3f}"])


@dataclass
class StepResult:
    terms: LossTerms
    grads: network.NetworkParams
    affinity: Affinity
    cache: network.ForwardCache


def loss_and_grad(params: network.NetworkParams, X, graph, coding: CodingConfig,
                  sinkhorn_cfg: SinkhornConfig) -> StepResult:
    """One forward/backward pass through network, Sinkhorn, and objective."""
    cache = network.forward(params, X)
    Z, Y = cache.z, cache.y
    similarity = Y.T @ Y
    affinity = sinkhorn_project(similarity, sinkhorn_cfg)
    dZ, dgamma, terms = loss_adjoints(Z, affinity.gamma, graph, coding, check_stochastic=False)
    if coding.enable_rho_c and coding.lambda1 != 0:
        d_sim = sinkhorn_backward(similarity, sinkhorn_cfg, dgamma)
        dY = Y @ (d_sim + d_sim.T)
    else:
        dY = np.zeros_like(Y)
    grads = network.backward(params, cache, dZ, dY)
    return StepResult(terms, grads, affinity, cache)


def _check_terms(it: int, terms: LossTerms) -> None:
    for name in ("total", "rho", "rho_c", "reg"):
        value = getattr(terms, name)
        if not np.isfinite(value):
            raise NumericalError(f"non-finite loss term '{name}' at iteration {it}")


class _Adam:
    def __init__(self, size, lr, betas, eps):
        self.lr, (self.b1, self.b2), self.eps = lr, betas, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta, grad):
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        m_hat = self.m / (1 - self.b1**self.t)
        v_hat = self.v / (1 - self.b2**self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _validate_features(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] < 2 or X.shape[0] < 1:
        raise InvalidInputError(f"features must be D x N with N >= 2, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("features contain non-finite entries")
    return X


def train(X, cfg: TrainConfig, params: network.NetworkParams | None = None):
    """Run the configured number of updates.

    Returns ``(params, affinity, trace)``; the affinity is recomputed from the
    final parameters.
    """
    X = _validate_features(X)
    D, n = X.shape
    if n < cfg.k_clusters:
        raise InvalidInputError(f"{n} frames cannot form {cfg.k_clusters} clusters")
    graph = temporal_laplacian(n, cfg.window)
    if params is None:
        params = network.init_params(D, cfg.d_pre, cfg.d, cfg.seed)
    theta = params.flatten()
    adam = _Adam(theta.size, cfg.lr, cfg.adam_betas, cfg.adam_eps) if cfg.optimizer == "adam" else None

    trace = RunTrace()
    for it in range(cfg.iterations):
        start = time.perf_counter()
        try:
            step = loss_and_grad(params, X, graph, cfg.coding, cfg.sinkhorn)
        except NumericalError as exc:
            raise NumericalError(f"iteration {it}: {exc}") from exc
        _check_terms(it, step.terms)
        grad = step.grads.flatten()
        grad_norm = float(np.linalg.norm(grad))
        if not np.isfinite(grad_norm):
            raise NumericalError(f"non-finite gradient at iteration {it}")
        theta = adam.step(theta, grad) if adam else theta - cfg.lr * grad
        params = params.unflatten(theta)
        t = step.terms
        trace.rows.append(TraceRow(it, t.total, t.rho, t.rho_c, t.reg, grad_norm,
                                   (time.perf_counter() - start) * 1e3))
        if it % 100 == 0:
            log.debug("iter %d loss %.6f grad %.3e", it, t.total, grad_norm)

    cache = network.forward(params, X)
    affinity = sinkhorn_project(cache.y.T @ cache.y, cfg.sinkhorn)
    return params, affinity, trace


def finite_diff_check(X, cfg: TrainConfig, n_params_sampled: int = 20, step: float = 1e-5,
                      params: network.NetworkParams | None = None, seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    Uses ``|g_a - g_n| / max(|g_a|, |g_n|, floor)`` per sampled parameter, with a
    floor of 1e-6 times the largest sampled magnitude so exact zeros compare
    as absolute errors. Returns 0 when both gradients vanish.
    """
    X = _validate_features(X)
    D, n = X.shape
    graph = temporal_laplacian(n, cfg.window)
    if params is None:
        params = network.init_params(D, cfg.d_pre, cfg.d, cfg.seed)
    theta = params.flatten()
    analytic = loss_and_grad(params, X, graph, cfg.coding, cfg.sinkhorn).grads.flatten()

    rng = np.random.default_rng(seed)
    idx = rng.choice(theta.size, size=min(n_params_sampled, theta.size), replace=False)

    def f(vec):
        p = params.unflatten(vec)
        return loss_and_grad(p, X, graph, cfg.coding, cfg.sinkhorn).terms.total

    numeric = np.empty(idx.size)
    for k, i in enumerate(idx):
        plus, minus = theta.copy(), theta.copy()
        plus[i] += step
        minus[i] -= step
        numeric[k] = (f(plus) - f(minus)) / (2 * step)

    sampled = analytic[idx]
    scale = np.maximum(np.abs(sampled), np.abs(numeric))
    if scale.max() == 0:
        return 0.0
    denom = np.maximum(scale, 1e-6 * scale.max())
    return float(np.max(np.abs(sampled - numeric) / denom))
