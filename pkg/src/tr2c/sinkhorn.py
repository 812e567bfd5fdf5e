"""Sinkhorn projection onto doubly stochastic matrices, with reverse mode.

The iteration is carried in scaling form: after any number of rounds the
iterate equals ``diag(a) K diag(b)`` with ``K = exp(M / tau)``. A row
normalization sets ``a = 1 / (K b)``, a column normalization sets
``b = 1 / (K^T a)``. The backward pass replays these vector updates, so it
needs O(N) memory per round instead of one N x N matrix per round.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError, InvalidInputError


@dataclass(frozen=True)
class SinkhornConfig:
    iterations: int = 10
    temperature: float = 1.0
    epsilon_floor: float = 1e-12

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidConfigError(f"sinkhorn iterations must be >= 1, got {self.iterations}")
        if not self.temperature > 0:
            raise InvalidConfigError(f"sinkhorn temperature must be positive, got {self.temperature}")


@dataclass
class Affinity:
    gamma: np.ndarray
    row_tol: float
    col_tol: float

    @property
    def n(self) -> int:
        return self.gamma.shape[0]


def _kernel(M: np.ndarray, cfg: SinkhornConfig):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {M.shape}")
    if np.isnan(M).any():
        raise InvalidInputError("sinkhorn input contains NaN")
    # a per-row shift is absorbed by the first row normalization
    shifted = (M - M.max(axis=1, keepdims=True)) / cfg.temperature
    K = np.exp(shifted)
    floored = K < cfg.epsilon_floor
    if floored.any():
        K[floored] = cfg.epsilon_floor
    return K, floored


def _scalings(K: np.ndarray, iterations: int):
    b = np.ones(K.shape[1])
    history = []
    for _ in range(iterations):
        a = 1.0 / (K @ b)
        history.append((a, b))
        b = 1.0 / (K.T @ a)
    return a, b, history


def sinkhorn_project(M, cfg: SinkhornConfig | None = None) -> Affinity:
    """Project ``exp(M / tau)`` toward the doubly stochastic set.

    Runs ``cfg.iterations`` rounds of row then column normalization.
    """
    cfg = cfg or SinkhornConfig()
    K, _ = _kernel(M, cfg)
    a, b, _ = _scalings(K, cfg.iterations)
    gamma = a[:, None] * K * b[None, :]
    return Affinity(
        gamma=gamma,
        row_tol=float(np.abs(gamma.sum(axis=1) - 1).max()),
        col_tol=float(np.abs(gamma.sum(axis=0) - 1).max()),
    )


def sinkhorn_backward(M, cfg: SinkhornConfig | None, upstream) -> np.ndarray:
    """Gradient of ``<upstream, sinkhorn_project(M).gamma>`` with respect to ``M``."""
    cfg = cfg or SinkhornConfig()
    K, floored = _kernel(M, cfg)
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != K.shape:
        raise InvalidInputError(f"upstream shape {upstream.shape} != {K.shape}")
    a, b, history = _scalings(K, cfg.iterations)

    GK = upstream * K
    da = GK @ b
    db = GK.T @ a
    # each replayed normalization contributes a rank-one term to dK
    left, right = [], []
    for a_t, b_prev in reversed(history):
        # b_t = 1 / (K^T a_t)
        ds = -db * (1.0 / (K.T @ a_t)) ** 2
        left.append(a_t)
        right.append(ds)
        da_t = da + K @ ds
        # a_t = 1 / (K b_prev)
        dq = -da_t * a_t**2
        left.append(dq)
        right.append(b_prev)
        db = K.T @ dq
        da = np.zeros_like(da)
    dK = upstream * np.outer(a, b) + np.stack(left, axis=1) @ np.stack(right, axis=1).T
    dM = dK * K / cfg.temperature
    dM[floored] = 0.0
    return dM
