"""Coding-rate objective terms and their analytic adjoints.

All representation matrices are laid out column-per-frame: ``Z`` has shape
``(d, N)``. Log-determinants of ``I + c * A @ A.T`` are always evaluated on the
smaller of the two Gram matrices (``d x d`` or ``N x N``), which have the same
determinant, and factored with Cholesky.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidConfigError, InvalidInputError, InvalidPartitionError

STOCHASTIC_TOL = 1e-4


@dataclass(frozen=True)
class CodingConfig:
    epsilon: float = 0.1
    lambda1: float = 0.1
    lambda2: float = 12.0
    enable_rho: bool = True
    enable_rho_c: bool = True
    enable_temporal: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise InvalidConfigError("lambda1 and lambda2 must be nonnegative")

    @property
    def gates(self) -> tuple[bool, bool, bool]:
        return (self.enable_rho, self.enable_rho_c, self.enable_temporal)


@dataclass(frozen=True)
class TemporalGraph:
    """Sliding-window graph over ``n_frames`` frames.

    ``w_ij = 1`` iff ``|i - j| <= window / 2`` (self-loops included). The dense
    ``affinity`` and ``laplacian`` matrices are built lazily; the regularizer
    itself is evaluated on the band without materializing them.
    """

    n_frames: int
    window: int

    @property
    def half_width(self) -> int:
        return self.window // 2

    @cached_property
    def affinity(self) -> np.ndarray:
        idx = np.arange(self.n_frames)
        return (np.abs(idx[:, None] - idx[None, :]) <= self.half_width).astype(float)

    @cached_property
    def laplacian(self) -> np.ndarray:
        w = self.affinity
        return np.diag(w.sum(axis=1)) - w


def _check_matrix(Z, name="Z") -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {Z.shape}")
    if not np.all(np.isfinite(Z)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return Z


def _cholesky_logdet(M: np.ndarray) -> np.ndarray:
    """log det of (a batch of) symmetric positive definite matrices."""
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:  # I + PSD is always PD
        raise RuntimeError("Cholesky factorization failed on I + PSD matrix") from exc
    return 2.0 * np.log(np.diagonal(L, axis1=-2, axis2=-1)).sum(axis=-1)


def logdet_gram(A: np.ndarray, scale: float) -> float:
    """``log det(I + scale * A @ A.T)`` via whichever Gram matrix is smaller."""
    rows, cols = A.shape
    G = A @ A.T if rows <= cols else A.T @ A
    return float(_cholesky_logdet(np.eye(G.shape[0]) + scale * G))


def logdet_gram_outer(A: np.ndarray, scale: float) -> float:
    """Same quantity as :func:`logdet_gram`, always on the ``rows x rows`` Gram."""
    return float(_cholesky_logdet(np.eye(A.shape[0]) + scale * (A @ A.T)))


def logdet_gram_inner(A: np.ndarray, scale: float) -> float:
    """Same quantity as :func:`logdet_gram`, always on the ``cols x cols`` Gram."""
    return float(_cholesky_logdet(np.eye(A.shape[1]) + scale * (A.T @ A)))


def coding_rate(Z, epsilon: float) -> float:
    """Total coding rate ``1/2 log det(I + d/(N eps^2) Z Z^T)``."""
    Z = _check_matrix(Z)
    if not epsilon > 0:
        raise InvalidConfigError("epsilon must be positive")
    d, n = Z.shape
    return 0.5 * logdet_gram(Z, d / (n * epsilon**2))


def class_coding_rate(Z, labels, epsilon: float, n_classes: int | None = None) -> float:
    """Sum of per-class coding rates for a hard partition given as labels."""
    Z = _check_matrix(Z)
    labels = np.asarray(labels)
    d, n = Z.shape
    if labels.shape != (n,):
        raise InvalidInputError(f"labels must have length {n}, got shape {labels.shape}")
    if labels.size and labels.min() < 0:
        raise InvalidPartitionError("class indices must be nonnegative")
    k = int(labels.max()) + 1 if n_classes is None else n_classes
    if labels.max() >= k:
        raise InvalidPartitionError(f"class index {labels.max()} >= class count {k}")
    counts = np.bincount(labels, minlength=k)
    if np.any(counts == 0):
        raise InvalidPartitionError(f"empty classes: {np.flatnonzero(counts == 0).tolist()}")
    total = 0.0
    for j in range(k):
        nj = counts[j]
        total += nj / (2 * n) * logdet_gram(Z[:, labels == j], d / (nj * epsilon**2))
    return total


def _check_affinity(gamma, n: int, stochastic: bool = True) -> np.ndarray:
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (n, n):
        raise InvalidInputError(f"affinity must be {n}x{n}, got {gamma.shape}")
    if not np.all(np.isfinite(gamma)) or np.any(gamma < 0):
        raise InvalidInputError("affinity must be finite and nonnegative")
    if stochastic and (np.abs(gamma.sum(axis=0) - 1).max() > STOCHASTIC_TOL
            or np.abs(gamma.sum(axis=1) - 1).max() > STOCHASTIC_TOL):
        raise InvalidInputError("affinity is not doubly stochastic")
    return gamma


def _triu(d: int):
    return np.triu_indices(d)


def _outer_stack(Z: np.ndarray) -> np.ndarray:
    """Row ``i`` holds the packed upper triangle of ``z_i z_i^T``."""
    d, _ = Z.shape
    rows, cols = _triu(d)
    return (Z[rows] * Z[cols]).T


def _unpack(packed: np.ndarray, d: int) -> np.ndarray:
    """Packed upper triangles ``(N, d(d+1)/2)`` -> symmetric ``(N, d, d)``."""
    rows, cols = _triu(d)
    slot = np.empty((d, d), dtype=np.intp)
    slot[rows, cols] = np.arange(rows.size)
    slot[cols, rows] = slot[rows, cols]
    return np.take(packed, slot.ravel(), axis=1).reshape(-1, d, d)


def _pack(mats: np.ndarray) -> np.ndarray:
    rows, cols = _triu(mats.shape[-1])
    return mats[:, rows, cols]


def _relaxed_blocks(Z: np.ndarray, gamma: np.ndarray, beta: float):
    """Stack of ``M_j = I + beta * Z Diag(gamma[:, j]) Z^T``, shape ``(N, d, d)``.

    Only the upper triangles are accumulated, which halves the dominant
    ``N^2 d^2`` product.
    """
    d, _ = Z.shape
    outer = _outer_stack(Z)
    M = _unpack(gamma.T @ outer, d) * beta
    M += np.eye(d)
    return M, outer


def relaxed_class_coding_rate(Z, gamma, epsilon: float, check_stochastic: bool = True) -> float:
    """``(1/N) sum_j log det(I + d/eps^2 Z Diag(Gamma_j) Z^T)``.

    ``check_stochastic=False`` skips the row/column-sum test, for truncated
    Sinkhorn output whose row sums are only approximately 1.
    """
    Z = _check_matrix(Z)
    d, n = Z.shape
    gamma = _check_affinity(gamma, n, check_stochastic)
    M, _ = _relaxed_blocks(Z, gamma, d / epsilon**2)
    # index-ascending reduction keeps the sum reproducible
    return float(np.add.reduce(_cholesky_logdet(M))) / n


def temporal_laplacian(n_frames: int, window: int) -> TemporalGraph:
    if n_frames < 2:
        raise InvalidInputError(f"need at least 2 frames, got {n_frames}")
    if window < 2 or window % 2:
        raise InvalidConfigError(f"window size must be a positive even integer >= 2, got {window}")
    return TemporalGraph(int(n_frames), int(window))


def temporal_regularizer(Z, graph: TemporalGraph) -> float:
    """``tr(Z L Z^T)``, i.e. the sum of squared distances over window pairs."""
    Z = _check_matrix(Z)
    if Z.shape[1] != graph.n_frames:
        raise InvalidInputError(
            f"Z has {Z.shape[1]} columns but the graph has {graph.n_frames} frames")
    total = 0.0
    for k in range(1, min(graph.half_width, graph.n_frames - 1) + 1):
        diff = Z[:, k:] - Z[:, :-k]
        total += float(np.sum(diff * diff))
    return total


def _temporal_grad(Z: np.ndarray, graph: TemporalGraph) -> np.ndarray:
    """``2 Z L`` evaluated on the band."""
    g = np.zeros_like(Z)
    for k in range(1, min(graph.half_width, graph.n_frames - 1) + 1):
        diff = Z[:, k:] - Z[:, :-k]
        g[:, k:] += 2 * diff
        g[:, :-k] -= 2 * diff
    return g


@dataclass
class LossTerms:
    """Ungated, unweighted terms plus the gated total."""

    total: float
    rho: float
    rho_c: float
    reg: float


def loss_terms(Z, gamma, graph: TemporalGraph, cfg: CodingConfig,
               check_stochastic: bool = True) -> LossTerms:
    """Evaluate every term; terms whose gate is off are reported as 0."""
    Z = _check_matrix(Z)
    d, n = Z.shape
    if graph.n_frames != n:
        raise InvalidInputError(f"graph has {graph.n_frames} frames, Z has {n}")
    rho = coding_rate(Z, cfg.epsilon) if cfg.enable_rho else 0.0
    rho_c = (relaxed_class_coding_rate(Z, gamma, cfg.epsilon, check_stochastic)
             if cfg.enable_rho_c else 0.0)
    reg = temporal_regularizer(Z, graph) if cfg.enable_temporal else 0.0
    total = -rho + cfg.lambda1 * rho_c + cfg.lambda2 * reg
    return LossTerms(total, rho, rho_c, reg)


def total_loss(Z, gamma, graph: TemporalGraph, cfg: CodingConfig,
               check_stochastic: bool = True) -> float:
    return loss_terms(Z, gamma, graph, cfg, check_stochastic).total


def loss_adjoints(Z, gamma, graph: TemporalGraph, cfg: CodingConfig,
                  check_stochastic: bool = True):
    """Gradients of :func:`total_loss` with respect to ``Z`` and ``gamma``.

    Returns ``(dZ, dgamma, terms)`` where ``terms`` is the :class:`LossTerms`
    evaluated at the same point, so callers need only one pass.
    """
    Z = _check_matrix(Z)
    d, n = Z.shape
    if graph.n_frames != n:
        raise InvalidInputError(f"graph has {graph.n_frames} frames, Z has {n}")
    eps2 = cfg.epsilon**2
    dZ = np.zeros_like(Z)
    dgamma = np.zeros((n, n))
    rho = rho_c = reg = 0.0

    if cfg.enable_rho:
        alpha = d / (n * eps2)
        if d <= n:
            M = np.eye(d) + alpha * (Z @ Z.T)
            rho = 0.5 * float(_cholesky_logdet(M))
            dZ -= alpha * np.linalg.solve(M, Z)
        else:
            M = np.eye(n) + alpha * (Z.T @ Z)
            rho = 0.5 * float(_cholesky_logdet(M))
            # push-through: (I + a ZZ^T)^-1 Z = Z (I + a Z^T Z)^-1
            dZ -= alpha * np.linalg.solve(M, Z.T).T

    if cfg.enable_rho_c:
        gamma = _check_affinity(gamma, n, check_stochastic)
        beta = d / eps2
        M, outer = _relaxed_blocks(Z, gamma, beta)
        rho_c = float(np.add.reduce(_cholesky_logdet(M))) / n
        minv = _pack(np.linalg.inv(M))
        w = cfg.lambda1 * beta / n
        # sum_j gamma_ij M_j^{-1}, applied to z_i
        s = _unpack(gamma @ minv, d)
        dZ += 2 * w * np.einsum("iab,bi->ai", s, Z)
        # z_i^T M_j^{-1} z_i for every (i, j); off-diagonal entries count twice
        rows, cols = _triu(d)
        minv[:, rows != cols] *= 2
        dgamma = w * (outer @ minv.T)

    if cfg.enable_temporal:
        reg = temporal_regularizer(Z, graph)
        dZ += cfg.lambda2 * _temporal_grad(Z, graph)

    total = -rho + cfg.lambda1 * rho_c + cfg.lambda2 * reg
    return dZ, dgamma, LossTerms(total, rho, rho_c, reg)
