"""Two-layer MLP encoder with a feature head and a cluster head.

Samples are processed row-wise internally (``A = X.T`` has one frame per row);
the public outputs ``z`` and ``y`` are column-per-frame ``(d, N)`` matrices to
match the objective.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import IngestionError, InvalidInputError, NumericalError

NORM_FLOOR = 1e-8
CHECKPOINT_MAGIC = b"TR2C"
CHECKPOINT_VERSION = 1


@dataclass
class NetworkParams:
    w1: np.ndarray  # (D, d_pre)
    b1: np.ndarray
    w2: np.ndarray  # (d_pre, d_pre)
    b2: np.ndarray
    wz: np.ndarray  # (d_pre, d)
    bz: np.ndarray
    wy: np.ndarray  # (d_pre, d)
    by: np.ndarray

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.w1.shape[0], self.w1.shape[1], self.wz.shape[1])

    def tensors(self) -> list[np.ndarray]:
        return [getattr(self, f.name) for f in fields(self)]

    @property
    def size(self) -> int:
        return sum(t.size for t in self.tensors())

    def flatten(self) -> np.ndarray:
        return np.concatenate([t.ravel() for t in self.tensors()])

    def unflatten(self, vector: np.ndarray) -> "NetworkParams":
        """New params with this instance's shapes, filled from ``vector``."""
        out, offset = [], 0
        for t in self.tensors():
            out.append(np.asarray(vector[offset:offset + t.size], dtype=float).reshape(t.shape).copy())
            offset += t.size
        if offset != vector.size:
            raise InvalidInputError(f"vector has {vector.size} entries, expected {offset}")
        return NetworkParams(*out)

    def copy(self) -> "NetworkParams":
        return NetworkParams(*(t.copy() for t in self.tensors()))


def parameter_count(D: int, d_pre: int, d: int) -> int:
    return D * d_pre + d_pre + d_pre * d_pre + d_pre + 2 * (d_pre * d + d)


def init_params(D: int, d_pre: int, d: int, seed: int) -> NetworkParams:
    """Uniform ``[-sqrt(1/fan_in), sqrt(1/fan_in)]`` weights, zero biases."""
    if min(D, d_pre, d) < 1:
        raise InvalidInputError(f"dimensions must be positive, got {(D, d_pre, d)}")
    rng = np.random.default_rng(seed)

    def layer(fan_in, fan_out):
        bound = np.sqrt(1.0 / fan_in)
        return rng.uniform(-bound, bound, size=(fan_in, fan_out)), np.zeros(fan_out)

    w1, b1 = layer(D, d_pre)
    w2, b2 = layer(d_pre, d_pre)
    wz, bz = layer(d_pre, d)
    wy, by = layer(d_pre, d)
    return NetworkParams(w1, b1, w2, b2, wz, bz, wy, by)


@dataclass
class ForwardCache:
    inputs: np.ndarray  # (N, D)
    u1: np.ndarray
    h1: np.ndarray
    u2: np.ndarray
    h2: np.ndarray
    z_raw: np.ndarray  # (N, d), guard already applied
    y_raw: np.ndarray
    z_norm: np.ndarray  # (N,)
    y_norm: np.ndarray
    z_rows: np.ndarray  # normalized, (N, d)
    y_rows: np.ndarray

    @property
    def z(self) -> np.ndarray:
        """Unit-column representation, shape ``(d, N)``."""
        return self.z_rows.T

    @property
    def y(self) -> np.ndarray:
        return self.y_rows.T


def _guarded_normalize(raw: np.ndarray):
    norms = np.linalg.norm(raw, axis=1)
    small = norms < NORM_FLOOR
    if small.any():
        raw = raw.copy()
        raw[small, 0] += NORM_FLOOR
        norms = np.linalg.norm(raw, axis=1)
    return raw, norms, raw / norms[:, None]


def _finite(name: str, value: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(value)):
        raise NumericalError(f"non-finite activations in layer '{name}'")
    return value


def forward(params: NetworkParams, X) -> ForwardCache:
    """Evaluate both heads on the ``(D, N)`` feature matrix ``X``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != params.w1.shape[0]:
        raise InvalidInputError(
            f"features have shape {X.shape}, network expects {params.w1.shape[0]} rows")
    A = X.T
    # overflow surfaces as a NumericalError from _finite, not a warning
    with np.errstate(over="ignore", invalid="ignore"):
        u1 = _finite("encoder.1", A @ params.w1 + params.b1)
        h1 = np.maximum(u1, 0.0)
        u2 = _finite("encoder.2", h1 @ params.w2 + params.b2)
        h2 = np.maximum(u2, 0.0)
        z_raw = _finite("feature_head", h2 @ params.wz + params.bz)
        y_raw = _finite("cluster_head", h2 @ params.wy + params.by)
    z_raw, z_norm, z_rows = _guarded_normalize(z_raw)
    y_raw, y_norm, y_rows = _guarded_normalize(y_raw)
    return ForwardCache(A, u1, h1, u2, h2, z_raw, y_raw, z_norm, y_norm, z_rows, y_rows)


def normalize_adjoint(unit_rows: np.ndarray, norms: np.ndarray, grad_rows: np.ndarray) -> np.ndarray:
    """Pull a gradient back through ``v -> v / ||v||`` row by row."""
    radial = np.sum(unit_rows * grad_rows, axis=1, keepdims=True)
    return (grad_rows - unit_rows * radial) / norms[:, None]


def backward(params: NetworkParams, cache: ForwardCache, dz, dy) -> NetworkParams:
    """Parameter gradients given adjoints of the normalized ``(d, N)`` outputs."""
    dz = np.asarray(dz, dtype=float)
    dy = np.asarray(dy, dtype=float)
    expected = cache.z_rows.T.shape
    if dz.shape != expected or dy.shape != expected:
        raise InvalidInputError(f"output adjoints must have shape {expected}")
    g_z = normalize_adjoint(cache.z_rows, cache.z_norm, dz.T)
    g_y = normalize_adjoint(cache.y_rows, cache.y_norm, dy.T)

    d_wz = cache.h2.T @ g_z
    d_bz = g_z.sum(axis=0)
    d_wy = cache.h2.T @ g_y
    d_by = g_y.sum(axis=0)

    d_u2 = (g_z @ params.wz.T + g_y @ params.wy.T) * (cache.u2 > 0)
    d_w2 = cache.h1.T @ d_u2
    d_b2 = d_u2.sum(axis=0)

    d_u1 = (d_u2 @ params.w2.T) * (cache.u1 > 0)
    d_w1 = cache.inputs.T @ d_u1
    d_b1 = d_u1.sum(axis=0)
    return NetworkParams(d_w1, d_b1, d_w2, d_b2, d_wz, d_bz, d_wy, d_by)


def save_checkpoint(params: NetworkParams, path) -> None:
    D, d_pre, d = params.dims
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<H3I", CHECKPOINT_VERSION, D, d_pre, d))
        for t in params.tensors():
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


def load_checkpoint(path) -> NetworkParams:
    raw = Path(path).read_bytes()
    header = len(CHECKPOINT_MAGIC) + struct.calcsize("<H3I")
    if len(raw) < header or raw[:4] != CHECKPOINT_MAGIC:
        raise IngestionError(f"{path}: not a TR2C checkpoint")
    version, D, d_pre, d = struct.unpack_from("<H3I", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise IngestionError(f"{path}: unsupported checkpoint version {version}")
    template = init_params(D, d_pre, d, seed=0)
    body = np.frombuffer(raw, dtype="<f8", offset=header)
    if body.size != template.size:
        raise IngestionError(
            f"{path}: expected {template.size} values for dims {(D, d_pre, d)}, found {body.size}")
    return template.unflatten(body.astype(float))
