"""Feature/label file formats, synthetic union-of-subspaces sequences,
noise corruption, and PCA export."""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IngestionError, InvalidInputError

BIN_MAGIC = b"MTX1"


def _validate(X: np.ndarray, source) -> np.ndarray:
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise IngestionError(f"{source}: empty matrix")
    bad = np.argwhere(~np.isfinite(X))
    if bad.size:
        r, c = bad[0]
        raise IngestionError(f"{source}: non-finite value at row {r + 1}, column {c + 1}")
    return X


def _load_csv(path: Path) -> np.ndarray:
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, line in enumerate(csv.reader(fh), start=1):
            if not line or all(not cell.strip() for cell in line):
                continue
            try:
                values = [float(cell) for cell in line]
            except ValueError as exc:
                raise IngestionError(f"{path}: row {lineno}: {exc}") from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise IngestionError(
                    f"{path}: row {lineno} has {len(values)} values, expected {width}")
            rows.append(values)
    if not rows:
        raise IngestionError(f"{path}: empty file")
    return np.array(rows, dtype=float)


def _load_bin(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != BIN_MAGIC:
        raise IngestionError(f"{path}: missing MTX1 header")
    rows, cols = struct.unpack_from("<II", raw, 4)
    expected = rows * cols * 4
    if len(raw) - 12 != expected:
        raise IngestionError(
            f"{path}: header declares {rows}x{cols} ({expected} bytes) but payload has "
            f"{len(raw) - 12} bytes starting at offset 12")
    return np.frombuffer(raw, dtype="<f4", offset=12).reshape(rows, cols).astype(float)


def infer_format(path) -> str:
    return "bin" if str(path).endswith((".bin", ".mtx")) else "csv"


def load_matrix(path, fmt: str | None = None) -> np.ndarray:
    """Load a ``D x N`` feature matrix (one column per frame)."""
    path = Path(path)
    fmt = fmt or infer_format(path)
    if not path.exists():
        raise IngestionError(f"{path}: no such file")
    if fmt == "csv":
        X = _load_csv(path)
    elif fmt == "bin":
        X = _load_bin(path)
    else:
        raise InvalidInputError(f"unknown matrix format {fmt!r}")
    return _validate(X, path)


def save_matrix(X, path, fmt: str | None = None) -> None:
    X = np.asarray(X, dtype=float)
    fmt = fmt or infer_format(path)
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            for row in X:
                writer.writerow([repr(float(v)) for v in row])
    elif fmt == "bin":
        with open(path, "wb") as fh:
            fh.write(BIN_MAGIC + struct.pack("<II", *X.shape))
            fh.write(np.ascontiguousarray(X, dtype="<f4").tobytes())
    else:
        raise InvalidInputError(f"unknown matrix format {fmt!r}")


def load_labels(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"{path}: no such file")
    labels = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            labels.append(int(line))
        except ValueError:
            raise IngestionError(f"{path}: line {lineno}: not an integer: {line!r}") from None
    if not labels:
        raise IngestionError(f"{path}: empty label file")
    return np.array(labels, dtype=int)


def save_labels(labels, path) -> None:
    Path(path).write_text("".join(f"{int(v)}\n" for v in labels))


@dataclass(frozen=True)
class SyntheticSpec:
    k: int = 3
    ambient_dim: int = 30
    subspace_dim: int = 3
    segment_lengths: tuple[int, ...] = (100, 100, 100)
    sigma: float = 0.05
    seed: int = 0
    # cluster id of each segment; defaults to segment i -> cluster i
    segment_clusters: tuple[int, ...] | None = None

    def clusters(self) -> tuple[int, ...]:
        if self.segment_clusters is not None:
            return self.segment_clusters
        return tuple(i % self.k for i in range(len(self.segment_lengths)))


def generate_synthetic(spec: SyntheticSpec, return_bases: bool = False):
    """Contiguous segments of frames drawn from mutually orthogonal subspaces.

    Returns ``(X, labels)`` or ``(X, labels, bases)`` with ``bases`` of shape
    ``(k, ambient_dim, subspace_dim)``.
    """
    k, D, r = spec.k, spec.ambient_dim, spec.subspace_dim
    if k < 1 or r < 1 or D < 1:
        raise InvalidInputError("k, ambient_dim and subspace_dim must be positive")
    if r * k > D:
        raise InvalidInputError(f"r*K = {r * k} exceeds ambient dimension {D}")
    if spec.sigma < 0:
        raise InvalidInputError("sigma must be nonnegative")
    clusters = spec.clusters()
    if len(clusters) != len(spec.segment_lengths) or any(not 0 <= c < k for c in clusters):
        raise InvalidInputError("segment_clusters must assign each segment a cluster in [0, k)")
    if any(n < 1 for n in spec.segment_lengths):
        raise InvalidInputError("segment lengths must be positive")

    rng = np.random.default_rng(spec.seed)
    q, _ = np.linalg.qr(rng.standard_normal((D, r * k)))
    bases = q.T.reshape(k, r, D).transpose(0, 2, 1)
    labels = np.concatenate([np.full(n, c) for n, c in zip(spec.segment_lengths, clusters)])
    coeffs = rng.standard_normal((r, labels.size))
    coeffs /= np.linalg.norm(coeffs, axis=0, keepdims=True)
    X = np.empty((D, labels.size))
    for c in range(k):
        cols = labels == c
        X[:, cols] = bases[c] @ coeffs[:, cols]
    if spec.sigma > 0:
        X += spec.sigma * rng.standard_normal(X.shape)
    if return_bases:
        return X, labels, bases
    return X, labels


def change_points(labels) -> int:
    labels = np.asarray(labels)
    return int(np.count_nonzero(labels[1:] != labels[:-1]))


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 0.0
    seed: int = 0


def corrupt(X, spec: NoiseSpec) -> np.ndarray:
    """Add i.i.d. ``N(0, sigma^2)`` noise to every entry."""
    X = np.asarray(X, dtype=float)
    if spec.sigma < 0:
        raise InvalidInputError("sigma must be nonnegative")
    if spec.sigma == 0:
        return X.copy()
    rng = np.random.default_rng(spec.seed)
    return X + spec.sigma * rng.standard_normal(X.shape)


@dataclass
class PCAResult:
    projections: np.ndarray  # (k, N)
    explained_variance_ratio: np.ndarray
    components: np.ndarray  # (rows, k)
    singular_values: np.ndarray = field(repr=False)


def pca_project(X, k: int) -> PCAResult:
    """Project column-per-frame data on its top ``k`` principal directions."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise InvalidInputError("expected a 2-D matrix")
    if not 1 <= k <= min(X.shape):
        raise InvalidInputError(f"k={k} must lie in [1, {min(X.shape)}]")
    centered = X - X.mean(axis=1, keepdims=True)
    U, S, _ = np.linalg.svd(centered, full_matrices=False)
    comps = U[:, :k].copy()
    flip = np.sign(comps[np.argmax(np.abs(comps), axis=0), np.arange(k)])
    comps *= np.where(flip == 0, 1.0, flip)
    var = S**2
    total = var.sum()
    ratio = var[:k] / total if total > 0 else np.zeros(k)
    return PCAResult(comps.T @ centered, ratio, comps, S)


def write_pca_csv(result: PCAResult, labels, path) -> None:
    proj = result.projections
    header = [f"pc{i + 1}" for i in range(proj.shape[0])] + ["label"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(proj.shape[1]):
            writer.writerow([repr(float(v)) for v in proj[:, i]] + [int(labels[i])])
