"""Plain-text run configuration (``key = value`` per line)."""
from __future__ import annotations

from pathlib import Path

from .errors import InvalidConfigError
from .objective import CodingConfig
from .sinkhorn import SinkhornConfig
from .trainer import OPTIMIZERS, TrainConfig

# defaults follow the HoG rows of the published hyperparameter table;
# k_clusters has no default and is resolved from --k or the ground truth
DEFAULTS = {
    "lambda1": 0.1,
    "lambda2": 12.0,
    "epsilon": 0.1,
    "window_s": 2,
    "d_pre": 512,
    "d": 64,
    "iterations": 500,
    "eta": 5e-3,
    "optimizer": "plain-gd",
    "seed": 0,
    "k_clusters": None,
    "sinkhorn_iters": 10,
    "sinkhorn_tau": 1.0,
    "enable_rho": True,
    "enable_rho_c": True,
    "enable_temporal": True,
}

# settings used for the synthetic union-of-subspaces benchmark
SYNTHETIC_TUNED = {
    **DEFAULTS,
    "d_pre": 128,
    "d": 16,
    "iterations": 200,
    "eta": 1e-3,
    "optimizer": "adam",
    "sinkhorn_tau": 0.2,
}

_INT_KEYS = {"window_s", "d_pre", "d", "iterations", "seed", "k_clusters", "sinkhorn_iters"}
_FLOAT_KEYS = {"lambda1", "lambda2", "epsilon", "eta", "sinkhorn_tau"}
_BOOL_KEYS = {"enable_rho", "enable_rho_c", "enable_temporal"}
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(key: str, raw: str, where: str):
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
    except ValueError:
        raise InvalidConfigError(f"{where}: {key} expects a number, got {raw!r}") from None
    if key in _BOOL_KEYS:
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise InvalidConfigError(f"{where}: {key} expects a boolean, got {raw!r}")
    if key == "optimizer" and raw not in OPTIMIZERS:
        raise InvalidConfigError(f"{where}: optimizer must be one of {OPTIMIZERS}")
    return raw


def parse_config(text: str, source: str = "<config>") -> dict:
    """Parse config text into a fully resolved dict (defaults filled in)."""
    resolved = dict(DEFAULTS)
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if "=" not in line:
            raise InvalidConfigError(f"{where}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise InvalidConfigError(f"{where}: unknown key {key!r}")
        resolved[key] = _coerce(key, raw, where)
    return resolved


def load_config(path) -> dict:
    if path is None:
        return dict(DEFAULTS)
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InvalidConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def format_config(resolved: dict) -> str:
    return "".join(f"{k} = {str(v).lower() if isinstance(v, bool) else v}\n"
                   for k, v in resolved.items() if v is not None)


def to_train_config(resolved: dict) -> TrainConfig:
    if resolved.get("k_clusters") is None:
        raise InvalidConfigError("cluster count is unset: pass --k, set k_clusters, or supply labels")
    coding = CodingConfig(
        epsilon=resolved["epsilon"],
        lambda1=resolved["lambda1"],
        lambda2=resolved["lambda2"],
        enable_rho=resolved["enable_rho"],
        enable_rho_c=resolved["enable_rho_c"],
        enable_temporal=resolved["enable_temporal"],
    )
    sink = SinkhornConfig(iterations=resolved["sinkhorn_iters"],
                          temperature=resolved["sinkhorn_tau"])
    return TrainConfig(
        iterations=resolved["iterations"],
        lr=resolved["eta"],
        optimizer=resolved["optimizer"],
        seed=resolved["seed"],
        coding=coding,
        sinkhorn=sink,
        window=resolved["window_s"],
        k_clusters=resolved["k_clusters"],
        d_pre=resolved["d_pre"],
        d=resolved["d"],
    )


def with_gates(resolved: dict, gates) -> dict:
    rho, rho_c, temporal = (bool(g) for g in gates)
    return {**resolved, "enable_rho": rho, "enable_rho_c": rho_c, "enable_temporal": temporal}


__all__ = ["DEFAULTS", "SYNTHETIC_TUNED", "parse_config", "load_config", "format_config",
           "to_train_config", "with_gates"]
