"""Clustering accuracy (Hungarian matching) and normalized mutual information."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InvalidInputError


def _pair(pred, gt):
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.ndim != 1 or gt.ndim != 1 or pred.size != gt.size:
        raise InvalidInputError(f"label vectors must be 1-D of equal length, got {pred.shape} and {gt.shape}")
    if pred.size == 0:
        raise InvalidInputError("label vectors are empty")
    return pred, gt


def confusion_matrix(pred, gt):
    """Counts with rows indexed by predicted label, columns by ground truth."""
    pred, gt = _pair(pred, gt)
    p_vals, p_idx = np.unique(pred, return_inverse=True)
    g_vals, g_idx = np.unique(gt, return_inverse=True)
    conf = np.zeros((p_vals.size, g_vals.size), dtype=int)
    np.add.at(conf, (p_idx, g_idx), 1)
    return conf, p_vals, g_vals


def accuracy(pred, gt):
    """Fraction matched under the best one-to-one pred -> gt label map.

    Returns ``(acc, matching)``; predicted labels left unmatched (more
    predicted than true classes) are absent from ``matching`` and count as
    errors.
    """
    conf, p_vals, g_vals = confusion_matrix(pred, gt)
    size = max(conf.shape)
    padded = np.zeros((size, size), dtype=int)
    padded[:conf.shape[0], :conf.shape[1]] = conf
    rows, cols = linear_sum_assignment(padded, maximize=True)
    matching = {}
    hits = 0
    for r, c in zip(rows, cols):
        if r < conf.shape[0] and c < conf.shape[1]:
            matching[p_vals[r].item()] = g_vals[c].item()
            hits += conf[r, c]
    return hits / len(np.asarray(pred)), matching


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return -math.fsum(p * np.log(p))


def nmi(pred, gt) -> float:
    """``I(pred; gt) / sqrt(H(pred) H(gt))`` with natural logarithms.

    Sums use ``math.fsum`` so relabeling either side gives a bit-identical
    result.
    """
    conf, _, _ = confusion_matrix(pred, gt)
    n = conf.sum()
    nonzero = conf > 0
    if np.all(nonzero.sum(axis=0) == 1) and np.all(nonzero.sum(axis=1) == 1):
        return 1.0  # same partition up to relabeling
    h_p = _entropy(conf.sum(axis=1), n)
    h_g = _entropy(conf.sum(axis=0), n)
    if h_p == 0 or h_g == 0:
        return 0.0
    joint = conf[nonzero] / n
    outer = np.outer(conf.sum(axis=1), conf.sum(axis=0))[nonzero] / n**2
    mi = math.fsum(joint * np.log(joint / outer))
    return float(np.clip(mi / math.sqrt(h_p * h_g), 0.0, 1.0))


@dataclass
class EvalReport:
    acc: float
    nmi: float
    confusion: list
    matching: dict
    config_echo: dict = field(default_factory=dict)
    seed: int | None = None

    def to_json(self) -> str:
        payload = {
            "acc": self.acc,
            "nmi": self.nmi,
            "confusion": self.confusion,
            "matching": {str(k): v for k, v in sorted(self.matching.items())},
            "config_echo": self.config_echo,
            "seed": self.seed,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def evaluate(pred, gt, config_echo: dict | None = None, seed: int | None = None) -> EvalReport:
    acc, matching = accuracy(pred, gt)
    conf, _, _ = confusion_matrix(pred, gt)
    return EvalReport(acc=float(acc), nmi=nmi(pred, gt), confusion=conf.tolist(),
                      matching=matching, config_echo=config_echo or {}, seed=seed)
