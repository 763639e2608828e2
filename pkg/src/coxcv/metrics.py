"""Estimation and prediction accuracy measures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import build_risk_index

PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class MseSummary:
    mse_selected: float
    mse_oracle: float

    @property
    def log_ratio(self) -> float:
        return float(np.log(self.mse_selected / self.mse_oracle))


def squared_error(beta_hat, beta_star) -> float:
    beta_hat = np.asarray(beta_hat, dtype=float)
    beta_star = np.asarray(beta_star, dtype=float)
    if beta_hat.shape != beta_star.shape:
        raise ValueError("coefficient vectors differ in length")
    diff = beta_hat - beta_star
    return float(diff @ diff)


def mse_summary(selected_losses, oracle_losses) -> MseSummary:
    selected = np.asarray(selected_losses, dtype=float)
    oracle = np.asarray(oracle_losses, dtype=float)
    if selected.size == 0 or oracle.size == 0:
        raise ValueError("need at least one replication")
    summary = MseSummary(float(selected.mean()), float(oracle.mean()))
    if not summary.mse_oracle > 0:
        raise ValueError("mean oracle loss must be positive")
    return summary


def log_mse_ratio(selected_losses, oracle_losses) -> float:
    """log(mean selected loss / mean oracle loss): average first, then ratio, then log."""
    return mse_summary(selected_losses, oracle_losses).log_ratio


@dataclass(frozen=True)
class PredictionRecord:
    survived: int  # 1 if the subject outlived t0
    predicted: float  # predicted probability of surviving past t0

    def __post_init__(self):
        if not 0.0 <= self.predicted <= 1.0:
            raise ValueError("predicted probability must lie in [0, 1]")


def _check_probs(survived, predicted):
    if predicted is None:
        records = list(survived)
        survived = [r.survived for r in records]
        predicted = [r.predicted for r in records]
    y = np.asarray(survived, dtype=float)
    s = np.asarray(predicted, dtype=float)
    if y.size == 0 or y.shape != s.shape:
        raise ValueError("survived and predicted must be non-empty and equal length")
    if np.any((s < 0) | (s > 1)):
        raise ValueError("predicted probabilities must lie in [0, 1]")
    return y, s


def brier(survived, predicted=None) -> float:
    """Mean squared difference between the survival indicator and its prediction.

    Takes either a sequence of :class:`PredictionRecord` or two parallel arrays.
    """
    y, s = _check_probs(survived, predicted)
    return float(np.mean((y - s) ** 2))


def kl_score(survived, predicted=None) -> float:
    """Mean cross-entropy of the survival indicator under the predicted probability."""
    y, s = _check_probs(survived, predicted)
    s = np.clip(s, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(np.mean(-(y * np.log(s) + (1.0 - y) * np.log1p(-s))))


def concordance_counts(eta, times, status) -> tuple[int, int, int]:
    """(concordant, predictor-tied, comparable) pair counts, Harrell's rules."""
    eta = np.asarray(eta, dtype=float)
    times = np.asarray(times, dtype=float)
    status = np.asarray(status, dtype=float)
    if not eta.shape == times.shape == status.shape:
        raise ValueError("eta, times and status must have equal length")
    _, ranks = np.unique(eta, return_inverse=True)
    idx = build_risk_index(times, status)
    conc, tied, comp = _kernels.concordance_counts(
        ranks[idx.order].astype(np.int64), np.ascontiguousarray(status[idx.order]),
        idx.tie_start, int(ranks.max(initial=0)) + 1,
    )
    return int(conc), int(tied), int(comp)


def c_index(eta, times, status) -> float:
    """Harrell's C: share of comparable pairs where the higher risk fails first.

    A pair is comparable when the shorter time is an event and strictly
    shorter; predictor ties earn half credit. Returns nan without comparable
    pairs.
    """
    conc, tied, comp = concordance_counts(eta, times, status)
    if comp == 0:
        return float("nan")
    return (conc + 0.5 * tied) / comp
