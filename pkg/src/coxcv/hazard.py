"""Baseline cumulative hazards, residuals and survival predictions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SurvivalDataset

# floor for the accumulated hazard of an event inside the deviance log
HAZARD_FLOOR = 1e-12


@dataclass(frozen=True)
class BaselineHazard:
    """Right-continuous step function, zero before the first knot."""

    knots: np.ndarray
    cumulative: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        pos = np.searchsorted(self.knots, t, side="right") - 1
        out = np.where(pos >= 0, self.cumulative[np.maximum(pos, 0)], 0.0)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class ResidualSet:
    martingale: np.ndarray
    deviance: np.ndarray


def _event_table(data: SurvivalDataset, weights: np.ndarray):
    order = np.argsort(data.times, kind="stable")
    t = data.times[order]
    w = weights[order]
    knots, first = np.unique(t, return_index=True)
    # weighted number at risk just before each distinct time
    tail = np.cumsum(w[::-1])[::-1]
    at_risk = tail[first]
    deaths = np.add.reduceat(data.status[order], first)
    keep = deaths > 0
    return knots[keep], deaths[keep], at_risk[keep]


def nelson_aalen(data: SurvivalDataset) -> BaselineHazard:
    """Unadjusted cumulative hazard: sum over event times of deaths / at risk."""
    if data.n_events < 1:
        raise ValueError("Nelson-Aalen estimate needs at least one event")
    knots, deaths, at_risk = _event_table(data, np.ones(data.n))
    return BaselineHazard(knots, np.cumsum(deaths / at_risk))


def breslow_baseline(data: SurvivalDataset, eta) -> BaselineHazard:
    """Covariate-adjusted baseline, at-risk counts weighted by exp(eta).

    Reduces to :func:`nelson_aalen` when ``eta`` is zero.
    """
    if data.n_events < 1:
        raise ValueError("baseline hazard needs at least one event")
    eta = np.asarray(eta, dtype=float)
    shift = eta.max()
    knots, deaths, at_risk = _event_table(data, np.exp(eta - shift))
    return BaselineHazard(knots, np.cumsum(deaths / at_risk) * np.exp(-shift))


def cumulative_hazard_at(base: BaselineHazard, eta_i, t):
    return base(t) * np.exp(eta_i)


def deviance_residuals(delta, cum_hazard) -> np.ndarray:
    """Vectorised deviance transform of the martingale residual delta - cum_hazard."""
    delta = np.asarray(delta, dtype=float)
    cum_hazard = np.asarray(cum_hazard, dtype=float)
    if np.any(cum_hazard < 0):
        raise ValueError("cumulative hazard must be non-negative")
    mart = delta - cum_hazard
    safe = np.maximum(cum_hazard, HAZARD_FLOOR)
    log_term = np.where(delta > 0, delta * np.log(safe), 0.0)
    inside = np.maximum(-2.0 * (mart + log_term), 0.0)
    return np.sign(mart) * np.sqrt(inside)


def deviance_residual(delta: int, cum_hazard: float) -> float:
    return float(deviance_residuals(delta, cum_hazard))


def residuals(data: SurvivalDataset, eta, base: BaselineHazard) -> ResidualSet:
    """Martingale and deviance residuals for hazards ``base(t_i) * exp(eta_i)``."""
    cum = base(data.times) * np.exp(np.asarray(eta, dtype=float))
    return ResidualSet(data.status - cum, deviance_residuals(data.status, cum))


def predict_survival(base: BaselineHazard, eta, t0):
    return np.exp(-base(t0) * np.exp(eta))
