"""Survival data containers, Breslow risk sets and the Cox partial likelihood."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import ConvergenceError, DatasetError


@dataclass(frozen=True)
class RiskSetIndex:
    """Subjects sorted by descending time with tie-group bookkeeping.

    ``order[pos]`` is the subject at sorted position ``pos``. The risk set of
    the subject at position ``pos`` is ``order[: tie_end[pos] + 1]``.
    """

    order: np.ndarray
    tie_start: np.ndarray
    tie_end: np.ndarray
    event_positions: np.ndarray

    @property
    def tie_groups(self) -> list[np.ndarray]:
        """Subjects sharing a time, one array per distinct time (descending)."""
        starts = np.flatnonzero(self.tie_start == np.arange(self.order.size))
        return np.split(self.order, starts[1:])

    def risk_set(self, pos: int) -> np.ndarray:
        return self.order[: self.tie_end[pos] + 1]


def build_risk_index(times: np.ndarray, status: np.ndarray) -> RiskSetIndex:
    times = np.asarray(times, dtype=float)
    order = np.argsort(-times, kind="stable")
    t_sorted = times[order]
    n = t_sorted.size
    new_group = np.ones(n, dtype=bool)
    new_group[1:] = t_sorted[1:] != t_sorted[:-1]
    group_id = np.cumsum(new_group) - 1
    starts = np.flatnonzero(new_group)
    ends = np.append(starts[1:] - 1, n - 1)
    tie_start = starts[group_id].astype(np.int64)
    tie_end = ends[group_id].astype(np.int64)
    event_positions = np.flatnonzero(np.asarray(status)[order] > 0)
    return RiskSetIndex(order, tie_start, tie_end, event_positions)


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """Right-censored survival data: times, event indicators and covariates."""

    times: np.ndarray
    status: np.ndarray
    covariates: np.ndarray
    names: Optional[tuple[str, ...]] = field(default=None)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        status = np.asarray(self.status)
        X = np.asarray(self.covariates, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if X.size == times.size else X.reshape(times.size, 0)
        n = times.size
        if n == 0:
            raise DatasetError("dataset must contain at least one row")
        if status.shape != (n,) or X.shape[0] != n:
            raise DatasetError(
                f"length mismatch: {n} times, {status.size} status, {X.shape[0]} covariate rows"
            )
        if not np.all(np.isfinite(times)) or np.any(times < 0):
            raise DatasetError("times must be finite and non-negative")
        if not np.all((status == 0) | (status == 1)):
            raise DatasetError("status must be 0 or 1")
        if not np.all(np.isfinite(X)):
            raise DatasetError("covariates must be finite")
        names = self.names
        if names is None:
            names = tuple(f"x{j + 1}" for j in range(X.shape[1]))
        elif len(names) != X.shape[1]:
            raise DatasetError(f"{len(names)} names for {X.shape[1]} covariates")
        for arr in (times, X):
            arr.setflags(write=False)
        status = status.astype(float)
        status.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "status", status)
        object.__setattr__(self, "covariates", X)
        object.__setattr__(self, "names", tuple(names))

    @property
    def n(self) -> int:
        return self.times.size

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    @property
    def n_events(self) -> int:
        return int(self.status.sum())

    @cached_property
    def risk_index(self) -> RiskSetIndex:
        return build_risk_index(self.times, self.status)

    @cached_property
    def _sorted_status(self) -> np.ndarray:
        return np.ascontiguousarray(self.status[self.risk_index.order])

    def subset(self, rows: np.ndarray) -> "SurvivalDataset":
        rows = np.asarray(rows)
        return SurvivalDataset(self.times[rows], self.status[rows], self.covariates[rows], self.names)


def _check_eta(data: SurvivalDataset, eta) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (data.n,):
        raise ValueError(f"eta has shape {eta.shape}, expected ({data.n},)")
    if not np.all(np.isfinite(eta)):
        raise ValueError("eta must be finite")
    return eta


def log_partial_likelihood(data: SurvivalDataset, eta) -> float:
    """Breslow log partial likelihood at linear predictor ``eta``."""
    eta = _check_eta(data, eta)
    idx = data.risk_index
    return float(_kernels.cox_loglik(eta[idx.order], data._sorted_status, idx.tie_end))


def pl_gradient(data: SurvivalDataset, eta) -> np.ndarray:
    """Gradient of the log partial likelihood with respect to ``eta``."""
    eta = _check_eta(data, eta)
    idx = data.risk_index
    _, grad = _kernels.cox_stats(eta[idx.order], data._sorted_status, idx.tie_start, idx.tie_end)
    out = np.empty(data.n)
    out[idx.order] = grad
    return out


def loglik_and_derivatives(data: SurvivalDataset, X: np.ndarray, beta: np.ndarray):
    """Log partial likelihood, gradient and Hessian in ``beta`` for design ``X``."""
    idx = data.risk_index
    Xs = X[idx.order]
    eta = Xs @ beta
    eta = eta - eta.max()
    ll = float(_kernels.cox_loglik(eta, data._sorted_status, idx.tie_end))
    r = np.exp(eta)
    s0 = np.cumsum(r)[idx.tie_end]
    s1 = np.cumsum(r[:, None] * Xs, axis=0)[idx.tie_end]
    s2 = np.cumsum(r[:, None, None] * Xs[:, :, None] * Xs[:, None, :], axis=0)[idx.tie_end]
    ev = data._sorted_status > 0
    mean = s1[ev] / s0[ev, None]
    grad = (Xs[ev] - mean).sum(axis=0)
    hess = -(s2[ev] / s0[ev, None, None] - mean[:, :, None] * mean[:, None, :]).sum(axis=0)
    return ll, grad, hess


# largest log relative risk per covariate standard deviation accepted as finite
_DIVERGENCE_BOUND = 20.0
# beyond this scale, a likelihood that does not drop when beta doubles is flat at infinity
_SEPARATION_SCALE = 5.0


def newton_fit(
    data: SurvivalDataset,
    active_columns: Sequence[int] = (),
    *,
    max_iter: int = 100,
    tol: float = 1e-8,
) -> np.ndarray:
    """Unpenalized maximum partial likelihood estimate on ``active_columns``.

    Newton-Raphson with step halving; coefficients outside the active set are
    zero. Raises ConvergenceError when the gradient max-norm does not fall
    below ``tol`` within ``max_iter`` iterations, or when the estimates run
    off towards infinity (separation).
    """
    cols = np.asarray(sorted(set(int(c) for c in active_columns)), dtype=int)
    beta_full = np.zeros(data.p)
    if cols.size == 0:
        return beta_full
    if data.n_events < 1:
        raise ValueError("newton_fit needs at least one event")
    if cols.size >= data.n_events:
        raise ValueError(f"{cols.size} active columns with only {data.n_events} events")
    X = data.covariates[:, cols]
    X = X - X.mean(axis=0)
    beta = np.zeros(cols.size)
    ll, grad, hess = loglik_and_derivatives(data, X, beta)
    sd = X.std(axis=0)

    def finish():
        # the gradient also vanishes along a separating direction at infinity
        scale = np.max(np.abs(beta) * sd)
        flat = scale > _SEPARATION_SCALE and loglik_and_derivatives(data, X, 2 * beta)[0] >= ll - 1e-6
        if scale > _DIVERGENCE_BOUND or flat:
            raise ConvergenceError(
                f"newton_fit estimates diverge (max |beta_j| * sd_j = {scale:.3g}, "
                "likelihood still rising along beta); data appear separable"
            )
        beta_full[cols] = beta
        return beta_full

    for _ in range(max_iter):
        if np.max(np.abs(grad)) < tol:
            return finish()
        try:
            step = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError("singular Hessian in newton_fit") from exc
        t = 1.0
        for _ in range(50):
            new = beta + t * step
            ll_new, g_new, h_new = loglik_and_derivatives(data, X, new)
            if ll_new >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
        else:
            raise ConvergenceError("line search failed in newton_fit")
        beta, ll, grad, hess = new, ll_new, g_new, h_new
    if np.max(np.abs(grad)) < tol:
        return finish()
    raise ConvergenceError(
        f"newton_fit did not converge in {max_iter} iterations "
        f"(gradient max-norm {np.max(np.abs(grad)):.3g}); data may be separable"
    )
