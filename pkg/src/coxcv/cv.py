"""K-fold cross-validation of penalized Cox fits.

Five criteria are available, all evaluated on one lambda grid shared with the
full-data path:

* ``basic`` - test-fold partial likelihoods with risk sets inside each fold
* ``vvh`` - full-data minus training-data partial likelihood per fold
* ``linear_predictor`` - one partial likelihood over the pooled out-of-fold
  linear predictors
* ``deviance_residual`` - sum of squared out-of-fold deviance residuals
  against the full-data Nelson-Aalen baseline
* ``c_index`` - Harrell's concordance of the pooled out-of-fold predictors
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .core import SurvivalDataset, log_partial_likelihood
from .errors import UndefinedCVError
from .hazard import deviance_residuals, nelson_aalen
from .metrics import c_index
from .solver import PenaltyConfig, SolutionPath, fit_path, lambda_grid, lambda_max

STRATEGIES = ("random", "event_balanced")

METHOD_ALIASES = {
    "basic": "basic",
    "vvh": "vvh",
    "lp": "linear_predictor",
    "linear_predictor": "linear_predictor",
    "devresid": "deviance_residual",
    "deviance_residual": "deviance_residual",
    "cindex": "c_index",
    "c_index": "c_index",
}


def canonical_method(name: str) -> str:
    try:
        return METHOD_ALIASES[name]
    except KeyError:
        raise ValueError(f"unknown cross-validation method {name!r}") from None


@dataclass(frozen=True)
class FoldAssignment:
    fold_of: np.ndarray  # fold labels 1..K
    K: int
    strategy: str

    def test_rows(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == k)

    def train_rows(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != k)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold_of, minlength=self.K + 1)[1:]

    def event_counts(self, status) -> np.ndarray:
        return np.bincount(self.fold_of, weights=np.asarray(status, dtype=float), minlength=self.K + 1)[1:].astype(int)


def assign_folds(n: int, K: int, seed=None, strategy: str = "random", status=None) -> FoldAssignment:
    """Partition ``n`` subjects into ``K`` folds of near-equal size.

    ``event_balanced`` shuffles events and censored subjects separately and
    deals them round-robin, the censored deal continuing where the events
    stopped so fold sizes also stay within one of each other.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}")
    if not 2 <= K <= n:
        raise ValueError(f"need 2 <= K <= n, got K={K}, n={n}")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(n, dtype=np.int64)
    if strategy == "random":
        fold_of[rng.permutation(n)] = np.arange(n) % K
    else:
        if status is None:
            raise ValueError("event_balanced folds need the status vector")
        status = np.asarray(status)
        if status.shape != (n,):
            raise ValueError("status length must equal n")
        events = np.flatnonzero(status == 1)
        censored = np.flatnonzero(status != 1)
        fold_of[rng.permutation(events)] = np.arange(events.size) % K
        fold_of[rng.permutation(censored)] = (events.size + np.arange(censored.size)) % K
    return FoldAssignment(fold_of + 1, K, strategy)


@dataclass(frozen=True)
class CveCurve:
    lambdas: np.ndarray
    cve: np.ndarray
    defined: np.ndarray
    method: str
    n_nonzero: Optional[np.ndarray] = None
    fold_event_counts: Optional[np.ndarray] = field(default=None, repr=False)
    fold_sizes: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def maximize(self) -> bool:
        return self.method == "c_index"

    @property
    def selected_index(self) -> int:
        return select_index(self)

    @property
    def selected_lambda(self) -> float:
        return select_lambda(self)

    def rescaled(self) -> np.ndarray:
        """CVE mapped to [0, 1] over the defined entries (nan elsewhere)."""
        out = np.full(self.cve.shape, np.nan)
        if not np.any(self.defined):
            return out
        vals = self.cve[self.defined]
        lo, hi = vals.min(), vals.max()
        out[self.defined] = 0.0 if hi == lo else (vals - lo) / (hi - lo)
        return out


def select_index(curve: CveCurve) -> int:
    """Best defined entry; ties go to the first, i.e. the largest lambda."""
    if not np.any(curve.defined):
        msg = f"{curve.method} cross-validation error is undefined at every lambda"
        if curve.fold_event_counts is not None:
            msg += f"; fold event counts {curve.fold_event_counts.tolist()}"
        if curve.fold_sizes is not None:
            msg += f", fold sizes {curve.fold_sizes.tolist()}"
        raise UndefinedCVError(msg, fold_event_counts=curve.fold_event_counts, fold_sizes=curve.fold_sizes)
    vals = np.where(curve.defined, curve.cve, -np.inf if curve.maximize else np.inf)
    return int(np.argmax(vals) if curve.maximize else np.argmin(vals))


def select_lambda(curve: CveCurve) -> float:
    return float(curve.lambdas[select_index(curve)])


@dataclass(frozen=True)
class CvFits:
    """Full-data path plus one path per training complement, on a shared grid."""

    folds: FoldAssignment
    full_path: SolutionPath
    fold_paths: tuple[SolutionPath, ...]

    @property
    def lambdas(self) -> np.ndarray:
        return self.full_path.lambdas


def fit_cv_paths(
    data: SurvivalDataset,
    config: PenaltyConfig,
    folds: FoldAssignment,
    threads: int = 1,
) -> CvFits:
    """Fit the full data and every training complement on one lambda grid.

    The grid runs log-spaced from the largest lambda_max among the full data
    and the training sets, so every fit is null at the first point, down to
    ``lambda_min_ratio`` times the full-data lambda_max.
    """
    trains = [data.subset(folds.train_rows(k)) for k in range(1, folds.K + 1)]
    full_max = lambda_max(data, config)
    top = max([full_max] + [lambda_max(t, config) for t in trains if t.n_events > 0])
    lambdas = lambda_grid(full_max, config.n_lambda, config.min_ratio(data.n, data.p), top=top)

    def fit(d):
        return fit_path(d, config, lambdas=lambdas)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            paths = list(pool.map(fit, [data] + trains))
    else:
        paths = [fit(d) for d in [data] + trains]
    return CvFits(folds, paths[0], tuple(paths[1:]))


def _grid(fold_paths: Sequence[SolutionPath]) -> np.ndarray:
    lambdas = fold_paths[0].lambdas
    for path in fold_paths[1:]:
        if not np.array_equal(path.lambdas, lambdas):
            raise ValueError("fold paths must share one lambda grid")
    return lambdas


def cve_basic(data: SurvivalDataset, fold_paths: Sequence[SolutionPath], folds: FoldAssignment) -> CveCurve:
    """-2 times the summed test-fold log partial likelihoods.

    Undefined at every lambda when a fold has no events or fewer than two
    subjects, which always happens under leave-one-out.
    """
    lambdas = _grid(fold_paths)
    counts = folds.event_counts(data.status)
    sizes = folds.sizes()
    cve = np.zeros(lambdas.size)
    if np.any(counts == 0) or np.any(sizes < 2):
        cve[:] = np.nan
        defined = np.zeros(lambdas.size, dtype=bool)
    else:
        for k, path in enumerate(fold_paths, start=1):
            test = data.subset(folds.test_rows(k))
            etas = test.covariates @ path.betas.T
            for l in range(lambdas.size):
                cve[l] -= 2.0 * log_partial_likelihood(test, etas[:, l])
        defined = np.ones(lambdas.size, dtype=bool)
    return CveCurve(lambdas, cve, defined, "basic", fold_event_counts=counts, fold_sizes=sizes)


def cve_vvh(data: SurvivalDataset, fold_paths: Sequence[SolutionPath], folds: FoldAssignment) -> CveCurve:
    lambdas = _grid(fold_paths)
    cve = np.zeros(lambdas.size)
    for k, path in enumerate(fold_paths, start=1):
        train_rows = folds.train_rows(k)
        train = data.subset(train_rows)
        etas = data.covariates @ path.betas.T
        for l in range(lambdas.size):
            full_ll = log_partial_likelihood(data, etas[:, l])
            train_ll = log_partial_likelihood(train, etas[train_rows, l])
            cve[l] -= 2.0 * (full_ll - train_ll)
    return CveCurve(lambdas, cve, np.isfinite(cve), "vvh")


def cv_linear_predictors(data: SurvivalDataset, fold_paths: Sequence[SolutionPath], folds: FoldAssignment) -> np.ndarray:
    """Out-of-fold linear predictors, one row per lambda.

    Row ``l``, entry ``i`` uses the coefficients fitted without ``i``'s fold.
    """
    lambdas = _grid(fold_paths)
    eta = np.empty((lambdas.size, data.n))
    for k, path in enumerate(fold_paths, start=1):
        rows = folds.test_rows(k)
        eta[:, rows] = path.betas @ data.covariates[rows].T
    return eta


def cve_linear_predictors(data: SurvivalDataset, fold_paths: Sequence[SolutionPath], folds: FoldAssignment) -> CveCurve:
    lambdas = _grid(fold_paths)
    eta = cv_linear_predictors(data, fold_paths, folds)
    cve = np.array([-2.0 * log_partial_likelihood(data, e) for e in eta])
    return CveCurve(lambdas, cve, np.isfinite(cve), "linear_predictor")


def cve_deviance_residuals(data: SurvivalDataset, fold_paths: Sequence[SolutionPath], folds: FoldAssignment) -> CveCurve:
    lambdas = _grid(fold_paths)
    eta = cv_linear_predictors(data, fold_paths, folds)
    base_at_t = nelson_aalen(data)(data.times)
    cve = np.array([np.sum(deviance_residuals(data.status, base_at_t * np.exp(e)) ** 2) for e in eta])
    return CveCurve(lambdas, cve, np.isfinite(cve), "deviance_residual")


def cv_c_index(data: SurvivalDataset, fold_paths: Sequence[SolutionPath], folds: FoldAssignment) -> CveCurve:
    lambdas = _grid(fold_paths)
    eta = cv_linear_predictors(data, fold_paths, folds)
    cve = np.array([c_index(e, data.times, data.status) for e in eta])
    return CveCurve(lambdas, cve, np.isfinite(cve), "c_index")


CRITERIA: dict[str, Callable[..., CveCurve]] = {
    "basic": cve_basic,
    "vvh": cve_vvh,
    "linear_predictor": cve_linear_predictors,
    "deviance_residual": cve_deviance_residuals,
    "c_index": cv_c_index,
}


def evaluate(data: SurvivalDataset, fits: CvFits, method: str) -> CveCurve:
    """Criterion curve for ``method``, annotated with full-path sparsity."""
    method = canonical_method(method)
    if data.n_events < 1:
        raise ValueError("cross-validation needs at least one event")
    curve = CRITERIA[method](data, fits.fold_paths, fits.folds)
    return CveCurve(
        curve.lambdas, curve.cve, curve.defined, curve.method,
        fits.full_path.n_nonzero, curve.fold_event_counts, curve.fold_sizes,
    )


def evaluate_all(data: SurvivalDataset, fits: CvFits, methods: Iterable[str]) -> dict[str, CveCurve]:
    return {canonical_method(m): evaluate(data, fits, m) for m in methods}


@dataclass(frozen=True)
class CvConfig:
    K: int = 10
    strategy: str = "random"
    method: str = "linear_predictor"
    seed: Optional[int] = 0

    def __post_init__(self):
        object.__setattr__(self, "method", canonical_method(self.method))
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")


def make_folds(data: SurvivalDataset, cv_config: CvConfig) -> FoldAssignment:
    return assign_folds(data.n, cv_config.K, cv_config.seed, cv_config.strategy, data.status)


def cross_validate(
    data: SurvivalDataset,
    penalty_config: PenaltyConfig = PenaltyConfig(),
    cv_config: CvConfig = CvConfig(),
    threads: int = 1,
) -> CveCurve:
    """Fold, fit and score; raises UndefinedCVError when nothing is selectable."""
    fits = fit_cv_paths(data, penalty_config, make_folds(data, cv_config), threads)
    curve = evaluate(data, fits, cv_config.method)
    select_index(curve)
    return curve
