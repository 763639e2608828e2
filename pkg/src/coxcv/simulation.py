"""Monte-Carlo comparison of cross-validation criteria on simulated Cox data.

Every replication draws its own seeds from ``SeedSequence(seed, spawn_key=(rep,))``
so results do not depend on how replications are scheduled across workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import SurvivalDataset, newton_fit
from .cv import STRATEGIES, assign_folds, canonical_method, evaluate_all, fit_cv_paths, select_index
from .errors import UndefinedCVError
from .hazard import breslow_baseline, predict_survival
from .metrics import brier, c_index, kl_score, log_mse_ratio, squared_error
from .solver import PenaltyConfig

DEFAULT_METHODS = ("vvh", "basic", "linear_predictor", "deviance_residual")


def generate_dataset(n: int, p: int, beta_star, censor_rate: float = 0.0, seed=None,
                     exact_censoring: bool = False) -> SurvivalDataset:
    """Standard-normal covariates and exponential times with rate exp(X beta).

    Status is drawn independently of the time, and a censored subject keeps
    its drawn time. With ``exact_censoring`` exactly ``round(n * censor_rate)``
    subjects, chosen at random, are censored.
    """
    beta_star = np.asarray(beta_star, dtype=float)
    if beta_star.shape != (p,):
        raise ValueError("beta_star must have length p")
    if not 0.0 <= censor_rate < 1.0:
        raise ValueError("censor_rate must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    times = rng.exponential(size=n) / np.exp(X @ beta_star)
    if exact_censoring:
        status = np.ones(n)
        status[rng.permutation(n)[: int(round(n * censor_rate))]] = 0.0
    else:
        status = (rng.random(n) < 1.0 - censor_rate).astype(float)
    return SurvivalDataset(times, status, X)


def oracle_fit(data: SurvivalDataset, support: Sequence[int]) -> np.ndarray:
    """Unpenalized Cox fit on the true support."""
    return newton_fit(data, support)


@dataclass(frozen=True)
class ScenarioConfig:
    n: int
    p: int
    support_size: int
    signal: float
    censor_rate: float = 0.3
    K: int = 10
    fold_strategy: str = "random"
    methods: tuple[str, ...] = DEFAULT_METHODS
    replications: int = 200
    seed: int = 0
    test_set_size: int = 1000
    alpha: float = 1.0
    n_lambda: int = 100
    lambda_min_ratio: Optional[float] = None
    exact_censoring: bool = False
    t0_source: str = "train"

    def __post_init__(self):
        if not 0 <= self.support_size <= self.p:
            raise ValueError("support_size must lie in [0, p]")
        if not 0.0 <= self.censor_rate < 1.0:
            raise ValueError("censor_rate must lie in [0, 1)")
        if not np.isfinite(self.signal):
            raise ValueError("signal must be finite")
        if self.fold_strategy not in STRATEGIES:
            raise ValueError(f"fold_strategy must be one of {STRATEGIES}")
        if self.t0_source not in ("train", "test"):
            raise ValueError("t0_source must be 'train' or 'test'")
        if self.replications < 1:
            raise ValueError("replications must be positive")
        object.__setattr__(self, "methods", tuple(canonical_method(m) for m in self.methods))

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        raw = dict(raw)
        if "methods" in raw:
            raw["methods"] = tuple(raw["methods"])
        return cls(**raw)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["methods"] = list(self.methods)
        return out

    @property
    def beta_star(self) -> np.ndarray:
        beta = np.zeros(self.p)
        beta[: self.support_size] = self.signal
        return beta

    @property
    def penalty(self) -> PenaltyConfig:
        return PenaltyConfig(alpha=self.alpha, n_lambda=self.n_lambda, lambda_min_ratio=self.lambda_min_ratio)


@dataclass(frozen=True)
class ReplicationRecord:
    replication: int
    method: str
    lam: float
    n_nonzero: int
    squared_error: float
    oracle_squared_error: float
    brier: float
    kl: float
    c_index: float


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    records: list[ReplicationRecord]
    undefined: dict[str, list[int]] = field(default_factory=dict)

    @property
    def undefined_count(self) -> int:
        return sum(len(v) for v in self.undefined.values())

    def method_records(self, method: str) -> list[ReplicationRecord]:
        return [r for r in self.records if r.method == method]

    def summary(self) -> dict:
        out = {}
        for method in self.config.methods:
            recs = self.method_records(method)
            entry = {"replications": len(recs), "undefined": len(self.undefined.get(method, []))}
            if recs:
                for key in ("lam", "n_nonzero", "brier", "kl", "c_index"):
                    vals = np.array([getattr(r, key) for r in recs], dtype=float)
                    name = "lambda" if key == "lam" else key
                    entry[f"{name}_mean"] = float(vals.mean())
                    entry[f"{name}_sd"] = float(vals.std(ddof=1)) if vals.size > 1 else None
                sel = [r.squared_error for r in recs]
                orc = [r.oracle_squared_error for r in recs]
                entry["mse_selected"] = float(np.mean(sel))
                entry["mse_oracle"] = float(np.mean(orc))
                entry["log_mse_ratio"] = log_mse_ratio(sel, orc)
            out[method] = entry
        return out


def replication_seeds(seed: int, rep: int) -> list[np.random.SeedSequence]:
    """(data, folds, test set) seed streams for one replication."""
    return np.random.SeedSequence(seed, spawn_key=(rep,)).spawn(3)


def _run_replication(config: ScenarioConfig, rep: int):
    data_ss, fold_ss, test_ss = replication_seeds(config.seed, rep)
    beta_star = config.beta_star
    data = generate_dataset(config.n, config.p, beta_star, config.censor_rate, data_ss, config.exact_censoring)
    test = generate_dataset(config.test_set_size, config.p, beta_star, 0.0, test_ss)
    folds = assign_folds(data.n, config.K, fold_ss, config.fold_strategy, data.status)
    fits = fit_cv_paths(data, config.penalty, folds)
    curves = evaluate_all(data, fits, config.methods)

    oracle_loss = squared_error(oracle_fit(data, range(config.support_size)), beta_star)
    source = data if config.t0_source == "train" else test
    t0 = float(np.median(source.times[source.status > 0]))
    survived = (test.times > t0).astype(float)

    records, undefined = [], []
    for method, curve in curves.items():
        try:
            idx = select_index(curve)
        except UndefinedCVError:
            undefined.append(method)
            continue
        beta = fits.full_path.betas[idx]
        base = breslow_baseline(data, data.covariates @ beta)
        eta_test = test.covariates @ beta
        surv = predict_survival(base, eta_test, t0)
        records.append(ReplicationRecord(
            replication=rep,
            method=method,
            lam=float(curve.lambdas[idx]),
            n_nonzero=int(np.count_nonzero(beta)),
            squared_error=squared_error(beta, beta_star),
            oracle_squared_error=oracle_loss,
            brier=brier(survived, surv),
            kl=kl_score(survived, surv),
            c_index=c_index(eta_test, test.times, test.status),
        ))
    return records, undefined


def run_scenario(config: ScenarioConfig, threads: int = 1) -> ScenarioResult:
    reps = range(config.replications)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            outcomes = list(pool.map(lambda r: _run_replication(config, r), reps))
    else:
        outcomes = [_run_replication(config, r) for r in reps]
    records: list[ReplicationRecord] = []
    undefined: dict[str, list[int]] = {m: [] for m in config.methods}
    for rep, (recs, undef) in zip(reps, outcomes):
        records.extend(recs)
        for method in undef:
            undefined[method].append(rep)
    return ScenarioResult(config, records, undefined)


@dataclass(frozen=True)
class StabilityResult:
    K: int
    balanced: bool
    undefined_fraction: float
    loss_sd: dict[str, float]
    loss_mean: dict[str, float]
    losses: dict[str, tuple[float, ...]] = field(default_factory=dict)  # per replication, in order


def stability_experiment(
    n: int,
    K: int,
    censor_rate: float,
    reps: int,
    balanced: bool,
    *,
    p: int = 100,
    support_size: int = 10,
    signal: float = 0.5,
    methods: Sequence[str] = DEFAULT_METHODS,
    seed: int = 0,
    n_lambda: int = 100,
    lambda_min_ratio: Optional[float] = None,
    threads: int = 1,
) -> StabilityResult:
    """Fold-level stability of basic cross-validation.

    Unbalanced: share of datasets with some event-free fold under random
    folds (status drawn independently per subject). Balanced: exactly
    ``round(n * censor_rate)`` censored subjects, event-balanced folds, and
    the standard deviation across replications of each method's selected
    squared-error loss.
    """
    config = ScenarioConfig(
        n=n, p=p, support_size=support_size, signal=signal, censor_rate=censor_rate, K=K,
        fold_strategy="event_balanced" if balanced else "random", methods=tuple(methods),
        replications=reps, seed=seed, n_lambda=n_lambda, lambda_min_ratio=lambda_min_ratio,
        exact_censoring=balanced,
    )

    def one(rep):
        data_ss, fold_ss, _ = replication_seeds(seed, rep)
        data = generate_dataset(n, p, config.beta_star, censor_rate, data_ss, balanced)
        folds = assign_folds(n, K, fold_ss, config.fold_strategy, data.status)
        empty = bool(np.any(folds.event_counts(data.status) == 0))
        if not balanced:
            return empty, {}
        fits = fit_cv_paths(data, config.penalty, folds)
        losses = {}
        for method, curve in evaluate_all(data, fits, config.methods).items():
            try:
                losses[method] = squared_error(fits.full_path.betas[select_index(curve)], config.beta_star)
            except UndefinedCVError:
                pass
        return empty, losses

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            outcomes = list(pool.map(one, range(reps)))
    else:
        outcomes = [one(r) for r in range(reps)]

    undefined_fraction = float(np.mean([empty for empty, _ in outcomes]))
    loss_sd, loss_mean, per_rep = {}, {}, {}
    if balanced:
        for method in config.methods:
            vals = np.array([losses[method] for _, losses in outcomes if method in losses])
            per_rep[method] = tuple(float(v) for v in vals)
            loss_mean[method] = float(vals.mean()) if vals.size else float("nan")
            loss_sd[method] = float(vals.std(ddof=1)) if vals.size > 1 else float("nan")
    return StabilityResult(K, balanced, undefined_fraction, loss_sd, loss_mean, per_rep)
