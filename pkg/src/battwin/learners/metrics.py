"""Error metrics and k-fold cross-validation."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from .regressor import LearnerConfig, Regressor, train


@dataclass(frozen=True)
class EvalReport:
    rmse_pct: float
    mse_pct2: float
    mae_pct: float
    max_err_pct: float
    train_time_s: float = 0.0
    infer_time_s: float = 0.0
    n: int = 0

    def __post_init__(self):
        # rmse >= mae and max >= mae hold mathematically; allow float round-off
        tol = 1e-9 * max(1.0, self.max_err_pct)
        if min(self.rmse_pct, self.mse_pct2, self.mae_pct, self.max_err_pct) < 0:
            raise AssertionError(f"negative error metric in {self}")
        if self.rmse_pct + tol < self.mae_pct or self.max_err_pct + tol < self.mae_pct:
            raise AssertionError(f"metric ordering violated in {self}")

    def to_dict(self) -> dict:
        return asdict(self)

    def metrics(self) -> dict:
        """Accuracy fields only (no timings), for reproducibility comparisons."""
        d = self.to_dict()
        d.pop("train_time_s")
        d.pop("infer_time_s")
        return d


def error_report(y_pred, y_true, train_time_s=0.0, infer_time_s=0.0) -> EvalReport:
    y_pred = np.asarray(y_pred, dtype=np.float64)
    y_true = np.asarray(y_true, dtype=np.float64)
    if y_true.size == 0:
        raise ValueError("cannot evaluate on zero rows")
    if y_pred.shape != y_true.shape:
        raise ValueError(f"shape mismatch {y_pred.shape} vs {y_true.shape}")
    e = np.abs(y_pred - y_true)
    mse = float(np.mean(e * e))
    return EvalReport(float(np.sqrt(mse)), mse, float(e.mean()), float(e.max()),
                      float(train_time_s), float(infer_time_s), int(e.size))


def evaluate(m: Regressor, X, y_true, train_time_s=0.0) -> EvalReport:
    t0 = time.perf_counter()
    pred = m.predict(X)
    return error_report(pred, y_true, train_time_s, time.perf_counter() - t0)


def aggregate(reports) -> EvalReport:
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to aggregate")
    mean = lambda name: float(np.mean([getattr(r, name) for r in reports]))  # noqa: E731
    return EvalReport(mean("rmse_pct"), mean("mse_pct2"), mean("mae_pct"), mean("max_err_pct"),
                      mean("train_time_s"), mean("infer_time_s"), sum(r.n for r in reports))


def kfold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Shuffled split of ``range(n)`` into ``k`` folds of near-equal size."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of rows ({n})")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


@dataclass(frozen=True)
class CVResult:
    folds: tuple[EvalReport, ...]
    aggregate: EvalReport

    def to_dict(self) -> dict:
        return {"folds": [f.to_dict() for f in self.folds], "aggregate": self.aggregate.to_dict()}


def kfold_cv(X, y, k: int, trainer: LearnerConfig, seed: int = 0) -> CVResult:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    folds = kfold_indices(len(y), k, seed)
    reports = []
    for test in folds:
        mask = np.ones(len(y), dtype=bool)
        mask[test] = False
        t0 = time.perf_counter()
        m = train(trainer, X[mask], y[mask])
        reports.append(evaluate(m, X[test], y[test], time.perf_counter() - t0))
    return CVResult(tuple(reports), aggregate(reports))
