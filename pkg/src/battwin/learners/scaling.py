from __future__ import annotations

import numpy as np


class NotFittedError(RuntimeError):
    pass


class MinMaxScaler:
    """Per-feature Min-Max normalization.

    Values outside the fitted range are not clipped, and a feature that was
    constant at fit time maps to 0.0.
    """

    def __init__(self, min_=None, max_=None):
        if (min_ is None) != (max_ is None):
            raise ValueError("give both min and max, or neither")
        self.min_ = None if min_ is None else np.asarray(min_, dtype=np.float64)
        self.max_ = None if max_ is None else np.asarray(max_, dtype=np.float64)
        if self.min_ is not None:
            if self.min_.shape != self.max_.shape or self.min_.ndim != 1:
                raise ValueError("min and max must be 1-d and of equal length")
            if np.any(self.max_ < self.min_):
                raise ValueError("max < min for some feature")

    @property
    def fitted(self) -> bool:
        return self.min_ is not None

    def fit(self, X) -> "MinMaxScaler":
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[0] == 0:
            raise ValueError("cannot fit a scaler on zero rows")
        self.min_ = X.min(axis=0)
        self.max_ = X.max(axis=0)
        return self

    def transform(self, X) -> np.ndarray:
        if not self.fitted:
            raise NotFittedError("scaler has not been fitted")
        X = np.asarray(X, dtype=np.float64)
        span = self.max_ - self.min_
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, (X - self.min_) / safe, 0.0)

    def to_dict(self) -> dict:
        return {"min": self.min_.tolist(), "max": self.max_.tolist()}

    @classmethod
    def from_dict(cls, d) -> "MinMaxScaler":
        return cls(d["min"], d["max"])


def fit_scaler(rows) -> MinMaxScaler:
    return MinMaxScaler().fit(rows)
