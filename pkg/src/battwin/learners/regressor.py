"""The common model type shared by all learners, and its JSON artifact form.

An artifact is a single JSON document::

    {schema_version, kind, hyperparameters, trained_at_soh, version, seed,
     n_features, scaler: {min, max} | null, payload, payload_sha256}

``payload`` is kind-specific.  The checksum covers the canonical encoding
of the payload so a damaged artifact is refused instead of loaded.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from . import boosting, forest, mlp
from .scaling import MinMaxScaler

SCHEMA_VERSION = 1

RANDOM_FOREST = "random_forest"
GRADIENT_BOOSTED = "gradient_boosted"
MLP_KIND = "mlp"
KINDS = (RANDOM_FOREST, GRADIENT_BOOSTED, MLP_KIND)

ALIASES = {"rf": RANDOM_FOREST, "gbt": GRADIENT_BOOSTED, "lgb": GRADIENT_BOOSTED,
           "mlp": MLP_KIND, "dnn": MLP_KIND}

_IMPL = {
    RANDOM_FOREST: (forest.fit_forest, forest.Forest, forest.DEFAULTS),
    GRADIENT_BOOSTED: (boosting.fit_boosting, boosting.BoostedTrees, boosting.DEFAULTS),
    MLP_KIND: (mlp.fit_mlp, mlp.MLP, mlp.DEFAULTS),
}


class ArtifactError(ValueError):
    """A model artifact could not be decoded into a usable Regressor."""


def canonical_kind(kind: str) -> str:
    k = ALIASES.get(kind, kind)
    if k not in KINDS:
        raise ValueError(f"unknown learner kind {kind!r}")
    return k


@dataclass(frozen=True)
class LearnerConfig:
    """What to train: learner kind, hyperparameters, seed, and whether
    inputs are Min-Max scaled before fitting."""

    kind: str = RANDOM_FOREST
    params: dict = field(default_factory=dict)
    seed: int = 0
    scale: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", canonical_kind(self.kind))
        object.__setattr__(self, "params", dict(self.params))

    def resolved_params(self) -> dict:
        return {**_IMPL[self.kind][2], **self.params}

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params, "seed": self.seed, "scale": self.scale}

    @classmethod
    def from_dict(cls, d: dict) -> "LearnerConfig":
        return cls(d.get("kind", RANDOM_FOREST), d.get("params", {}), int(d.get("seed", 0)),
                   bool(d.get("scale", False)))


@dataclass(frozen=True, eq=False)
class Regressor:
    kind: str
    hyperparameters: dict
    model: Any
    n_features: int
    scaler: MinMaxScaler | None = None
    trained_at_soh: float | None = None
    version: int = 0
    seed: int = 0

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(
                f"expected rows with {self.n_features} features, got shape {X.shape}")
        if self.scaler is not None:
            X = self.scaler.transform(X)
        return self.model.predict(X)

    def with_meta(self, **kw) -> "Regressor":
        return replace(self, **kw)


def _validate_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a non-empty 2-d array")
    if y.shape != (X.shape[0],):
        raise ValueError(f"y has shape {y.shape}, expected ({X.shape[0]},)")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("X and y must be finite")
    return X, y


def train(config: LearnerConfig, X, y, trained_at_soh=None, version=0) -> Regressor:
    X, y = _validate_xy(X, y)
    scaler = MinMaxScaler().fit(X) if config.scale else None
    Xf = scaler.transform(X) if scaler is not None else X
    fit = _IMPL[config.kind][0]
    params = config.resolved_params()
    model = fit(Xf, y, params, config.seed)
    return Regressor(config.kind, params, model, X.shape[1], scaler, trained_at_soh,
                     version, config.seed)


def train_random_forest(X, y, params=None, seed=0, scale=False, **meta) -> Regressor:
    return train(LearnerConfig(RANDOM_FOREST, params or {}, seed, scale), X, y, **meta)


def train_gradient_boosted(X, y, params=None, seed=0, scale=False, **meta) -> Regressor:
    return train(LearnerConfig(GRADIENT_BOOSTED, params or {}, seed, scale), X, y, **meta)


def train_mlp(X, y, params=None, seed=0, scale=True, **meta) -> Regressor:
    return train(LearnerConfig(MLP_KIND, params or {}, seed, scale), X, y, **meta)


def predict(m: Regressor, X) -> np.ndarray:
    return m.predict(X)


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def serialize_model(m: Regressor) -> dict:
    payload = m.model.to_payload()
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": m.kind,
        "hyperparameters": m.hyperparameters,
        "trained_at_soh": m.trained_at_soh,
        "version": m.version,
        "seed": m.seed,
        "n_features": m.n_features,
        "scaler": None if m.scaler is None else m.scaler.to_dict(),
        "payload": payload,
        "payload_sha256": hashlib.sha256(_canonical(payload).encode()).hexdigest(),
    }


def dumps_model(m: Regressor) -> str:
    return _canonical(serialize_model(m))


def deserialize_model(doc) -> Regressor:
    """Rebuild a Regressor from an artifact dict or its JSON text.

    Raises
    ------
    ArtifactError
        For truncated/invalid JSON, a schema-version mismatch, missing
        fields, a checksum mismatch, or structurally invalid payloads.
    """
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as e:
            raise ArtifactError(f"artifact is not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise ArtifactError("artifact must be a JSON object")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ArtifactError(
            f"schema_version {doc.get('schema_version')!r} not supported (expected {SCHEMA_VERSION})")
    required = ("kind", "hyperparameters", "trained_at_soh", "version", "seed", "n_features",
                "scaler", "payload", "payload_sha256")
    missing = [k for k in required if k not in doc]
    if missing:
        raise ArtifactError(f"artifact missing field(s): {', '.join(missing)}")
    try:
        digest = hashlib.sha256(_canonical(doc["payload"]).encode()).hexdigest()
    except (TypeError, ValueError) as e:
        raise ArtifactError(f"payload is not encodable: {e}") from None
    if digest != doc["payload_sha256"]:
        raise ArtifactError("payload checksum mismatch")
    try:
        kind = canonical_kind(doc["kind"])
        n_features = int(doc["n_features"])
        if n_features < 1:
            raise ValueError("n_features must be positive")
        model = _IMPL[kind][1].from_payload(doc["payload"], n_features)
        scaler = None if doc["scaler"] is None else MinMaxScaler.from_dict(doc["scaler"])
        if scaler is not None and scaler.min_.shape != (n_features,):
            raise ValueError("scaler width does not match n_features")
        soh = doc["trained_at_soh"]
        return Regressor(kind, dict(doc["hyperparameters"]), model, n_features, scaler,
                         None if soh is None else float(soh), int(doc["version"]),
                         int(doc["seed"]))
    except (KeyError, TypeError, ValueError) as e:
        raise ArtifactError(f"invalid artifact payload: {e}") from None
