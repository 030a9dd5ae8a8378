"""Confidence scores over novice outputs, including a one-class hypersphere detector.

Every measure g is a confidence value: larger means the novice looks more
in-distribution, and control is yielded when g falls below a threshold.

    maxlogit    max_i z_i
    maxprob     max_i p_i
    margin      p_(1) - p_(2)           (two largest softmax probabilities)
    negentropy  sum_i p_i ln p_i        (0 ln 0 := 0; range [-ln A, 0])
    negenergy   ln sum_i exp(z_i)       (temperature 1)
    svdd        -|| enc(x) - c ||^2     (negated squared distance to the center)
"""
from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .seeding import derive_rng

FEATURE_ORDER = ("obs", "hidden", "dist")
MEASURES = ("maxlogit", "maxprob", "margin", "negentropy", "negenergy", "svdd")
LOGIT_MEASURES = MEASURES[:5]

SVDD_FORMAT_VERSION = 1


@dataclass(frozen=True)
class FeatureBundle:
    """Per-state novice outputs delivered to coordination policies."""

    obs: np.ndarray
    hidden: np.ndarray
    dist: np.ndarray
    logits: np.ndarray


def normalize_selector(selector) -> tuple[str, ...]:
    """Canonicalize a feature subset to (obs, hidden, dist) order."""
    chosen = set(selector)
    unknown = chosen - set(FEATURE_ORDER)
    if unknown:
        raise ValueError(f"unknown feature names: {sorted(unknown)}")
    if not chosen:
        raise ValueError("feature selector must be nonempty")
    return tuple(name for name in FEATURE_ORDER if name in chosen)


def all_selectors() -> list[tuple[str, ...]]:
    """The 7 nonempty subsets of (obs, hidden, dist), in canonical order."""
    out = []
    for r in range(1, len(FEATURE_ORDER) + 1):
        out.extend(itertools.combinations(FEATURE_ORDER, r))
    return out


def selector_key(selector) -> str:
    return "+".join(normalize_selector(selector))


def concat_features(bundle: FeatureBundle, selector) -> np.ndarray:
    parts = [getattr(bundle, name) for name in normalize_selector(selector)]
    return parts[0] if len(parts) == 1 else np.concatenate(parts)


def max_logit(logits: np.ndarray) -> float:
    return float(np.max(logits))


def max_prob(dist: np.ndarray) -> float:
    return float(np.max(dist))


def margin(dist: np.ndarray) -> float:
    top2 = np.partition(dist, -2)[-2:]
    return float(top2[1] - top2[0])


def neg_entropy(dist: np.ndarray) -> float:
    nz = dist[dist > 0.0]
    return float(np.dot(nz, np.log(nz)))


def neg_energy(logits: np.ndarray) -> float:
    m = np.max(logits)
    return float(m + np.log(np.exp(logits - m).sum()))


def score(measure: str, bundle: FeatureBundle, model: "SvddModel | None" = None) -> float:
    """Dispatch one confidence score; svdd requires a trained model."""
    if measure == "maxlogit":
        return max_logit(bundle.logits)
    if measure == "maxprob":
        return max_prob(bundle.dist)
    if measure == "margin":
        return margin(bundle.dist)
    if measure == "negentropy":
        return neg_entropy(bundle.dist)
    if measure == "negenergy":
        return neg_energy(bundle.logits)
    if measure == "svdd":
        if model is None:
            raise ValueError("svdd scoring requires a trained SvddModel")
        return svdd_score(model, bundle)
    raise ValueError(f"unknown measure {measure!r}")


# ---------------------------------------------------------------------------
# One-class hypersphere detector
# ---------------------------------------------------------------------------

@dataclass
class SvddModel:
    """Shallow encoder with a frozen center; no bias on the output layer."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    center: np.ndarray
    selector: tuple[str, ...]
    meta: dict = field(default_factory=dict)

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def embed_dim(self) -> int:
        return self.W2.shape[0]


def _svdd_embed(model: SvddModel, x: np.ndarray) -> np.ndarray:
    return model.W2 @ np.maximum(model.W1 @ x + model.b1, 0.0)


def svdd_score(model: SvddModel, bundle: FeatureBundle) -> float:
    x = concat_features(bundle, model.selector)
    diff = _svdd_embed(model, x) - model.center
    return float(-np.dot(diff, diff))


def svdd_distances(model: SvddModel, bundles) -> np.ndarray:
    return np.array([-svdd_score(model, b) for b in bundles])


def train_svdd(
    bundles,
    selector=("hidden",),
    seed: int = 0,
    embed_dim: int = 16,
    hidden_dim: int = 32,
    epochs: int = 100,
    learning_rate: float = 5e-3,
) -> SvddModel:
    """Fit the encoder to pull training embeddings toward the frozen center.

    The center is the mean embedding under the randomly initialized encoder;
    training then minimizes the mean squared distance to it by full-batch
    gradient descent.  Deterministic given (bundles, selector, seed).
    """
    selector = normalize_selector(selector)
    if len(bundles) < 100:
        raise ValueError(f"need at least 100 bundles to fit the detector, got {len(bundles)}")
    X = np.stack([concat_features(b, selector) for b in bundles])
    n, input_dim = X.shape

    rng = derive_rng(seed, "svdd-init")
    W1 = rng.normal(0.0, np.sqrt(2.0 / input_dim), size=(hidden_dim, input_dim))
    b1 = np.zeros(hidden_dim)
    W2 = rng.normal(0.0, np.sqrt(1.0 / hidden_dim), size=(embed_dim, hidden_dim))

    if np.all(X == X[0]):
        warnings.warn("all detector training inputs are identical; model will be degenerate")

    pre0 = X @ W1.T + b1
    center = (np.maximum(pre0, 0.0) @ W2.T).mean(axis=0)

    for _ in range(epochs):
        pre = X @ W1.T + b1
        hidden = np.maximum(pre, 0.0)
        emb = hidden @ W2.T
        err = emb - center
        d_emb = (2.0 / n) * err
        gW2 = d_emb.T @ hidden
        d_pre = (d_emb @ W2) * (pre > 0.0)
        gW1 = d_pre.T @ X
        gb1 = d_pre.sum(axis=0)
        W2 -= learning_rate * gW2
        W1 -= learning_rate * gW1
        b1 -= learning_rate * gb1

    model = SvddModel(
        W1=W1,
        b1=b1,
        W2=W2,
        center=center,
        selector=selector,
        meta={
            "n_train": n,
            "epochs": epochs,
            "learning_rate": learning_rate,
            "seed": seed,
        },
    )
    return model


def svdd_to_dict(model: SvddModel) -> dict:
    return {
        "version": SVDD_FORMAT_VERSION,
        "input_dim": model.input_dim,
        "embed_dim": model.embed_dim,
        "selector": list(model.selector),
        "W1": model.W1.tolist(),
        "b1": model.b1.tolist(),
        "W2": model.W2.tolist(),
        "center": model.center.tolist(),
        "training_meta": model.meta,
    }


def svdd_from_dict(doc: dict) -> SvddModel:
    if doc.get("version") != SVDD_FORMAT_VERSION:
        raise ValueError(f"unsupported detector format version {doc.get('version')!r}")
    return SvddModel(
        W1=np.array(doc["W1"]),
        b1=np.array(doc["b1"]),
        W2=np.array(doc["W2"]),
        center=np.array(doc["center"]),
        selector=tuple(doc["selector"]),
        meta=doc.get("training_meta", {}),
    )


def save_svdd(model: SvddModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(svdd_to_dict(model), sort_keys=True), encoding="utf-8")


def load_svdd(path: str | Path) -> SvddModel:
    return svdd_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
