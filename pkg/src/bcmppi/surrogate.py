"""Deep-ensemble constraint regressor with predictive uncertainty.

The learned constraint score c(features) is regressed by M independently
initialized MLPs (113 -> hidden -> hidden -> 1, tanh).  The ensemble's
member mean and spread give a Gaussian predictive (mu, sigma), and the
probability that the constraint is satisfied (score <= threshold) is the
normal CDF of the standardized threshold.

Features are the 13 state components followed by the 100 flattened
horizon thrusts (step-major).  Features and labels are standardized on
the training split; training is plain minibatch gradient descent with
momentum on squared error, with explicit backpropagation.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import erfc

from .dynamics import State
from .errors import ModelFormatError, TrainingDivergedError
from .mppi import ControlPlan

FEATURE_DIM = 113
SURROGATE_HORIZON = 25
LABEL_CONVENTIONS = ("margin", "penalty_average")

_SQRT2 = float(np.sqrt(2.0))


def normal_cdf(x):
    """Standard normal CDF via the complementary error function.

    Stable in both tails; scalar in, scalar out (arrays pass through).
    """
    result = 0.5 * erfc(-np.asarray(x, dtype=float) / _SQRT2)
    if np.isscalar(x) or np.ndim(x) == 0:
        return float(result)
    return result


def features_from_rollout(initial: State, plan: ControlPlan) -> np.ndarray:
    """113-vector: [position(3), quaternion(4), velocity(3), body rate(3),
    thrusts step-major (100)]."""
    if plan.horizon != SURROGATE_HORIZON:
        raise ValueError(
            f"horizon mismatch: surrogate features require a {SURROGATE_HORIZON}-step "
            f"plan, got {plan.horizon}")
    return np.concatenate([initial.as_array(), plan.flattened()])


def unpack_features(features: np.ndarray):
    """Inverse of features_from_rollout (dt defaults to 0.02)."""
    features = np.asarray(features, dtype=float)
    if features.shape != (FEATURE_DIM,):
        raise ValueError(f"expected {FEATURE_DIM} features, got shape {features.shape}")
    state = State.from_array(features[:13])
    plan = ControlPlan(features[13:].reshape(SURROGATE_HORIZON, 4))
    return state, plan


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray  # floored at 1e-8 so constant features stay finite

    STD_FLOOR = 1e-8

    @classmethod
    def fit(cls, rows: np.ndarray) -> "Standardizer":
        mean = rows.mean(axis=0)
        std = np.maximum(rows.std(axis=0), cls.STD_FLOOR)
        return cls(mean=mean, std=std)

    def transform(self, rows: np.ndarray) -> np.ndarray:
        return (rows - self.mean) / self.std

    def inverse_transform(self, rows: np.ndarray) -> np.ndarray:
        return rows * self.std + self.mean


class MlpRegressor:
    """Fixed-topology MLP with tanh hidden layers and a linear scalar head."""

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        self.weights = weights
        self.biases = biases

    @classmethod
    def initialize(cls, layer_sizes: Sequence[int], rng: np.random.Generator) -> "MlpRegressor":
        weights, biases = [], []
        for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            scale = 1.0 / np.sqrt(n_in)
            weights.append(rng.normal(0.0, scale, (n_in, n_out)))
            biases.append(np.zeros(n_out))
        return cls(weights, biases)

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def forward(self, x: np.ndarray) -> np.ndarray:
        """(B, in) -> (B,) predictions."""
        a = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.tanh(a @ w + b)
        return (a @ self.weights[-1] + self.biases[-1])[:, 0]

    def loss_and_gradients(self, x: np.ndarray, t: np.ndarray):
        """Mean squared error and its gradients for one batch.

        Backpropagation is explicit; test_surrogate checks it against
        central finite differences.
        """
        activations = [x]
        a = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.tanh(a @ w + b)
            activations.append(a)
        y = (a @ self.weights[-1] + self.biases[-1])[:, 0]
        residual = y - t
        loss = float(np.mean(residual * residual))

        batch = x.shape[0]
        delta = (2.0 / batch) * residual[:, None]          # d loss / d y
        grads_w, grads_b = [], []
        for layer in range(len(self.weights) - 1, -1, -1):
            a_in = activations[layer]
            grads_w.append(a_in.T @ delta)
            grads_b.append(delta.sum(axis=0))
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * (1.0 - a_in * a_in)
        grads_w.reverse()
        grads_b.reverse()
        return loss, grads_w, grads_b


@dataclass(frozen=True)
class SurrogatePrediction:
    mu: float
    sigma: float
    feasibility_probability: float


@dataclass
class TrainingConfig:
    epochs: int = 400
    batch_size: int = 64
    learning_rate: float = 1.0e-3
    momentum: float = 0.9
    members: int = 5
    hidden: tuple[int, int] = (64, 64)
    test_fraction: float = 0.3
    label_convention: str = "margin"
    sigma_floor: float = 1.0e-6

    def __post_init__(self):
        if self.members < 2:
            raise ValueError("ensemble needs at least 2 members for a predictive std")
        if self.label_convention not in LABEL_CONVENTIONS:
            raise ValueError(f"label_convention must be one of {LABEL_CONVENTIONS}")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie in (0, 1)")


class SurrogateEnsemble:
    """Immutable once constructed; prediction is pure and thread-safe."""

    def __init__(self, members: list[MlpRegressor], standardizer: Standardizer,
                 label_mean: float, label_scale: float,
                 label_convention: str = "margin", sigma_floor: float = 1.0e-6):
        if len(members) < 2:
            raise ModelFormatError("ensemble needs at least 2 members for a predictive std")
        if label_convention not in LABEL_CONVENTIONS:
            raise ModelFormatError(f"unknown label convention {label_convention!r}")
        self.members = members
        self.standardizer = standardizer
        self.label_mean = float(label_mean)
        self.label_scale = float(label_scale)
        self.label_convention = label_convention
        self.sigma_floor = float(sigma_floor)

    def predict_batch(self, features: np.ndarray):
        """(B, 113) -> (mu, sigma, feasibility), each (B,)."""
        features = np.asarray(features, dtype=float)
        if features.ndim != 2 or features.shape[1] != FEATURE_DIM:
            raise ValueError(f"expected (B, {FEATURE_DIM}) features, got {features.shape}")
        xs = self.standardizer.transform(features)
        outputs = np.stack([m.forward(xs) for m in self.members])      # (M, B)
        raw = self.label_mean + self.label_scale * outputs
        mu = raw.mean(axis=0)
        sigma = np.maximum(raw.std(axis=0), self.sigma_floor)
        if self.label_convention == "margin":
            feasibility = normal_cdf(-mu / sigma)
        else:
            # nonnegative penalty-average labels: feasible means score <= tau,
            # tau = one standardized unit above the label mean
            tau = self.label_mean + self.label_scale
            feasibility = normal_cdf((tau - mu) / sigma)
        return mu, sigma, feasibility

    def predict(self, features: np.ndarray) -> SurrogatePrediction:
        features = np.asarray(features, dtype=float)
        mu, sigma, feasibility = self.predict_batch(features[None, :])
        return SurrogatePrediction(float(mu[0]), float(sigma[0]), float(feasibility[0]))


class ConstantFeasibility:
    """Stub with the ensemble prediction interface; returns a fixed factor."""

    def __init__(self, value: float = 1.0):
        self.value = float(value)

    def predict_batch(self, features: np.ndarray):
        n = np.asarray(features).shape[0]
        feasibility = np.full(n, self.value)
        return np.zeros(n), np.full(n, 1.0), feasibility


def _split_indices(n: int, test_fraction: float, rng: np.random.Generator):
    order = rng.permutation(n)
    n_test = int(round(n * test_fraction))
    return order[n_test:], order[:n_test]


def _r_squared(targets: np.ndarray, predictions: np.ndarray) -> float:
    ss_res = float(np.sum((targets - predictions) ** 2))
    ss_tot = float(np.sum((targets - targets.mean()) ** 2))
    if ss_tot == 0.0:
        return 0.0 if ss_res > 0 else 1.0
    return 1.0 - ss_res / ss_tot


def train(features: np.ndarray, targets: np.ndarray,
          config: TrainingConfig | None = None, seed: int = 0):
    """Fit the ensemble on a shuffled 7:3 split.

    Returns (ensemble, report).  The standardizer and label statistics are
    fitted on the training split only.
    """
    config = config or TrainingConfig()
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if features.ndim != 2 or len(features) != len(targets):
        raise ValueError("features must be (n, d) with one target per row")
    if len(features) == 0:
        raise ValueError("empty dataset")

    root = np.random.SeedSequence(seed)
    shuffle_seq, *member_seqs = root.spawn(1 + config.members)
    train_idx, test_idx = _split_indices(len(features), config.test_fraction,
                                         np.random.Generator(np.random.PCG64(shuffle_seq)))
    x_train, x_test = features[train_idx], features[test_idx]
    y_train, y_test = targets[train_idx], targets[test_idx]

    standardizer = Standardizer.fit(x_train)
    label_mean = float(y_train.mean())
    label_scale = float(max(y_train.std(), Standardizer.STD_FLOOR))
    xs = standardizer.transform(x_train)
    ys = (y_train - label_mean) / label_scale

    layer_sizes = [features.shape[1], *config.hidden, 1]
    members = []
    for seq in member_seqs:
        rng = np.random.Generator(np.random.PCG64(seq))
        member = MlpRegressor.initialize(layer_sizes, rng)
        _fit_member(member, xs, ys, config, rng)
        members.append(member)

    ensemble = SurrogateEnsemble(members, standardizer, label_mean, label_scale,
                                 config.label_convention, config.sigma_floor)
    report = _report(ensemble, x_train, y_train, x_test, y_test, config)
    return ensemble, report


def _fit_member(member: MlpRegressor, xs: np.ndarray, ys: np.ndarray,
                config: TrainingConfig, rng: np.random.Generator):
    velocity_w = [np.zeros_like(w) for w in member.weights]
    velocity_b = [np.zeros_like(b) for b in member.biases]
    n = len(xs)
    batch = min(config.batch_size, n)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            rows = order[start:start + batch]
            loss, grads_w, grads_b = member.loss_and_gradients(xs[rows], ys[rows])
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}; lower the learning rate")
            for i in range(len(member.weights)):
                velocity_w[i] = config.momentum * velocity_w[i] - config.learning_rate * grads_w[i]
                velocity_b[i] = config.momentum * velocity_b[i] - config.learning_rate * grads_b[i]
                member.weights[i] += velocity_w[i]
                member.biases[i] += velocity_b[i]


def _report(ensemble: SurrogateEnsemble, x_train, y_train, x_test, y_test,
            config: TrainingConfig) -> dict:
    mu_train, _, _ = ensemble.predict_batch(x_train)
    mu_test, _, _ = ensemble.predict_batch(x_test)
    mse_test = float(np.mean((mu_test - y_test) ** 2))
    return {
        "n_train": len(x_train),
        "n_test": len(x_test),
        "mse_train": float(np.mean((mu_train - y_train) ** 2)),
        "mse_test": mse_test,
        "mse_test_standardized": mse_test / ensemble.label_scale ** 2,
        "r2_train": _r_squared(y_train, mu_train),
        "r2_test": _r_squared(y_test, mu_test),
        "label_mean": ensemble.label_mean,
        "label_scale": ensemble.label_scale,
        "label_convention": ensemble.label_convention,
        "members": len(ensemble.members),
        "epochs": config.epochs,
    }


# ---------------------------------------------------------------------------
# persistence

FORMAT_NAME = "bcmppi-surrogate"
FORMAT_VERSION = 1


def _payload(ensemble: SurrogateEnsemble) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "label_convention": ensemble.label_convention,
        "label_mean": ensemble.label_mean,
        "label_scale": ensemble.label_scale,
        "sigma_floor": ensemble.sigma_floor,
        "standardizer": {
            "mean": ensemble.standardizer.mean.tolist(),
            "std": ensemble.standardizer.std.tolist(),
        },
        "members": [
            {
                "layer_sizes": m.layer_sizes,
                "weights": [w.tolist() for w in m.weights],
                "biases": [b.tolist() for b in m.biases],
            }
            for m in ensemble.members
        ],
    }


def _hash(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(canonical.encode()).hexdigest()


def save_ensemble(ensemble: SurrogateEnsemble, path) -> str:
    """Write the versioned model artifact; returns its content hash."""
    payload = _payload(ensemble)
    payload["content_hash"] = _hash({k: v for k, v in payload.items()})
    Path(path).write_text(json.dumps(payload))
    return payload["content_hash"]


def load_ensemble(path) -> SurrogateEnsemble:
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"cannot read model file {path}: {exc}") from exc
    if payload.get("format") != FORMAT_NAME:
        raise ModelFormatError(f"{path} is not a {FORMAT_NAME} artifact")
    if payload.get("version") != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model version {payload.get('version')}")
    stored_hash = payload.pop("content_hash", None)
    if stored_hash is not None and stored_hash != _hash(payload):
        raise ModelFormatError(f"content hash mismatch in {path}; file corrupted?")
    members = [
        MlpRegressor([np.asarray(w, dtype=float) for w in m["weights"]],
                     [np.asarray(b, dtype=float) for b in m["biases"]])
        for m in payload["members"]
    ]
    standardizer = Standardizer(
        mean=np.asarray(payload["standardizer"]["mean"], dtype=float),
        std=np.asarray(payload["standardizer"]["std"], dtype=float),
    )
    return SurrogateEnsemble(members, standardizer, payload["label_mean"],
                             payload["label_scale"], payload["label_convention"],
                             payload["sigma_floor"])
