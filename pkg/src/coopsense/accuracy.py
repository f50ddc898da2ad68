"""Accuracy oracle, training-set generation and the MLP accuracy estimator.

The estimator maps a fused quality indicator plus the box dimensions to an
estimated classification accuracy in (0, 1). It follows the scikit-learn
estimator protocol so it can be dropped into pipelines, grid searches and
cross-validation helpers.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .quality import QualityIndicator, check_K, compute_indicator, voxel_index
from .scene import BoundingBox, extract_all_objects, random_scenario, simulate_lidar, surface_area


@dataclass(frozen=True)
class OracleParams:
    """Closed-form accuracy oracle settings.

    The defaults are calibrated so that one CAV seeing only the back face of
    a truck lands near 0.7, while a well-spread fused view saturates above
    0.95. A 6^3 oracle partition nests the K = 1, 2, 3 estimator grids.
    """

    K_oracle: int = 6
    lam: float = 0.097
    z_sat: float = 1.5
    S0: float = 25.0

    def __post_init__(self):
        if int(self.K_oracle) != self.K_oracle or self.K_oracle < 1:
            raise ValueError("K_oracle must be a positive integer")
        if self.lam <= 0 or self.z_sat < 1 or self.S0 <= 0:
            raise ValueError("oracle needs lam > 0, z_sat >= 1 and S0 > 0")


def oracle_accuracy(points: np.ndarray, box: BoundingBox, params: OracleParams = OracleParams()) -> float:
    """Synthetic ground-truth accuracy of classifying the object from ``points``.

    Each voxel of a K_oracle partition contributes at most ``z_sat`` points,
    so spreading points over the object's surface pays off more than piling
    them onto one face. The total is normalised by the box surface area.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(points) == 0:
        return 0.0
    if np.any((points < box.lower) | (points > box.upper)):
        raise ValueError("oracle points must lie inside the box")
    Z = np.bincount(voxel_index(points, box, params.K_oracle), minlength=params.K_oracle ** 3)
    capped = np.minimum(Z, params.z_sat).sum()
    return float(1.0 - math.exp(-params.lam * capped / (surface_area(box) / params.S0)))


# ---------------------------------------------------------------------------
# training data

@dataclass(frozen=True)
class TrainingSample:
    features: np.ndarray
    label: float
    class_label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "features", np.asarray(self.features, dtype=float).reshape(-1))
        if not 0.0 <= self.label <= 1.0:
            raise ValueError(f"label must lie in [0, 1], got {self.label}")


def sample_features(indicator: QualityIndicator, box: BoundingBox) -> np.ndarray:
    return np.concatenate([indicator.counts.astype(float), np.asarray(box.lengths)])


def _augment(pts: np.ndarray, box: BoundingBox, rng, crop_prob: float) -> np.ndarray:
    """Random x/y mirror about the box center, then maybe a half-space crop.

    Mirroring covers viewpoints the scene generator rarely produces; the
    crop mimics partial occlusion.
    """
    center = np.asarray(box.center)
    flip = np.array([rng.choice([-1.0, 1.0]), rng.choice([-1.0, 1.0]), 1.0])
    pts = np.clip(center + (pts - center) * flip, box.lower, box.upper)
    if len(pts) and rng.random() < crop_prob:
        axis = rng.integers(3)
        cut = box.lower[axis] + rng.uniform(0.15, 0.85) * box.lengths[axis]
        keep = pts[:, axis] <= cut if rng.random() < 0.5 else pts[:, axis] >= cut
        pts = pts[keep]
    return pts


def fused_instances(seed: int, count: int, subsample_prob: float = 0.5, lidar=None,
                    per_object: int = 8, augment: bool = True, crop_prob: float = 0.5):
    """Yield ``count`` random ``(points, box, class_label)`` fused object data sets.

    Each comes from one object of a random scene, fusing the object data of
    a random non-empty subset of the scene's CAVs. With probability
    ``subsample_prob`` the fused set is also thinned by a log-uniform random
    ratio in [0.01, 1] to cover low point counts. ``augment`` adds random
    mirroring and occlusion-like cropping (see ``_augment``).
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(seed)
    produced = 0
    while produced < count:
        scene = random_scenario(rng, lidar=lidar)
        per_cav = [extract_all_objects(simulate_lidar(scene, cav), scene.objects) for cav in scene.cavs]
        for m, obj in enumerate(scene.objects):
            seen = np.array([len(per_cav[n][m]) > 0 for n in range(scene.n_cavs)])
            for _ in range(per_object):
                if produced >= count:
                    return
                # mostly fuse CAVs that actually see the object
                pool = np.flatnonzero(seen) if seen.any() and rng.random() < 0.9 else np.arange(scene.n_cavs)
                chosen = pool[rng.random(len(pool)) < 0.5]
                if chosen.size == 0:
                    chosen = pool[[rng.integers(len(pool))]]
                pts = np.concatenate([per_cav[n][m] for n in chosen])
                if len(pts) and rng.random() < subsample_prob:
                    pts = pts[rng.random(len(pts)) < 10 ** rng.uniform(-2, 0)]
                if augment:
                    pts = _augment(pts, obj.box, rng, crop_prob)
                yield pts, obj.box, obj.class_label
                produced += 1


def generate_training_sets(seed: int, count: int, Ks=(3,), oracle: OracleParams = OracleParams(),
                           **kwargs) -> dict[int, list[TrainingSample]]:
    """Labelled samples for several partition resolutions from one stream of fused data."""
    Ks = [check_K(K) for K in Ks]
    out: dict[int, list[TrainingSample]] = {K: [] for K in Ks}
    for pts, box, label_class in fused_instances(seed, count, **kwargs):
        label = oracle_accuracy(pts, box, oracle)
        for K in Ks:
            feats = sample_features(compute_indicator(pts, box, K), box)
            out[K].append(TrainingSample(feats, label, label_class))
    return out


def generate_training_set(seed: int, count: int = 5600, K: int = 3,
                          oracle: OracleParams = OracleParams(), **kwargs) -> list[TrainingSample]:
    return generate_training_sets(seed, count, (K,), oracle, **kwargs)[K]


def as_arrays(data) -> tuple[np.ndarray, np.ndarray]:
    data = list(data)
    if not data:
        raise ValueError("no samples")
    lengths = {s.features.size for s in data}
    if len(lengths) != 1:
        raise ValueError(f"inconsistent feature lengths: {sorted(lengths)}")
    return np.stack([s.features for s in data]), np.array([s.label for s in data])


# ---------------------------------------------------------------------------
# network

def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class MlpModel:
    """Fully connected ReLU network with a logistic output unit.

    Inputs go through a fixed transform first: log1p on the K^3 count
    features, then standardisation with statistics frozen at fit time.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    n_counts: int
    feature_mean: np.ndarray = field(default=None)
    feature_scale: np.ndarray = field(default=None)

    def __post_init__(self):
        n_in = self.weights[0].shape[0]
        if self.feature_mean is None:
            self.feature_mean = np.zeros(n_in)
        if self.feature_scale is None:
            self.feature_scale = np.ones(n_in)

    @classmethod
    def initialize(cls, n_inputs: int, n_counts: int, hidden=(32, 16), seed: int = 0) -> "MlpModel":
        rng = np.random.default_rng(seed)
        sizes = [n_inputs, *hidden, 1]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, n_counts)

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[0]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def transform_inputs(self, X: np.ndarray) -> np.ndarray:
        X = np.array(X, dtype=float)
        X[:, :self.n_counts] = np.log1p(X[:, :self.n_counts])
        return (X - self.feature_mean) / self.feature_scale

    def fit_input_scaling(self, X: np.ndarray) -> None:
        # counts share one scale and no shift so empty voxels map to 0 and
        # relative voxel magnitudes survive; box lengths are standardised
        nc = self.n_counts
        self.feature_mean = np.zeros(self.n_inputs)
        self.feature_scale = np.ones(self.n_inputs)
        H = self.transform_inputs(X)
        count_std = H[:, :nc].std()
        dim_std = H[:, nc:].std(axis=0)
        self.feature_mean[nc:] = H[:, nc:].mean(axis=0)
        self.feature_scale[:nc] = count_std if count_std > 1e-8 else 1.0
        self.feature_scale[nc:] = np.where(dim_std > 1e-8, dim_std, 1.0)

    def _forward(self, H):
        acts = [H]
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            Z = acts[-1] @ W + b
            acts.append(np.maximum(Z, 0.0) if i < len(self.weights) - 1 else _sigmoid(Z))
        return acts

    def forward(self, X: np.ndarray) -> np.ndarray:
        # the logistic unit rounds to exactly 0 or 1 for large logits; keep
        # predictions strictly inside (0, 1)
        out = self._forward(self.transform_inputs(X))[-1][:, 0]
        return np.clip(out, 1e-12, 1 - 1e-12)

    def loss_and_grads(self, X: np.ndarray, y: np.ndarray):
        """Mean squared error on (X, y) and its gradients w.r.t. weights and biases."""
        acts = self._forward(self.transform_inputs(X))
        out = acts[-1][:, 0]
        err = out - y
        loss = float(np.mean(err ** 2))
        delta = (2.0 / len(y)) * err * out * (1.0 - out)
        delta = delta[:, None]
        gW = [None] * len(self.weights)
        gb = [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            gW[i] = acts[i].T @ delta
            gb[i] = delta.sum(axis=0)
            if i:
                delta = (delta @ self.weights[i].T) * (acts[i] > 0)
        return loss, gW, gb

    def copy(self) -> "MlpModel":
        return MlpModel([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                        self.n_counts, self.feature_mean.copy(), self.feature_scale.copy())

    def to_dict(self) -> dict:
        return {
            "layer_sizes": self.layer_sizes,
            "n_counts": self.n_counts,
            "feature_mean": self.feature_mean.tolist(),
            "feature_scale": self.feature_scale.tolist(),
            "layers": [{"weights": W.tolist(), "biases": b.tolist()}
                       for W, b in zip(self.weights, self.biases)],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MlpModel":
        weights = [np.asarray(layer["weights"], dtype=float) for layer in doc["layers"]]
        biases = [np.asarray(layer["biases"], dtype=float) for layer in doc["layers"]]
        model = cls(weights, biases, int(doc["n_counts"]),
                    np.asarray(doc["feature_mean"], dtype=float),
                    np.asarray(doc["feature_scale"], dtype=float))
        if model.layer_sizes != list(doc["layer_sizes"]):
            raise ValueError("layer_sizes do not match the stored weight shapes")
        return model


class AccuracyEstimator(BaseEstimator, RegressorMixin):
    """MLP regressor of classification accuracy from quality indicator features.

    Minimises the squared error over seeded minibatches, so repeated fits
    are bit-identical.

    Parameters
    ----------
    hidden_layer_sizes : tuple of int
    epochs : int
    batch_size : int
    learning_rate : float
    solver : {"adam", "sgd"}
        ``"sgd"`` is plain fixed-step gradient descent; ``"adam"`` uses
        bias-corrected moment estimates and converges far faster here.
    random_state : int
        Seeds both the weight initialisation and the shuffling.
    """

    def __init__(self, hidden_layer_sizes=(32, 16), epochs=200, batch_size=32,
                 learning_rate=3e-4, solver="adam", random_state=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.solver = solver
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        if np.any((y < 0) | (y > 1)):
            raise ValueError("accuracy labels must lie in [0, 1]")
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("epochs >= 0, batch_size >= 1 and learning_rate > 0 required")
        if self.solver not in ("adam", "sgd"):
            raise ValueError(f"unknown solver {self.solver!r}")
        n_counts = X.shape[1] - 3
        K = round(n_counts ** (1 / 3))
        if K ** 3 != n_counts:
            raise ValueError(f"expected K^3 + 3 features, got {X.shape[1]}")
        self.K_ = K
        self.n_features_in_ = X.shape[1]
        model = MlpModel.initialize(X.shape[1], n_counts, tuple(self.hidden_layer_sizes),
                                    seed=self.random_state)
        model.fit_input_scaling(X)
        self.initial_model_ = model.copy()

        params = model.weights + model.biases
        m1 = [np.zeros_like(p) for p in params]
        m2 = [np.zeros_like(p) for p in params]
        b1, b2, step = 0.9, 0.999, 0
        rng = np.random.default_rng(self.random_state + 1)
        self.loss_curve_ = [model.loss_and_grads(X, y)[0]]
        for _ in range(self.epochs):
            order = rng.permutation(len(y))
            for start in range(0, len(y), self.batch_size):
                idx = order[start:start + self.batch_size]
                _, gW, gb = model.loss_and_grads(X[idx], y[idx])
                step += 1
                for p, g, a, v in zip(params, gW + gb, m1, m2):
                    if self.solver == "sgd":
                        p -= self.learning_rate * g
                        continue
                    a *= b1
                    a += (1 - b1) * g
                    v *= b2
                    v += (1 - b2) * g * g
                    p -= self.learning_rate * (a / (1 - b1 ** step)) / (np.sqrt(v / (1 - b2 ** step)) + 1e-8)
            self.loss_curve_.append(model.loss_and_grads(X, y)[0])
        self.model_ = model
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return self.model_.forward(X)

    def save(self, path) -> None:
        check_is_fitted(self, "model_")
        doc = {"params": {**self.get_params(), "hidden_layer_sizes": list(self.hidden_layer_sizes)},
               "model": self.model_.to_dict()}
        Path(path).write_text(json.dumps(doc))

    @classmethod
    def load(cls, path) -> "AccuracyEstimator":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"model file not found: {path}")
        doc = json.loads(path.read_text())
        params = dict(doc["params"])
        params["hidden_layer_sizes"] = tuple(params["hidden_layer_sizes"])
        est = cls(**params)
        est.model_ = MlpModel.from_dict(doc["model"])
        est.n_features_in_ = est.model_.n_inputs
        est.K_ = round(est.model_.n_counts ** (1 / 3))
        return est


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 3e-4
    solver: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("epochs >= 0, batch_size >= 1 and learning_rate > 0 required")


def train_mlp(data, cfg: TrainConfig = TrainConfig()) -> AccuracyEstimator:
    X, y = as_arrays(data)
    return AccuracyEstimator(epochs=cfg.epochs, batch_size=cfg.batch_size,
                             learning_rate=cfg.learning_rate, solver=cfg.solver,
                             random_state=cfg.seed).fit(X, y)


def predict_accuracy(model: AccuracyEstimator, indicator: QualityIndicator, box: BoundingBox) -> float:
    check_is_fitted(model, "model_")
    if indicator.K ** 3 + 3 != model.n_features_in_:
        raise ValueError(f"indicator K={indicator.K} does not match the model input size "
                         f"{model.n_features_in_}")
    return float(model.predict(sample_features(indicator, box)[None, :])[0])


def eval_metrics(model: AccuracyEstimator, data) -> tuple[float, float, float]:
    """(MSE, MAE, variance of the absolute error) of ``model`` on ``data``."""
    X, y = as_arrays(data)
    abs_err = np.abs(model.predict(X) - y)
    mae = float(abs_err.mean())
    return float(np.mean(abs_err ** 2)), mae, float(np.mean((abs_err - mae) ** 2))
