"""Shared fixtures: one cached training set and model per session, tiny scenes."""
import numpy as np
import pytest

from coopsense.accuracy import TrainConfig, generate_training_sets, train_mlp
from coopsense.context import build_context
from coopsense.netmodel import SystemParams
from coopsense.scene import LidarConfig, make_default_scenario, random_scenario

DATA_SEED = 2024
N_SAMPLES = 5600
N_TRAIN = 4480

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def training_sets():
    """5600 fused oracle-labelled samples, featurised at K = 1..3."""
    return generate_training_sets(DATA_SEED, N_SAMPLES, (1, 2, 3))


@pytest.fixture(scope="session")
def models(training_sets):
    """K -> estimator trained on the first 4480 samples."""
    return {K: train_mlp(data[:N_TRAIN], TrainConfig(seed=0)) for K, data in training_sets.items()}


@pytest.fixture(scope="session")
def model(models):
    return models[3]


@pytest.fixture(scope="session")
def default_context(model):
    return build_context(make_default_scenario(0), SystemParams(), model)


SMALL_LIDAR = LidarConfig(azimuth_steps=360, elevation_angles=tuple(np.radians(np.linspace(-25, 3, 12))))


def tiny_context(seed, model, A=0.8, max_cavs=3, max_objects=2):
    """Random N <= 3, M <= 2 instance in which every object is seen by some CAV."""
    rng = np.random.default_rng(seed)
    while True:
        scene = random_scenario(rng, n_cavs=int(rng.integers(2, max_cavs + 1)),
                                n_objects=int(rng.integers(1, max_objects + 1)),
                                road_length=30.0, lidar=SMALL_LIDAR)
        ctx = build_context(scene, SystemParams(A=A), model)
        if np.all(ctx.point_counts.sum(axis=0) > 0):
            return ctx


class CountModel:
    """Stand-in estimator: accuracy saturates with the fused point count."""

    K_ = 1

    def __init__(self, scale=200.0, ceiling=0.98):
        self.scale = scale
        self.ceiling = ceiling

    def predict(self, X):
        X = np.atleast_2d(X)
        return self.ceiling * (1 - np.exp(-X[:, :-3].sum(axis=1) / self.scale))


def stub_context(cavs, objects, A=0.5, scale=200.0, ceiling=0.98, **params):
    """Hand-placed scene evaluated with CountModel; cavs are (x, y), objects (class, x, y)."""
    from coopsense.scene import BoundingBox, Scenario, make_cav, make_object

    scene = Scenario([make_cav(i, x, y) for i, (x, y) in enumerate(cavs)],
                     [make_object(i, c, x, y) for i, (c, x, y) in enumerate(objects)],
                     (20.0, -8.0, 6.0), BoundingBox((50, 0, 5), (200, 100, 10)), lidar=SMALL_LIDAR)
    return build_context(scene, SystemParams(A=A, **params), CountModel(scale, ceiling))


def _rel_err(a, b):
    # the floor keeps finite-difference noise (~1e-11 here) from dominating
    # when a whole layer's gradient is numerically zero
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-6)


def _min_abs_preactivation(model, X):
    h = model.transform_inputs(X)
    smallest = np.inf
    for W, b in zip(model.weights[:-1], model.biases[:-1]):
        z = h @ W + b
        smallest = min(smallest, np.abs(z).min())
        h = np.maximum(z, 0)
    return smallest


def worst_gradient_error(n_batches, step=1e-5, seed=0):
    """Largest relative error between backprop and central differences over random batches."""
    from coopsense.accuracy import MlpModel

    rng = np.random.default_rng(seed)
    worst, checked, init_seed = 0.0, 0, 0
    while checked < n_batches:
        init_seed += 1
        K = int(rng.integers(1, 4))
        X = np.hstack([rng.poisson(20, size=(8, K ** 3)), rng.uniform(0.5, 8, size=(8, 3))])
        y = rng.uniform(0, 1, size=8)
        model = MlpModel.initialize(K ** 3 + 3, K ** 3, seed=init_seed)
        model.fit_input_scaling(X)
        if _min_abs_preactivation(model, X) < 1e-3:
            continue  # a step of 1e-5 could cross a ReLU kink
        _, gW, gb = model.loss_and_grads(X, y)
        for params, grads in ((model.weights, gW), (model.biases, gb)):
            for P, G in zip(params, grads):
                num = np.zeros_like(P)
                for idx in np.ndindex(P.shape):
                    old = P[idx]
                    P[idx] = old + step
                    up = model.loss_and_grads(X, y)[0]
                    P[idx] = old - step
                    down = model.loss_and_grads(X, y)[0]
                    P[idx] = old
                    num[idx] = (up - down) / (2 * step)
                worst = max(worst, _rel_err(G, num))
        checked += 1
    return worst
