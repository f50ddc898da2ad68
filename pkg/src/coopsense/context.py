"""Per-task state shared by the optimisers: sensed data, indicators and caches."""
from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .accuracy import AccuracyEstimator, OracleParams, oracle_accuracy, sample_features
from .netmodel import Assignment, SystemParams, node_distances, validate_topology
from .quality import QualityIndicator, compute_indicator, fuse_indicators
from .resalloc import AllocationResult, build_problem, solve_p2
from .scene import Scenario, extract_all_objects, simulate_lidar


@dataclass
class TaskContext:
    """Everything fixed for one perception task.

    ``points[n][m]`` is CAV n's sensing data for object m and
    ``indicators[n][m]`` its quality indicator at the model's K.
    Accuracy predictions are memoised per (object, selection).
    """

    scenario: Scenario
    params: SystemParams
    model: AccuracyEstimator
    points: list
    indicators: list
    oracle: OracleParams = field(default_factory=OracleParams)
    _est_cache: dict = field(default_factory=dict, repr=False)
    _orc_cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        self.point_counts = np.array([[len(p) for p in row] for row in self.points], dtype=np.int64)
        self.distances = node_distances(self.scenario)
        self.boxes = [o.box for o in self.scenario.objects]

    @property
    def N(self) -> int:
        return self.scenario.n_cavs

    @property
    def M(self) -> int:
        return self.scenario.n_objects

    @property
    def K(self) -> int:
        return self.indicators[0][0].K

    def with_params(self, params: SystemParams) -> "TaskContext":
        """Same sensed data under different system parameters (sweeps)."""
        ctx = TaskContext(self.scenario, params, self.model, self.points, self.indicators, self.oracle)
        # predictions do not depend on system parameters
        ctx._est_cache = self._est_cache
        ctx._orc_cache = self._orc_cache
        return ctx

    def has_data(self, n: int, m: int) -> bool:
        return bool(self.point_counts[n, m] > 0)

    def fused_indicator(self, m: int, bits) -> QualityIndicator:
        return fuse_indicators(bits, [self.indicators[n][m] for n in range(self.N)])

    def estimated_accuracy(self, m: int, bits) -> float:
        key = (m, tuple(int(b) for b in bits))
        with self._lock:
            hit = self._est_cache.get(key)
        if hit is None:
            x = sample_features(self.fused_indicator(m, key[1]), self.boxes[m])
            hit = float(self.model.predict(x[None, :])[0])
            with self._lock:
                self._est_cache[key] = hit
        return hit

    def oracle_accuracy(self, m: int, bits) -> float:
        key = (m, tuple(int(b) for b in bits))
        if key not in self._orc_cache:
            chosen = [self.points[n][m] for n in range(self.N) if key[1][n]]
            pts = np.concatenate(chosen) if chosen else np.empty((0, 3))
            self._orc_cache[key] = oracle_accuracy(pts, self.boxes[m], self.oracle)
        return self._orc_cache[key]

    def accuracies(self, assignment: Assignment) -> list[float]:
        return [self.estimated_accuracy(m, assignment.s[:, m]) for m in range(self.M)]

    def oracle_accuracies(self, assignment: Assignment) -> list[float]:
        return [self.oracle_accuracy(m, assignment.s[:, m]) for m in range(self.M)]

    def allocate(self, assignment: Assignment) -> AllocationResult:
        return solve_p2(build_problem(assignment, self.point_counts, self.scenario, self.params,
                                      self.distances))


@dataclass(frozen=True)
class Evaluation:
    feasible: bool
    cost: float | None
    allocation: AllocationResult | None
    failure: str | None = None  # "accuracy", "topology" or "resource"


def evaluate(ctx: TaskContext, assignment: Assignment, enforce_accuracy: bool = True) -> Evaluation:
    """Check accuracy, topology and P2 feasibility; cost is the P2 optimum."""
    if enforce_accuracy and any(a < ctx.params.A for a in ctx.accuracies(assignment)):
        return Evaluation(False, None, None, "accuracy")
    if validate_topology(assignment):
        return Evaluation(False, None, None, "topology")
    alloc = ctx.allocate(assignment)
    if not alloc.tau:
        return Evaluation(False, None, alloc, "resource")
    return Evaluation(True, alloc.cost, alloc)


def build_context(scenario: Scenario, params: SystemParams, model: AccuracyEstimator,
                  oracle: OracleParams = OracleParams()) -> TaskContext:
    """Simulate every CAV's cloud and extract per-object data and indicators."""
    K = model.K_
    points, indicators = [], []
    for cav in scenario.cavs:
        per_obj = extract_all_objects(simulate_lidar(scenario, cav), scenario.objects)
        points.append(per_obj)
        indicators.append([compute_indicator(p, o.box, K) for p, o in zip(per_obj, scenario.objects)])
    return TaskContext(scenario, params, model, points, indicators, oracle)
