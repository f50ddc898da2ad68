"""Benchmark schemes and the proposed scheme, run side by side."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import ga
from .context import TaskContext, evaluate
from .netmodel import Assignment, cost_split, verify_solution
from .resalloc import AllocationResult

SCHEMES = ("all", "unified", "nearest", "centralized", "proposed")


@dataclass
class SchemeResult:
    scheme: str
    feasible: bool
    assignment: Assignment | None = None
    allocation: AllocationResult | None = None
    accuracy: list = field(default_factory=list)         # estimator
    oracle_accuracy: list = field(default_factory=list)  # audit only
    total_cost: float | None = None
    bandwidth_fraction: float | None = None
    compute_fraction: float | None = None
    reason: str = ""
    history: list | None = None  # GA elite cost per generation
    A: float = 0.0

    @property
    def meets_accuracy(self) -> list[bool]:
        return [a >= self.A for a in self.accuracy]


def _finish(ctx: TaskContext, scheme: str, assignment: Assignment, enforce_accuracy=True,
            history=None) -> SchemeResult:
    ev = evaluate(ctx, assignment, enforce_accuracy)
    res = SchemeResult(scheme, ev.feasible, assignment, ev.allocation,
                       ctx.accuracies(assignment), ctx.oracle_accuracies(assignment),
                       reason=ev.failure or "", history=history, A=ctx.params.A)
    if ev.feasible:
        alloc = ev.allocation
        beta = alloc.beta_matrix(ctx.N)
        # every emitted solution is re-checked against the full problem
        bad = verify_solution(assignment, alloc.alpha, beta, ctx.point_counts, ctx.distances,
                              ctx.params, res.accuracy if enforce_accuracy else None)
        if bad:
            raise AssertionError(f"{scheme}: solution fails re-check: {'; '.join(map(str, bad))}")
        res.total_cost = alloc.cost
        bw, comp = cost_split(alloc.alpha, beta, ctx.params)
        res.bandwidth_fraction, res.compute_fraction = bw, comp
    return res


def _infeasible(ctx: TaskContext, scheme: str, reason: str) -> SchemeResult:
    return SchemeResult(scheme, False, reason=reason, A=ctx.params.A)


def _at_rsu(ctx: TaskContext, s: np.ndarray) -> Assignment:
    e = np.zeros((ctx.N + 1, ctx.M), dtype=np.int8)
    e[ctx.N] = 1
    return Assignment(s, e)


def scheme_all(ctx: TaskContext) -> SchemeResult:
    """Every CAV shares all of its object data; everything is processed at the RSU."""
    s = (ctx.point_counts > 0).astype(np.int8)
    return _finish(ctx, "all", _at_rsu(ctx, s))


def scheme_unified(ctx: TaskContext) -> SchemeResult:
    """Cheapest CAV subset whose full data serves every object, processed at the RSU."""
    if ctx.N > 20:
        raise ValueError("unified enumeration supports at most 20 CAVs")
    best = None
    for r in range(1, ctx.N + 1):
        for subset in itertools.combinations(range(ctx.N), r):
            s = np.zeros((ctx.N, ctx.M), dtype=np.int8)
            s[list(subset)] = 1
            s &= (ctx.point_counts > 0)
            ev = evaluate(ctx, _at_rsu(ctx, s))
            if ev.feasible and (best is None or ev.cost < best[0]):
                best = (ev.cost, s)
    if best is None:
        return _infeasible(ctx, "unified", "no CAV subset meets every constraint")
    return _finish(ctx, "unified", _at_rsu(ctx, best[1]))


def nearest_cav(ctx: TaskContext, m: int) -> int | None:
    """Closest CAV (sensor origin to box center) holding data for object m."""
    center = np.asarray(ctx.boxes[m].center)
    holders = [n for n in range(ctx.N) if ctx.has_data(n, m)]
    if not holders:
        return None
    dist = [np.linalg.norm(np.asarray(ctx.scenario.cavs[n].sensor_origin) - center) for n in holders]
    return holders[int(np.argmin(dist))]  # argmin keeps the lowest index on ties


def scheme_nearest(ctx: TaskContext) -> SchemeResult:
    """Nearest CAV's data only; processed locally when its compute fits in T, else at the RSU.

    Accuracy is reported, not enforced.
    """
    f = ctx.params.node_frequencies(ctx.N)
    s = np.zeros((ctx.N, ctx.M), dtype=np.int8)
    e = np.zeros((ctx.N + 1, ctx.M), dtype=np.int8)
    load = np.zeros(ctx.N)
    for m in range(ctx.M):
        n = nearest_cav(ctx, m)
        if n is None:
            e[ctx.N, m] = 1
            continue
        s[n, m] = 1
        mu = ctx.params.epsilon * ctx.point_counts[n, m]
        if (load[n] + mu) / f[n] <= ctx.params.T:
            load[n] += mu
            e[n, m] = 1
        else:
            e[ctx.N, m] = 1
    return _finish(ctx, "nearest", Assignment(s, e), enforce_accuracy=False)


def _ga_scheme(ctx: TaskContext, name: str, cfg: ga.GaConfig, nodes, exhaustive: bool) -> SchemeResult:
    try:
        if exhaustive:
            best, _ = ga.exhaustive_solve(ctx, nodes)
            if best is None:
                return _infeasible(ctx, name, "infeasible instance")
            return _finish(ctx, name, best.assignment(ctx.N))
        out = ga.run(ctx, cfg, nodes)
    except (ga.GaInitError, ga.InfeasibleInstance) as exc:
        return _infeasible(ctx, name, str(exc))
    return _finish(ctx, name, out.best.assignment(ctx.N), history=out.history)


def scheme_centralized(ctx: TaskContext, cfg: ga.GaConfig = ga.GaConfig(), exhaustive: bool = False):
    """Selection optimised as in the proposed scheme, every subtask at the RSU."""
    return _ga_scheme(ctx, "centralized", cfg, [ctx.N], exhaustive)


def scheme_proposed(ctx: TaskContext, cfg: ga.GaConfig = ga.GaConfig(), exhaustive: bool = False):
    return _ga_scheme(ctx, "proposed", cfg, None, exhaustive)


def run_scheme(name: str, ctx: TaskContext, cfg: ga.GaConfig = ga.GaConfig(),
               exhaustive: bool = False) -> SchemeResult:
    if name == "all":
        return scheme_all(ctx)
    if name == "unified":
        return scheme_unified(ctx)
    if name == "nearest":
        return scheme_nearest(ctx)
    if name == "centralized":
        return scheme_centralized(ctx, cfg, exhaustive)
    if name == "proposed":
        return scheme_proposed(ctx, cfg, exhaustive)
    raise ValueError(f"unknown scheme {name!r}; expected one of {SCHEMES}")


def dominance_violations(results: dict, tol: float = 1e-9) -> list[str]:
    """Breaks of proposed <= centralized <= unified <= all among feasible schemes."""
    chain = ("proposed", "centralized", "unified", "all")
    out = []
    if all(k in results and results[k].feasible for k in chain):
        for lo, hi in zip(chain[:-1], chain[1:]):
            if results[lo].total_cost > results[hi].total_cost + tol:
                out.append(f"{lo} ({results[lo].total_cost:.6g}) > {hi} ({results[hi].total_cost:.6g})")
    return out


def compare_schemes(ctx: TaskContext, cfg: ga.GaConfig = ga.GaConfig(), epsilons=(10000, 20000, 30000, 40000),
                    accuracy_reqs=None, schemes=SCHEMES, exhaustive: bool = False) -> list[tuple]:
    """Run every scheme at every sweep point; returns ``(epsilon, A, {scheme: result})`` in sweep order."""
    accuracy_reqs = (ctx.params.A,) if accuracy_reqs is None else accuracy_reqs
    out = []
    for A in accuracy_reqs:
        for eps in epsilons:
            sub = ctx.with_params(ctx.params.replace(epsilon=float(eps), A=float(A)))
            out.append((eps, A, {name: run_scheme(name, sub, cfg, exhaustive) for name in schemes}))
    return out
