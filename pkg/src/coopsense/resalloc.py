"""Inner resource-allocation solver for a fixed data selection and placement.

Given the full-resource times of every activated link (``C_link``) and every
demand-bearing node (``C_node``), choose bandwidth fractions beta and compute
fractions alpha minimising

    omega * sum(beta) + (1 - omega) * sum(alpha_n f_n) / F

subject to sum(beta) <= 1, C_link/beta + C_node[dst]/alpha[dst] <= T for
every link, and alpha >= C_node/T for nodes that only process local data.

At the optimum every link delay is tight, so beta is a function of the
receiving node's alpha. What remains is separable per node apart from the
bandwidth budget, which is handled with one Lagrange multiplier found by
bisection. The per-node minimiser has a closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .netmodel import (Assignment, SystemParams, computing_demands, link_loads, node_distances,
                       spectral_efficiency)

ALPHA_MARGIN = 1e-12


@dataclass(frozen=True)
class ActiveProblem:
    """One P2 instance.

    ``C_node`` has one entry per node (RSU last); ``links`` lists
    ``(src, dst, C_link)`` for every activated link.
    """

    C_node: np.ndarray
    links: tuple = ()
    f: np.ndarray = None
    omega: float = 0.5
    T: float = 0.02

    def __post_init__(self):
        C = np.asarray(self.C_node, dtype=float).reshape(-1)
        f = np.ones(C.size) if self.f is None else np.asarray(self.f, dtype=float).reshape(-1)
        if f.size != C.size or np.any(f <= 0):
            raise ValueError("f needs one positive entry per node")
        if np.any(C < 0) or not np.all(np.isfinite(C)):
            raise ValueError("C_node must be finite and non-negative")
        links = tuple((int(a), int(b), float(c)) for a, b, c in self.links)
        for a, b, c in links:
            if not (0 <= a < C.size and 0 <= b < C.size) or a == b:
                raise ValueError(f"bad link endpoints ({a}, {b})")
            if c < 0 or not math.isfinite(c):
                raise ValueError("C_link must be finite and non-negative")
        if not 0 < self.omega < 1 or self.T <= 0:
            raise ValueError("omega must lie in (0, 1) and T must be positive")
        object.__setattr__(self, "C_node", C)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "links", links)

    @property
    def n_nodes(self) -> int:
        return self.C_node.size

    @property
    def F(self) -> float:
        return float(self.f.sum())

    def receivers(self) -> list[int]:
        return sorted({b for _, b, _ in self.links})

    def local_only(self) -> list[int]:
        """Nodes with demand but no incoming link."""
        rx = set(self.receivers())
        return [n for n in range(self.n_nodes) if self.C_node[n] > 0 and n not in rx]

    def link_sums(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for _, b, c in self.links:
            out[b] = out.get(b, 0.0) + c
        return out


@dataclass(frozen=True)
class AllocationResult:
    tau: bool
    alpha: np.ndarray | None = None
    beta: np.ndarray | None = None  # one entry per link of the problem
    cost: float | None = None
    links: tuple = field(default=())

    def beta_matrix(self, n_cavs: int) -> np.ndarray:
        """Bandwidth fractions as the (N, N+1) matrix used by the cost and checks."""
        out = np.zeros((n_cavs, n_cavs + 1))
        if self.beta is not None:
            for (a, b, _), x in zip(self.links, self.beta):
                out[a, b] += x
        return out


def build_problem(assignment: Assignment, point_counts, scenario, params: SystemParams,
                  distances=None) -> ActiveProblem:
    """P2 constants for ``assignment``; ``distances`` overrides scenario geometry."""
    N = assignment.n_cavs
    f = params.node_frequencies(N)
    _, mu_n = computing_demands(assignment, point_counts, params)
    rho = link_loads(assignment, point_counts, params)
    d = node_distances(scenario) if distances is None else np.asarray(distances, dtype=float)
    links = []
    for a, b in zip(*np.nonzero(rho > 0)):
        rate = params.B * spectral_efficiency(params, d[a, b], a, b)
        links.append((a, b, rho[a, b] / rate))
    return ActiveProblem(mu_n / f, tuple(links), f, params.omega, params.T)


def feasibility(problem: ActiveProblem) -> bool:
    T, C = problem.T, problem.C_node
    if np.any(C > T):
        return False
    if not problem.links:
        return True
    for b in problem.receivers():
        if C[b] >= T:
            return False
    min_bw = sum(c / (T - C[b]) for _, b, c in problem.links)
    return min_bw <= 1.0


def _alpha_lower(C: float, T: float) -> float:
    return C / T + ALPHA_MARGIN


def _node_alpha(C: float, S: float, w: float, k: float, T: float) -> float:
    """argmin over alpha in (C/T, 1] of w*alpha + k*S/(T - C/alpha)."""
    alpha = (C + math.sqrt(k * S * C / w)) / T
    return min(max(alpha, _alpha_lower(C, T)), 1.0)


def _assemble(problem: ActiveProblem, alpha: np.ndarray) -> AllocationResult:
    T, C = problem.T, problem.C_node
    beta = np.array([c / (T - C[b] / alpha[b]) for _, b, c in problem.links])
    cost = problem.omega * beta.sum() + (1 - problem.omega) * float(alpha @ problem.f) / problem.F
    return AllocationResult(True, alpha, beta, float(cost), problem.links)


def solve_p2(problem: ActiveProblem, tol: float = 1e-15) -> AllocationResult:
    """Optimal (alpha, beta) or ``tau=False`` when the instance is infeasible."""
    if not feasibility(problem):
        return AllocationResult(False, links=problem.links)
    T, C, omega = problem.T, problem.C_node, problem.omega
    alpha = np.zeros(problem.n_nodes)
    for n in problem.local_only():
        alpha[n] = C[n] / T
    sums = problem.link_sums()
    if not sums:
        return _assemble(problem, alpha)
    w = {b: (1 - omega) * problem.f[b] / problem.F for b in sums}

    def bandwidth(lam):
        al = {b: _node_alpha(C[b], S, w[b], omega + lam, T) for b, S in sums.items()}
        return al, sum(S / (T - C[b] / al[b]) for b, S in sums.items())

    al, used = bandwidth(0.0)
    if used > 1.0:
        lo, hi = 0.0, 1.0
        al, used = bandwidth(hi)
        while used > 1.0:
            if all(a >= 1.0 for a in al.values()):
                break  # feasibility() guarantees used <= 1 here up to rounding
            lo, hi = hi, hi * 2.0
            al, used = bandwidth(hi)
        while hi - lo > tol * max(1.0, hi):
            mid = 0.5 * (lo + hi)
            _, used_mid = bandwidth(mid)
            if used_mid > 1.0:
                lo = mid
            else:
                hi = mid
        al, _ = bandwidth(hi)
    for b, a in al.items():
        alpha[b] = a
    return _assemble(problem, alpha)


def _golden_min(fun, a, b, iters=64):
    """Vectorised golden-section minimum of a convex ``fun`` on [a, b]."""
    g = (math.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        left = fc <= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        # one interior point carries over, only the other is evaluated
        x = np.where(left, b - g * (b - a), a + g * (b - a))
        fx = fun(x)
        c, d = np.where(left, x, d), np.where(left, c, x)
        fc, fd = np.where(left, fx, fd), np.where(left, fc, fx)
    return (a + b) / 2


def brute_force_oracle(problem: ActiveProblem, grid_steps: int = 2000, refine: int = 0,
                       max_points: int = 5_000_000, shrink: float = 0.5) -> AllocationResult:
    """Search over alpha of every receiving node with tight beta.

    All receivers but the last are gridded. For each grid point the last
    receiver's alpha is found by golden-section search between the bandwidth
    boundary and 1, so points on a binding bandwidth budget are reached
    exactly. ``refine`` extra rounds re-grid a window around the incumbent
    whose width is multiplied by ``shrink`` each round. Local-only nodes sit
    at C/T, which is optimal for them.
    """
    if grid_steps < 2:
        raise ValueError("grid_steps must be at least 2")
    if not 0 < shrink < 1:
        raise ValueError("shrink must lie in (0, 1)")
    T, C, omega = problem.T, problem.C_node, problem.omega
    if np.any(C > T):
        return AllocationResult(False, links=problem.links)
    base = np.zeros(problem.n_nodes)
    for n in problem.local_only():
        base[n] = C[n] / T
    rx = problem.receivers()
    if not rx:
        return _assemble(problem, base)
    if any(C[b] >= T for b in rx):
        return AllocationResult(False, links=problem.links)
    if grid_steps ** (len(rx) - 1) > max_points:
        raise ValueError(f"grid of {grid_steps}^{len(rx) - 1} points is too large")

    sums = problem.link_sums()
    S = np.array([sums[b] for b in rx])
    Cr = np.array([C[b] for b in rx])
    w = (1 - omega) * np.array([problem.f[b] for b in rx]) / problem.F
    floor = Cr / T + ALPHA_MARGIN
    lo, hi = floor[:-1].copy(), np.ones(len(rx) - 1)
    best_cost, best = math.inf, None
    for _ in range(refine + 1):
        # grid_steps points per axis in (lo, hi], never touching the open end
        axes = [lo[i] + (hi[i] - lo[i]) * np.arange(1, grid_steps + 1) / grid_steps
                for i in range(len(rx) - 1)]
        if axes:
            A = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(rx) - 1)
        else:
            A = np.zeros((1, 0))
        with np.errstate(divide="ignore", invalid="ignore"):
            slack = T - Cr[None, :-1] / A
            beta = np.where(slack > 0, S[None, :-1] / slack, np.inf)
            rest = beta.sum(axis=1)
            # the last receiver needs S / (T - C / alpha) <= 1 - rest
            room = 1.0 - rest
            t_need = np.where(room > 0, S[-1] / room, np.inf)
            bound = np.where(t_need < T, Cr[-1] / (T - t_need), np.inf)
        a_lo = np.maximum(bound, floor[-1])
        ok = a_lo <= 1.0
        a_lo = np.where(ok, a_lo, 1.0)

        def last_cost(a):
            return w[-1] * a + omega * S[-1] / (T - Cr[-1] / a)

        a_last = _golden_min(last_cost, a_lo, np.ones_like(a_lo))
        cost = omega * rest + (A * w[:-1]).sum(axis=1) + last_cost(a_last)
        cost = np.where(ok, cost, np.inf)
        i = int(np.argmin(cost))
        if np.isfinite(cost[i]) and cost[i] < best_cost:
            best_cost, best = cost[i], np.append(A[i], a_last[i])
        if best is None or not axes:
            break
        half = shrink * (hi - lo) / 2
        lo = np.maximum(best[:-1] - half, floor[:-1])
        hi = np.minimum(best[:-1] + half, 1.0)
    if best is None:
        return AllocationResult(False, links=problem.links)
    alpha = base.copy()
    for b, a in zip(rx, best):
        alpha[b] = a
    res = _assemble(problem, alpha)
    if res.beta.sum() > 1.0 + 1e-12:
        return AllocationResult(False, links=problem.links)
    return res
