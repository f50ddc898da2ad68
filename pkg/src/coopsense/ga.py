"""Genetic algorithm over joint data selection and subtask placement.

An individual holds one gene per object: the tuple of CAV selection bits
and the index of the node that processes the subtask. Costs come from the
inner resource-allocation solver and are memoised per gene tuple.
"""
from __future__ import annotations

import itertools
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .context import Evaluation, TaskContext, evaluate
from .netmodel import Assignment, derive_chi
from .resalloc import AllocationResult

Gene = tuple  # (selection bits, placement node)


@dataclass(frozen=True)
class GaConfig:
    J: int = 30
    Gamma: int = 50
    p_C: float = 0.9
    p_M: float = 0.1
    seed: int = 0
    max_init_attempts: int = 10000
    two_draw: bool = False  # independent crossover / mutation draws
    workers: int = 1

    def __post_init__(self):
        if self.J < 2 or self.Gamma < 1:
            raise ValueError("GA needs J >= 2 and Gamma >= 1")
        if not (0 <= self.p_C <= 1 and 0 <= self.p_M <= 1):
            raise ValueError("p_C and p_M must lie in [0, 1]")
        if self.max_init_attempts < 1 or self.workers < 1:
            raise ValueError("max_init_attempts and workers must be positive")

    @classmethod
    def from_dict(cls, doc: dict) -> "GaConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown GA setting(s): {sorted(unknown)}")
        return cls(**doc)


@dataclass(frozen=True)
class Individual:
    genes: tuple
    cost: float

    def assignment(self, n_cavs: int) -> Assignment:
        return Assignment.from_genes(self.genes, n_cavs)


@dataclass
class GaResult:
    best: Individual
    allocation: AllocationResult
    history: list
    evaluations: int
    population: list = field(default_factory=list)  # final generation


class GaInitError(RuntimeError):
    def __init__(self, attempts: int, failures: Counter):
        self.failures = failures
        dominant = failures.most_common(1)[0][0] if failures else "none"
        self.dominant = dominant
        super().__init__(f"no feasible population after {attempts} attempts; "
                         f"dominant failing constraint: {dominant} ({dict(failures)})")


class InfeasibleInstance(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# gene space

def selection_choices(ctx: TaskContext, m: int) -> list[tuple]:
    """Every non-empty selection of CAVs holding data for object m."""
    holders = [n for n in range(ctx.N) if ctx.has_data(n, m)]
    out = []
    for r in range(1, len(holders) + 1):
        for combo in itertools.combinations(holders, r):
            out.append(tuple(int(n in combo) for n in range(ctx.N)))
    return out


def gene_choices(ctx: TaskContext, m: int, nodes=None) -> list[Gene]:
    nodes = range(ctx.N + 1) if nodes is None else nodes
    return [(bits, int(node)) for bits in selection_choices(ctx, m) for node in nodes]


def _check_space(ctx: TaskContext):
    empty = [m for m in range(ctx.M) if not any(ctx.has_data(n, m) for n in range(ctx.N))]
    if empty:
        raise InfeasibleInstance(f"object(s) {empty} are seen by no CAV")


def random_gene(ctx: TaskContext, m: int, rng, nodes=None) -> Gene:
    holders = [n for n in range(ctx.N) if ctx.has_data(n, m)]
    nodes = list(range(ctx.N + 1)) if nodes is None else list(nodes)
    while True:
        pick = rng.random(len(holders)) < 0.5
        if pick.any():
            break
    bits = [0] * ctx.N
    for n, p in zip(holders, pick):
        bits[n] = int(p)
    return tuple(bits), int(nodes[rng.integers(len(nodes))])


# ---------------------------------------------------------------------------
# evaluation with memoisation

class _Evaluator:
    def __init__(self, ctx: TaskContext, workers: int = 1):
        self.ctx = ctx
        self.memo: dict[tuple, Evaluation] = {}
        self.workers = workers

    def _run(self, genes: tuple) -> Evaluation:
        return evaluate(self.ctx, Assignment.from_genes(genes, self.ctx.N))

    def __call__(self, genes: tuple) -> Evaluation:
        if genes not in self.memo:
            self.memo[genes] = self._run(genes)
        return self.memo[genes]

    def many(self, batch: list[tuple]) -> list[Evaluation]:
        todo = list(dict.fromkeys(g for g in batch if g not in self.memo))
        if self.workers > 1 and len(todo) > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                results = list(pool.map(self._run, todo))
        else:
            results = [self._run(g) for g in todo]
        # results are stored in submission order, so parallelism never
        # changes what later generations see
        for g, r in zip(todo, results):
            self.memo[g] = r
        return [self.memo[g] for g in batch]


# ---------------------------------------------------------------------------
# operators

def selection_probabilities(costs) -> np.ndarray:
    """(1 - o_j / sum o) / (J - 1); uniform when all costs are equal."""
    costs = np.asarray(costs, dtype=float)
    J = costs.size
    if J < 2:
        raise ValueError("selection needs at least two individuals")
    total = costs.sum()
    if total <= 0 or np.all(costs == costs[0]):
        return np.full(J, 1.0 / J)
    return (1.0 - costs / total) / (J - 1)


def select_parents(population: list[Individual], rng) -> tuple[Individual, Individual]:
    p = selection_probabilities([ind.cost for ind in population])
    cdf = np.cumsum(p)
    i, j = np.minimum(np.searchsorted(cdf, rng.random(2) * cdf[-1], side="right"), len(p) - 1)
    return population[i], population[j]


def crossover(v1: Individual, v2: Individual, cut: int) -> tuple:
    if not 0 <= cut <= len(v1.genes):
        raise ValueError("cut must lie in [0, M]")
    return tuple(v1.genes[:cut]) + tuple(v2.genes[cut:])


def mutate(genes: tuple, position: int, new_gene: Gene) -> tuple:
    if not 0 <= position < len(genes):
        raise ValueError("mutation position out of range")
    out = list(genes)
    out[position] = new_gene
    return tuple(out)


# ---------------------------------------------------------------------------
# population

def _greedy_repair(ctx: TaskContext, m: int, bits: list) -> list:
    """Add CAV data in order of marginal predicted accuracy until A holds."""
    bits = list(bits)
    while ctx.estimated_accuracy(m, bits) < ctx.params.A:
        options = [n for n in range(ctx.N) if not bits[n] and ctx.has_data(n, m)]
        if not options:
            break
        gains = []
        for n in options:
            trial = bits.copy()
            trial[n] = 1
            gains.append(ctx.estimated_accuracy(m, trial))
        bits[options[int(np.argmax(gains))]] = 1
    return bits


def _repaired_individual(ctx: TaskContext, rng, nodes) -> tuple:
    nodes = list(range(ctx.N + 1)) if nodes is None else list(nodes)
    genes = []
    for m in range(ctx.M):
        bits, _ = random_gene(ctx, m, rng, nodes)
        bits = _greedy_repair(ctx, m, bits)
        # placements that keep every CAV on at most one link
        ok = []
        for node in nodes:
            trial = genes + [(tuple(bits), node)]
            chi = derive_chi(*_matrices(trial, ctx.N))
            if np.all(chi.sum(axis=1) + chi[:, :ctx.N].sum(axis=0) <= 1):
                ok.append(node)
        pool = ok or nodes
        genes.append((tuple(bits), int(pool[rng.integers(len(pool))])))
    return tuple(genes)


def _matrices(genes, N):
    a = Assignment.from_genes(genes, N)
    return a.s, a.e


def init_population(ctx: TaskContext, cfg: GaConfig, rng=None, nodes=None,
                    evaluator: _Evaluator | None = None) -> list[Individual]:
    _check_space(ctx)
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    evaluator = evaluator or _Evaluator(ctx, cfg.workers)
    population, failures = [], Counter()
    for _ in range(cfg.max_init_attempts):
        genes = _repaired_individual(ctx, rng, nodes)
        ev = evaluator(genes)
        if ev.feasible:
            population.append(Individual(genes, ev.cost))
            if len(population) == cfg.J:
                return population
        else:
            failures[ev.failure] += 1
    raise GaInitError(cfg.max_init_attempts, failures)


def evolve_generation(population: list[Individual], ctx: TaskContext, cfg: GaConfig, rng,
                      evaluator: _Evaluator | None = None, nodes=None) -> list[Individual]:
    evaluator = evaluator or _Evaluator(ctx, cfg.workers)
    M = ctx.M
    elite = min(population, key=lambda ind: ind.cost)
    # every random draw happens here, before any evaluation
    plans = []
    for _ in range(cfg.J - 1):
        v1, v2 = select_parents(population, rng)
        xi = rng.random()
        xi_m = rng.random() if cfg.two_draw else xi
        cut = int(rng.integers(M))
        pos = int(rng.integers(M))
        new_gene = random_gene(ctx, pos, rng, nodes)
        genes = v1.genes
        if xi <= cfg.p_C:
            genes = crossover(v1, v2, cut)
        if xi_m <= cfg.p_M:
            genes = mutate(genes, pos, new_gene)
        plans.append((v1, genes))
    results = evaluator.many([g for _, g in plans])
    nxt = [elite]
    for (v1, genes), ev in zip(plans, results):
        nxt.append(Individual(genes, ev.cost) if ev.feasible else v1)
    return nxt


def run(ctx: TaskContext, cfg: GaConfig = GaConfig(), nodes=None) -> GaResult:
    """Evolve for Gamma generations; returns the final elite and its allocation.

    ``nodes`` restricts placement (the centralised benchmark passes the RSU only).
    """
    rng = np.random.default_rng(cfg.seed)
    evaluator = _Evaluator(ctx, cfg.workers)
    population = init_population(ctx, cfg, rng, nodes, evaluator)
    history = [min(ind.cost for ind in population)]
    for _ in range(cfg.Gamma):
        population = evolve_generation(population, ctx, cfg, rng, evaluator, nodes)
        history.append(population[0].cost)
    best = min(population, key=lambda ind: ind.cost)
    return GaResult(best, evaluator(best.genes).allocation, history, len(evaluator.memo), population)


def exhaustive_solve(ctx: TaskContext, nodes=None, limit: int = 10 ** 6):
    """Optimal individual by enumeration, or ``(None, inf)`` if nothing is feasible.

    Genes failing the accuracy requirement are dropped per object before the
    product is formed; ``limit`` applies to the unfiltered space.
    """
    _check_space(ctx)
    choices = [gene_choices(ctx, m, nodes) for m in range(ctx.M)]
    size = math.prod(len(c) for c in choices)
    if size > limit:
        raise ValueError(f"search space of {size} combinations exceeds the limit of {limit}")
    passing = [[g for g in c if ctx.estimated_accuracy(m, g[0]) >= ctx.params.A]
               for m, c in enumerate(choices)]
    best, best_cost = None, math.inf
    for genes in itertools.product(*passing):
        ev = evaluate(ctx, Assignment.from_genes(genes, ctx.N))
        if ev.feasible and ev.cost < best_cost:
            best, best_cost = Individual(tuple(genes), ev.cost), ev.cost
    return best, best_cost
