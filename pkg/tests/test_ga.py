import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import stub_context
from coopsense import ga
from coopsense.context import evaluate
from coopsense.ga import (GaConfig, GaInitError, Individual, crossover, evolve_generation, exhaustive_solve,
                          gene_choices, init_population, mutate, random_gene, select_parents,
                          selection_probabilities)
from coopsense.netmodel import Assignment, validate_topology

TWO_CAVS = [(0, 0), (0, 7)]
THREE_CAVS = [(0, 0), (0, 7), (30, 3.5)]
TWO_OBJECTS = [("car", 15, 3.5), ("pedestrian", 20, 10.5)]


@pytest.fixture(scope="module")
def small_ctx():
    return stub_context(THREE_CAVS, TWO_OBJECTS, A=0.3, scale=20.0)


def test_selection_probabilities_examples():
    assert selection_probabilities([0.2, 0.6]) == pytest.approx([0.75, 0.25])
    assert selection_probabilities([0.3] * 4) == pytest.approx([0.25] * 4)
    assert selection_probabilities([0, 0, 0]) == pytest.approx([1 / 3] * 3)
    with pytest.raises(ValueError):
        selection_probabilities([0.5])


@given(st.lists(st.floats(1e-4, 1.0), min_size=2, max_size=40))
@settings(max_examples=100, deadline=None)
def test_selection_is_a_distribution_favouring_low_cost(costs):
    p = selection_probabilities(costs)
    assert p.sum() == pytest.approx(1.0)
    assert np.all(p >= 0)
    order = np.argsort(costs, kind="stable")
    assert np.all(np.diff(p[order]) <= 1e-12)


def test_parent_draw_frequencies():
    pop = [Individual(("a",), 0.2), Individual(("b",), 0.6)]
    rng = np.random.default_rng(0)
    hits = Counter()
    for _ in range(500_000):  # two draws per call
        for parent in select_parents(pop, rng):
            hits[parent.genes] += 1
    total = sum(hits.values())
    assert total == 1_000_000
    assert abs(hits[("a",)] / total - 0.75) <= 0.01
    assert abs(hits[("b",)] / total - 0.25) <= 0.01


def test_crossover_examples():
    v1 = Individual(("a0", "a1", "a2"), 1.0)
    v2 = Individual(("b0", "b1", "b2"), 2.0)
    assert crossover(v1, v2, 0) == v2.genes
    assert crossover(v1, v2, 3) == v1.genes
    assert crossover(v1, v2, 1) == ("a0", "b1", "b2")
    with pytest.raises(ValueError):
        crossover(v1, v2, 4)


def test_mutate_examples():
    genes = ("a", "b", "c")
    assert mutate(genes, 1, "b") == genes
    out = mutate(genes, 2, "z")
    assert sum(x != y for x, y in zip(genes, out)) == 1 and out[2] == "z"
    with pytest.raises(ValueError):
        mutate(genes, 3, "z")


def test_random_genes_cover_every_choice():
    ctx = stub_context(TWO_CAVS, [("car", 15, 3.5)])
    valid = set(gene_choices(ctx, 0))
    assert len(valid) == 3 * 3  # (2^2 - 1) selections x 3 nodes
    rng = np.random.default_rng(0)
    seen = Counter(random_gene(ctx, 0, rng) for _ in range(10_000))
    assert set(seen) == valid
    assert min(seen.values()) > 0


def test_config_validation():
    with pytest.raises(ValueError):
        GaConfig(J=1)
    with pytest.raises(ValueError):
        GaConfig(p_C=1.5)
    with pytest.raises(ValueError):
        GaConfig.from_dict({"population": 10})
    assert GaConfig.from_dict({"J": 5}).J == 5


def test_init_population_is_feasible_and_seeded(small_ctx):
    cfg = GaConfig(J=12, seed=4)
    pop = init_population(small_ctx, cfg)
    assert len(pop) == 12
    for ind in pop:
        a = ind.assignment(small_ctx.N)
        assert validate_topology(a) == []
        assert all(acc >= small_ctx.params.A for acc in small_ctx.accuracies(a))
        assert small_ctx.allocate(a).tau
    again = init_population(small_ctx, cfg)
    assert [i.genes for i in again] == [i.genes for i in pop]


def test_init_failure_reports_accuracy():
    # the estimator never exceeds 0.9, so A=0.99 is out of reach
    ctx = stub_context(TWO_CAVS, [("car", 15, 3.5)], A=0.99, ceiling=0.9)
    with pytest.raises(GaInitError) as info:
        init_population(ctx, GaConfig(J=4, max_init_attempts=50))
    assert info.value.dominant == "accuracy"
    assert "accuracy" in str(info.value)
    assert exhaustive_solve(ctx) == (None, math.inf)


def test_no_variation_copies_first_parents(small_ctx):
    cfg = GaConfig(J=10, p_C=0.0, p_M=0.0, seed=2)
    rng = np.random.default_rng(2)
    pop = init_population(small_ctx, cfg, rng)
    nxt = evolve_generation(pop, small_ctx, cfg, rng)
    before = {i.genes for i in pop}
    assert nxt[0] == min(pop, key=lambda i: i.cost)
    assert all(i.genes in before for i in nxt)


def test_infeasible_offspring_fall_back_to_parents(small_ctx):
    cfg = GaConfig(J=10, seed=3)
    rng = np.random.default_rng(3)
    pop = init_population(small_ctx, cfg, rng)

    class Nothing(ga._Evaluator):
        def _run(self, genes):
            return ga.Evaluation(False, None, None, "resource")

    nxt = evolve_generation(pop, small_ctx, cfg, rng, Nothing(small_ctx))
    assert set(nxt) <= set(pop)


def test_run_elitism_and_determinism(small_ctx):
    cfg = GaConfig(J=10, Gamma=15, seed=7)
    a = ga.run(small_ctx, cfg)
    assert len(a.history) == cfg.Gamma + 1
    assert np.all(np.diff(a.history) <= 0)
    assert a.best.cost == a.history[-1] == a.allocation.cost
    b = ga.run(small_ctx, cfg)
    c = ga.run(small_ctx, GaConfig(J=10, Gamma=15, seed=7, workers=4))
    assert a.history == b.history == c.history
    assert a.best == b.best == c.best
    one = ga.run(small_ctx, GaConfig(J=10, Gamma=1, seed=7))
    assert len(one.history) == 2 and one.history[1] <= one.history[0]


def test_two_draw_variant_runs(small_ctx):
    res = ga.run(small_ctx, GaConfig(J=8, Gamma=5, seed=1, two_draw=True))
    assert np.all(np.diff(res.history) <= 0)


def test_exhaustive_small_spaces():
    ctx = stub_context(TWO_CAVS, [("car", 15, 3.5)], A=0.3, scale=20.0)
    assert len(gene_choices(ctx, 0)) <= 9
    best, cost = exhaustive_solve(ctx)
    assert best is not None and cost == best.cost
    for g in gene_choices(ctx, 0):
        ev = evaluate(ctx, Assignment.from_genes((g,), ctx.N))
        if ev.feasible:
            assert cost <= ev.cost
    with pytest.raises(ValueError, match="limit"):
        exhaustive_solve(ctx, limit=5)


def test_exhaustive_two_objects_is_minimal(small_ctx):
    best, cost = exhaustive_solve(small_ctx)
    choices = [gene_choices(small_ctx, m) for m in range(small_ctx.M)]
    for g0 in choices[0]:
        for g1 in choices[1]:
            ev = evaluate(small_ctx, Assignment.from_genes((g0, g1), small_ctx.N))
            if ev.feasible:
                assert cost <= ev.cost + 1e-15


def test_ga_reaches_exhaustive_on_tiny_instance():
    ctx = stub_context(TWO_CAVS, [("car", 15, 3.5)], A=0.3, scale=20.0)
    _, opt = exhaustive_solve(ctx)
    res = ga.run(ctx, GaConfig(J=30, Gamma=50))
    assert abs(res.best.cost - opt) <= 1e-6


def test_unseen_object_is_infeasible():
    ctx = stub_context(TWO_CAVS, [("car", 15, 3.5), ("car", 140, 0)])
    with pytest.raises(ga.InfeasibleInstance):
        exhaustive_solve(ctx)
