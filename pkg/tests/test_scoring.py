"""Decomposable penalized scoring and its per-variable memo."""

import math

import numpy as np
import pytest

from dagsearch.estimators import ConjugateGaussian, NigPrior
from dagsearch.graphs import DirectedGraph, ParentSet, enumerate_all_dags
from dagsearch.scm import DataSplit, Dataset
from dagsearch.scoring import (
    DEFAULT_PENALTY_RATE,
    GraphScorer,
    ScoreCache,
    ScoreConfig,
    best_score,
    edge_list_string,
    graph_from_edge_list_string,
    read_score_dump,
    resolve_penalty,
    score_all_dags,
    variable_loglik,
    write_score_dump,
)


def make_scorer(d=3, n=60, seed=0, **cfg_kwargs):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(n, d))
    data[:, -1] += 0.7 * data[:, 0]
    split = DataSplit(Dataset(data[: int(0.8 * n)]), Dataset(data[int(0.8 * n):]), 0.8)
    return GraphScorer(split, ScoreConfig(**cfg_kwargs))


def test_config_validation():
    with pytest.raises(ValueError):
        ScoreConfig(split_fraction=1.0)
    with pytest.raises(ValueError):
        ScoreConfig(penalty=-0.1)


def test_resolve_penalty_default_tracks_log_estimation_size():
    assert resolve_penalty(None, 400) == pytest.approx(DEFAULT_PENALTY_RATE * math.log(400))
    assert resolve_penalty(2.5, 400) == 2.5
    assert resolve_penalty(None, 0) == 0.0  # degenerate size clamps instead of -inf


def test_penalized_score_is_loglik_minus_penalty_times_edges():
    scorer = make_scorer(penalty=1.25)
    g = DirectedGraph.from_edges(3, [(0, 2), (1, 2)])
    s = scorer.score(g)
    assert s.n_edges == 2
    assert s.penalized == pytest.approx(s.loglik_sum - 2 * 1.25)


def test_empty_graph_has_no_penalty():
    scorer = make_scorer(penalty=5.0)
    s = scorer.score(DirectedGraph.empty(3))
    assert s.penalized == s.loglik_sum


def test_scores_decompose_over_children():
    scorer = make_scorer()
    graphs = [
        DirectedGraph.from_edges(3, [(0, 1), (1, 2)]),
        DirectedGraph.from_edges(3, [(0, 2), (1, 2)]),
        DirectedGraph.from_edges(3, [(0, 1), (0, 2), (1, 2)]),
    ]
    for g in graphs:
        total = sum(
            variable_loglik(scorer.split, ParentSet(c, g.parents_of(c)), scorer.estimator)
            for c in range(3)
        )
        assert scorer.loglik_sum(g) == pytest.approx(total, rel=1e-12)
    # distinct (child, parent mask) pairs each occupy exactly one cache cell
    cells = {(c, g.parent_mask(c)) for g in graphs for c in range(3)}
    assert len(scorer.cache) == len(cells)


def test_cache_hits_and_misses_account_for_every_lookup():
    scorer = make_scorer()
    g = DirectedGraph.from_edges(3, [(0, 1), (1, 2)])
    scorer.score(g)
    assert scorer.cache.misses == 3 and scorer.cache.hits == 0
    scorer.score(g)
    assert scorer.cache.misses == 3 and scorer.cache.hits == 3
    # shares child-0-empty and child-2-parent-1 cells; only child-1-empty is new
    other = DirectedGraph.from_edges(3, [(1, 2)])
    scorer.score(other)
    assert scorer.cache.hits == 5
    assert scorer.cache.misses == 4


def test_full_enumeration_fits_at_most_d_times_2_to_d_minus_1():
    for d in (2, 3):
        scorer = make_scorer(d=d)
        scores = score_all_dags(scorer, d)
        assert len(scores) == {2: 3, 3: 25}[d]
        assert scorer.cache.misses <= d * 2 ** (d - 1)
        assert len(scorer.cache) == scorer.cache.misses


def test_d5_enumeration_touches_exactly_80_cells():
    scorer = make_scorer(d=5, n=40)
    score_all_dags(scorer, 5)
    assert scorer.cache.misses == 5 * 2**4


def test_scoring_is_deterministic_for_conjugate_backend():
    a = make_scorer(seed=3).score(DirectedGraph.from_edges(3, [(0, 2)]))
    b = make_scorer(seed=3).score(DirectedGraph.from_edges(3, [(0, 2)]))
    assert a.loglik_sum == b.loglik_sum and a.penalized == b.penalized


def test_huge_penalty_makes_the_empty_graph_win():
    scorer = make_scorer(penalty=1e6)
    best = best_score(score_all_dags(scorer, 3))
    assert best.graph.n_edges == 0


def test_zero_penalty_never_prefers_fewer_edges_than_default():
    # with no penalty, adding the true edge always helps on this data
    dense = make_scorer(penalty=0.0)
    scores = score_all_dags(dense, 3)
    best = best_score(scores)
    true_edge = DirectedGraph.from_edges(3, [(0, 2)])
    assert best.penalized >= dense.score(true_edge).penalized


def test_best_score_on_empty_sequence_raises():
    with pytest.raises(ValueError):
        best_score([])


def test_prior_flows_through_config():
    sharp = make_scorer(estimator=ConjugateGaussian(NigPrior(precision=100.0)))
    flat = make_scorer(estimator=ConjugateGaussian(NigPrior(precision=1.0)))
    g = DirectedGraph.from_edges(3, [(0, 2)])
    assert sharp.score(g).loglik_sum != flat.score(g).loglik_sum


def test_from_dataset_splits_with_config_fraction():
    rng = np.random.default_rng(9)
    data = Dataset(rng.normal(size=(50, 3)))
    scorer = GraphScorer.from_dataset(data, ScoreConfig(split_fraction=0.6))
    assert scorer.split.train.n == 30 and scorer.split.est.n == 20


def test_edge_list_string_round_trip():
    for g in enumerate_all_dags(3):
        text = edge_list_string(g)
        assert graph_from_edge_list_string(text, 3) == g
    assert edge_list_string(DirectedGraph.empty(3)) == ""


def test_score_dump_round_trip(tmp_path):
    scorer = make_scorer()
    scores = score_all_dags(scorer, 3)
    path = tmp_path / "scores.csv"
    write_score_dump(path, scores)
    back = read_score_dump(path, 3)
    assert [s.graph for s in back] == [s.graph for s in scores]
    assert [s.loglik_sum for s in back] == [s.loglik_sum for s in scores]
    assert [s.penalized for s in back] == [s.penalized for s in scores]


def test_score_dump_rejects_foreign_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("graph,n_edges\n")
    with pytest.raises(ValueError, match="header"):
        read_score_dump(path, 3)


def test_shared_cache_survives_across_scorers():
    cache = ScoreCache()
    base = make_scorer()
    first = GraphScorer(base.split, base.config, cache=cache)
    second = GraphScorer(base.split, base.config, cache=cache)
    g = DirectedGraph.from_edges(3, [(0, 1)])
    first.score(g)
    misses_after_first = cache.misses
    second.score(g)
    assert cache.misses == misses_after_first
