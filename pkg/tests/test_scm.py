"""Synthetic data generation: ER graphs, mechanisms, splits, CSV and SCM I/O."""

import numpy as np
import pytest

from dagsearch.graphs import DirectedGraph, is_acyclic
from dagsearch.scm import (
    Dataset,
    DataSplit,
    LinearMechanism,
    ScmSpec,
    ZeroMechanism,
    generate_dataset,
    load_csv,
    sample_er_graph,
    sample_mechanisms,
    save_csv,
    scm_from_json,
    scm_to_json,
    split_dataset,
)

CHAIN = DirectedGraph.from_edges(3, [(0, 1), (1, 2)])


# -- graph sampling -----------------------------------------------------------


def test_er_graphs_are_acyclic():
    rng = np.random.default_rng(0)
    assert all(is_acyclic(sample_er_graph(6, 7.0, rng)) for _ in range(200))


def test_er_expected_edge_count():
    rng = np.random.default_rng(1)
    counts = [sample_er_graph(5, 5.0, rng).n_edges for _ in range(2000)]
    # Binomial(10, 0.5): mean 5, se of the MC mean ~0.035
    assert abs(np.mean(counts) - 5.0) < 0.15


def test_er_bounds():
    rng = np.random.default_rng(2)
    with pytest.raises(ValueError, match="outside"):
        sample_er_graph(3, 4.0, rng)
    with pytest.raises(ValueError, match="at least 2"):
        sample_er_graph(1, 0.0, rng)


# -- mechanisms ----------------------------------------------------------------


def test_mechanism_shapes_follow_graph():
    scm = sample_mechanisms(CHAIN, seed=3)
    assert isinstance(scm.mechanisms[0], ZeroMechanism)
    assert scm.mechanisms[1].n_inputs == 1
    assert scm.mechanisms[2].n_inputs == 1


def test_linear_weight_floor():
    g = DirectedGraph.from_edges(5, [(i, 4) for i in range(4)])
    scm = sample_mechanisms(g, rng=np.random.default_rng(4), mechanism="linear", min_weight=0.6)
    assert all(abs(w) >= 0.6 for w in scm.mechanisms[4].weights)


def test_scm_spec_validation():
    with pytest.raises(ValueError, match="acyclic"):
        ScmSpec(
            DirectedGraph.from_edges(2, [(0, 1), (1, 0)]),
            (ZeroMechanism(), ZeroMechanism()),
            (1.0, 1.0),
            (0.5, 0.5),
        )
    with pytest.raises(ValueError, match="inputs"):
        ScmSpec(
            DirectedGraph.empty(2),
            (ZeroMechanism(), LinearMechanism((1.0,))),
            (1.0, 1.0),
            (0.5, 0.5),
        )
    with pytest.raises(ValueError, match="noise scales"):
        ScmSpec(DirectedGraph.empty(1), (ZeroMechanism(),), (1.0,), (0.0,))


def test_sample_mechanisms_deterministic():
    a = sample_mechanisms(CHAIN, mechanism="linear", seed=11)
    b = sample_mechanisms(CHAIN, mechanism="linear", seed=11)
    assert scm_to_json(a) == scm_to_json(b)


# -- data generation ---------------------------------------------------------------


def test_generate_deterministic():
    scm = sample_mechanisms(CHAIN, seed=5)
    x = generate_dataset(scm, 64, np.random.default_rng(6))
    y = generate_dataset(scm, 64, np.random.default_rng(6))
    np.testing.assert_array_equal(x.values, y.values)


def test_linear_residual_variance_matches_noise():
    # Regressing x_j on its true parents must leave variance sigma_j^2; the
    # mechanism is linear so OLS recovers the (scaled) weights exactly in the
    # large-sample limit.
    scm = sample_mechanisms(CHAIN, rng=np.random.default_rng(7), mechanism="linear")
    data = generate_dataset(scm, 10_000, np.random.default_rng(8)).values
    for node in (1, 2):
        parent = data[:, node - 1 : node]
        x = np.hstack([parent, np.ones((len(parent), 1))])
        beta, *_ = np.linalg.lstsq(x, data[:, node], rcond=None)
        resid = data[:, node] - x @ beta
        assert resid.var() == pytest.approx(scm.noise_scales[node] ** 2, rel=0.10)


def test_root_column_is_pure_noise():
    scm = sample_mechanisms(CHAIN, rng=np.random.default_rng(9), mechanism="linear")
    data = generate_dataset(scm, 20_000, np.random.default_rng(10)).values
    assert data[:, 0].std() == pytest.approx(scm.noise_scales[0], rel=0.05)


def test_standardization_bounds_column_scale():
    # A long chain without standardization compounds variance; with it, every
    # column should stay within a small constant factor of its noise scale.
    g = DirectedGraph.from_edges(6, [(i, i + 1) for i in range(5)])
    scm = sample_mechanisms(g, rng=np.random.default_rng(11), mechanism="mlp")
    data = generate_dataset(scm, 4000, np.random.default_rng(12)).values
    assert data.std(axis=0).max() < 5.0


def test_dataset_rejects_non_finite():
    with pytest.raises(ValueError, match="non-finite"):
        Dataset(np.array([[1.0, np.nan]]))


# -- splitting -----------------------------------------------------------------------


def test_split_partition():
    data = Dataset(np.arange(20.0).reshape(10, 2))
    split = split_dataset(data, 0.8, np.random.default_rng(13))
    assert split.train.n == 8 and split.est.n == 2
    merged = np.vstack([split.train.values, split.est.values])
    assert sorted(map(tuple, merged)) == sorted(map(tuple, data.values))


def test_split_never_empties_a_part():
    data = Dataset(np.arange(4.0).reshape(2, 2))
    split = split_dataset(data, 0.99, np.random.default_rng(14))
    assert split.train.n == 1 and split.est.n == 1


def test_split_fraction_validation():
    data = Dataset(np.arange(8.0).reshape(4, 2))
    with pytest.raises(ValueError, match="fraction"):
        split_dataset(data, 1.0, np.random.default_rng(15))
    with pytest.raises(ValueError, match="at least 2"):
        split_dataset(Dataset(np.zeros((1, 2))), 0.5, np.random.default_rng(16))


def test_data_split_validation():
    a = Dataset(np.zeros((2, 2)))
    with pytest.raises(ValueError, match="column count"):
        DataSplit(a, Dataset(np.zeros((2, 3))), 0.5)


# -- CSV -------------------------------------------------------------------------------


def test_csv_round_trip_bit_exact(tmp_path):
    data = generate_dataset(sample_mechanisms(CHAIN, seed=17), 16, np.random.default_rng(18))
    path = tmp_path / "data.csv"
    save_csv(data, path)
    back = load_csv(path)
    np.testing.assert_array_equal(back.values, data.values)


def test_csv_header_preserved(tmp_path):
    path = tmp_path / "named.csv"
    save_csv(Dataset(np.ones((2, 2)), ("a", "b")), path)
    assert load_csv(path).column_names == ("a", "b")


def test_csv_diagnostics(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("1.0,2.0\n3.0,x\n")
    with pytest.raises(ValueError, match=r"row 2, column 2"):
        load_csv(bad)
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("1.0,2.0\n3.0\n")
    with pytest.raises(ValueError, match="expected 2"):
        load_csv(ragged)
    empty = tmp_path / "empty.csv"
    empty.write_text("\n")
    with pytest.raises(ValueError, match="empty"):
        load_csv(empty)


# -- SCM serialization ---------------------------------------------------------------


@pytest.mark.parametrize("mechanism", ["linear", "mlp"])
def test_scm_json_round_trip(mechanism):
    scm = sample_mechanisms(CHAIN, rng=np.random.default_rng(19), mechanism=mechanism, seed=19)
    back = scm_from_json(scm_to_json(scm))
    assert back.graph == scm.graph
    assert back.noise_scales == scm.noise_scales
    assert back.output_scales == scm.output_scales
    x = generate_dataset(scm, 32, np.random.default_rng(20))
    y = generate_dataset(back, 32, np.random.default_rng(20))
    np.testing.assert_array_equal(x.values, y.values)
