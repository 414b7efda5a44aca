import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from annealtemp.model import IsingModel, SampleSet, as_spins, effective_fields, energy, flip_delta
from conftest import random_model


def brute_energy(model, x):
    total = 0.0
    for i, j, w in model.edges():
        total += w * x[i] * x[j]
    for i in range(model.n_spins):
        total += model.fields[i] * x[i]
    return total


def test_energy_two_spin_cases(pair_up):
    assert energy(pair_up, [1, 1]) == 1.0
    assert energy(pair_up, [1, -1]) == -1.0


def test_energy_c2_all_up_matches_resummation(c2_model):
    x = np.ones(32, dtype=int)
    assert energy(c2_model, x) == pytest.approx(brute_energy(c2_model, x), abs=1e-12)
    # frozen: sum of the seed-0 RAN1 weights on the ideal C2 graph
    assert energy(c2_model, x) == 12.0


def test_energy_batch_matches_rows():
    m = random_model(9, seed=3)
    X = np.where(np.random.default_rng(1).random((20, 9)) < 0.5, -1, 1)
    batch = energy(m, X)
    assert np.allclose(batch, [energy(m, r) for r in X], atol=1e-12)


def test_energy_dimension_mismatch(pair_up):
    with pytest.raises(ValueError):
        energy(pair_up, [1, 1, 1])
    with pytest.raises(ValueError):
        energy(pair_up, [1, 0])


def test_effective_fields_examples(pair_up, single_spin):
    assert np.array_equal(effective_fields(pair_up, [1, 1]), [1.0, 1.0])
    assert effective_fields(single_spin, [1])[0] == 1.0
    assert effective_fields(single_spin, [-1])[0] == 1.0


def test_effective_fields_flip_identity_c2(c2_model):
    x = np.where(np.random.default_rng(5).random(32) < 0.5, -1, 1)
    z = effective_fields(c2_model, x)
    e0 = energy(c2_model, x)
    for i in range(32):
        y = x.copy()
        y[i] = -y[i]
        assert energy(c2_model, y) - e0 == pytest.approx(-2 * x[i] * z[i], abs=1e-12)


def test_flip_delta_examples(pair_up, single_spin):
    assert flip_delta(pair_up, [1, 1], 0) == -2.0
    assert flip_delta(single_spin, [1], 0) == -2.0
    with pytest.raises(IndexError):
        flip_delta(pair_up, [1, 1], 2)


def test_flip_delta_full_energy_oracle(c2_model):
    rng = np.random.default_rng(0)
    for _ in range(5):
        x = np.where(rng.random(32) < 0.5, -1, 1)
        for i in range(32):
            y = x.copy()
            y[i] *= -1
            assert abs(flip_delta(c2_model, x, i) - (energy(c2_model, y) - energy(c2_model, x))) < 1e-12


def test_incremental_energy_million_flips():
    m = random_model(30, density=0.3, seed=11)
    rng = np.random.default_rng(2)
    x = np.where(rng.random(30) < 0.5, -1, 1).astype(np.int8)
    # vectorised bookkeeping of 10^6 single flips: accumulate the local deltas
    zeta = effective_fields(m, x)
    e = energy(m, x)
    A = m.coupling_matrix()
    for i in rng.integers(0, 30, size=10**6):
        e += -2.0 * x[i] * zeta[i]
        zeta -= 2.0 * x[i] * A[i]
        x[i] = -x[i]
    assert abs(e - energy(m, x)) < 1e-9


def test_invalid_models_rejected():
    with pytest.raises(ValueError):
        IsingModel.from_edges(2, [(0, 0, 1.0)])
    with pytest.raises(ValueError):
        IsingModel.from_edges(2, [(0, 1, 1.0), (1, 0, 2.0)])
    with pytest.raises(ValueError):
        IsingModel.from_edges(2, [(0, 1, np.inf)])
    with pytest.raises(ValueError):
        IsingModel.from_edges(2, [(0, 2, 1.0)])
    with pytest.raises(ValueError):
        as_spins([1, 0, -1])


def test_model_is_immutable(pair_up):
    with pytest.raises((AttributeError, TypeError)):
        pair_up.n_spins = 3
    with pytest.raises(ValueError):
        pair_up.weights[0] = 5.0


def test_model_roundtrip(tmp_path):
    m = random_model(7, seed=4)
    m.save(tmp_path / "m.json")
    back = IsingModel.load(tmp_path / "m.json")
    assert back.content_hash() == m.content_hash()
    assert back.metadata == m.metadata


def test_sampleset_plugin_and_distinct():
    s = SampleSet(np.array([[1, 1], [1, 1], [-1, 1]]), "x")
    uniq, freq = s.distinct()
    assert len(uniq) == 2
    assert sorted(freq.tolist()) == pytest.approx([1 / 3, 2 / 3])
    w = SampleSet(np.array([[1, 1], [-1, 1]]), "x", weights=[3.0, 1.0])
    assert w.probabilities() == pytest.approx([0.75, 0.25])


spins = st.integers(2, 10).flatmap(
    lambda n: st.tuples(st.just(n), st.integers(0, 10**6), st.lists(st.sampled_from([-1, 1]), min_size=n, max_size=n))
)


@given(spins)
def test_prop_flip_delta_is_local_field(args):
    n, seed, x = args
    m = random_model(n, seed=seed)
    z = effective_fields(m, x)
    for i in range(n):
        assert flip_delta(m, x, i) == pytest.approx(-2 * x[i] * z[i], abs=1e-12)


@given(spins)
def test_prop_zero_field_global_flip_symmetry(args):
    n, seed, x = args
    m = random_model(n, seed=seed, with_fields=False)
    assert energy(m, x) == pytest.approx(energy(m, -np.array(x)), abs=1e-12)


@given(spins, st.randoms(use_true_random=False))
def test_prop_energy_independent_of_edge_order(args, rnd):
    n, seed, x = args
    m = random_model(n, seed=seed)
    edges = m.edges()
    rnd.shuffle(edges)
    flipped = [(j, i, w) for i, j, w in edges]
    m2 = IsingModel.from_edges(n, flipped, m.fields)
    assert energy(m2, x) == pytest.approx(energy(m, x), abs=1e-12)


@given(spins, st.floats(0.1, 10))
def test_prop_scaling_scales_energy(args, c):
    n, seed, x = args
    m = random_model(n, seed=seed)
    assert energy(m.scaled(c), x) == pytest.approx(c * energy(m, x), rel=1e-12, abs=1e-12)
