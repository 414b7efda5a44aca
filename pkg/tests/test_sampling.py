import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import logsumexp

from annealtemp.estimators import empirical_correlations
from annealtemp.model import IsingModel, SampleSet, energy
from annealtemp.reference import all_states, boltzmann_table, exact_stats_enumeration
from annealtemp.sampling import (
    AnnealSchedule,
    conditional_flip_prob,
    default_coloring,
    gibbs_chain,
    gibbs_sweep,
    postprocess,
    propagate_sweep_exact,
    run_gibbs,
    run_parallel_tempering,
    run_sta,
    swap_probability,
    validate_coloring,
)
from annealtemp.topology import ChimeraSpec, build_chimera, gen_ran1
from conftest import random_model, ring


def kl(p, q):
    m = p > 0
    return float(np.sum(p[m] * (np.log(p[m]) - np.log(q[m]))))


def small_models():
    yield random_model(10, seed=1)
    yield random_model(12, density=0.3, seed=2)
    yield ring(8)
    yield random_model(11, seed=3, with_fields=False)
    yield gen_ran1(build_chimera(ChimeraSpec(1, 1, 3)), 5)


# -- conditional probability ---------------------------------------------------


def test_conditional_flip_prob_values():
    assert conditional_flip_prob(3.7, 0.0) == 0.5
    assert conditional_flip_prob(0.0, 9.0) == 0.5
    assert conditional_flip_prob(1.0, 1.0) == pytest.approx(np.exp(-1) / (2 * np.cosh(1)), abs=1e-15)
    assert conditional_flip_prob(1.0, 1.0) == pytest.approx(0.1192, abs=1e-4)


def test_conditional_flip_prob_saturates_without_warnings():
    with np.errstate(all="raise"):
        assert conditional_flip_prob(1.0, 700.0) == pytest.approx(0.0, abs=1e-300)
        assert conditional_flip_prob(-1.0, 800.0) == 1.0


@given(st.floats(-50, 50), st.floats(0, 20))
def test_prop_conditional_matches_closed_form(z, b):
    expected = np.exp(-b * z - logsumexp([-b * z, b * z]))
    assert conditional_flip_prob(z, b) == pytest.approx(expected, abs=1e-12)


# -- single sweeps ----------------------------------------------------------------


def test_single_spin_sweep_probability(single_spin):
    rng = np.random.default_rng(0)
    n = 40_000
    ups = sum(gibbs_sweep(single_spin, [1], 2.0, [[0]], rng)[0] == 1 for _ in range(n))
    p = np.exp(-2) / (2 * np.cosh(2))
    assert p == pytest.approx(0.0180, abs=1e-4)
    assert abs(ups / n - p) < 4 * np.sqrt(p * (1 - p) / n)


def test_invalid_coloring_rejected(pair_up):
    with pytest.raises(ValueError):
        gibbs_sweep(pair_up, [1, 1], 1.0, [[0, 1]], np.random.default_rng(0))
    with pytest.raises(ValueError):
        validate_coloring(pair_up, [[0]])


def test_kernel_matches_numpy_sweep(c2_graph, c2_model):
    col = default_coloring(c2_model, c2_graph)
    x = np.where(np.random.default_rng(3).random(32) < 0.5, -1, 1)
    ref = x.copy()
    rng = np.random.default_rng(99)
    for _ in range(3):
        ref = gibbs_sweep(c2_model, ref, 1.3, col, rng)
    out = postprocess(SampleSet(x[None, :], "c2"), c2_model, 1.3, 3, col, seed=99)
    assert np.array_equal(out.states[0], ref)


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0, 4.0])
def test_sweep_preserves_boltzmann(beta):
    for m in small_models():
        p = boltzmann_table(m, beta)
        q = propagate_sweep_exact(m, p, beta, default_coloring(m))
        assert 0.5 * np.abs(q - p).sum() <= 1e-12


def test_beta_zero_sweep_is_uniform_on_bipartite():
    g = build_chimera(ChimeraSpec(1, 1, 3))
    m = gen_ran1(g, 2)
    rng = np.random.default_rng(0)
    p = rng.dirichlet(np.full(2**6, 0.2))
    q = propagate_sweep_exact(m, p, 0.0, g.color_classes())
    assert 0.5 * np.abs(q - 1 / 64).sum() <= 1e-12


def test_propagation_matches_sampling():
    m = random_model(5, seed=8)
    col = default_coloring(m)
    start = np.zeros(32)
    start[7] = 1.0
    q = propagate_sweep_exact(m, start, 1.0, col)
    x0 = all_states(5)[7]
    s = postprocess(SampleSet(np.repeat(x0[None], 20000, axis=0), "m"), m, 1.0, 1, col, seed=4)
    idx = ((s.states > 0).astype(int) << np.arange(5)).sum(axis=1)
    freq = np.bincount(idx, minlength=32) / 20000
    assert np.max(np.abs(freq - q)) < 4 * np.sqrt(0.25 / 20000)


# -- STA ------------------------------------------------------------------------


def test_linear_schedule_endpoints():
    s = AnnealSchedule.linear(3.54, 2000)
    assert len(s) == 2000 and s.betas[0] == 0.0 and s.betas[-1] == 3.54
    assert np.allclose(np.diff(s.betas), 3.54 / 1999)
    with pytest.raises(ValueError):
        AnnealSchedule([])
    with pytest.raises(ValueError):
        AnnealSchedule([-1.0])


def test_sta_zero_schedule_is_uniform(c2_model):
    s = run_sta(c2_model, AnnealSchedule([0.0]), 20000, seed=1)
    m = s.states.mean(axis=0)
    assert np.max(np.abs(m)) < 4.5 / np.sqrt(20000)
    assert np.max(np.abs(empirical_correlations(s, c2_model))) < 4.5 / np.sqrt(20000)


def test_sta_deterministic_and_schedule_independent(c2_model):
    sch = AnnealSchedule.linear(2.0, 30)
    a = run_sta(c2_model, sch, 12, seed=5)
    b = run_sta(c2_model, sch, 12, seed=5)
    c = run_sta(c2_model, sch, 4, seed=5)
    assert np.array_equal(a.states, b.states)
    # sample k depends only on (seed, k)
    assert np.array_equal(a.states[:4], c.states)
    assert not np.array_equal(a.states, run_sta(c2_model, sch, 12, seed=6).states)
    assert a.meta["schedule"] == {"n_sweeps": 30, "beta_start": 0.0, "beta_end": 2.0}
    with pytest.raises(ValueError):
        run_sta(c2_model, sch, 0, seed=5)
    with pytest.raises(ValueError):
        run_sta(c2_model, sch, 3, seed=None)


def test_sta_defaults_near_equilibrium_c2(c2_graph, c2_model):
    # Default C2 anneal: close to the exact energy at beta_T but with residual
    # frozen excitations, which a ten-times longer anneal reduces.
    from annealtemp.reference import exact_stats_dp

    bt = 3.54
    exact = exact_stats_dp(c2_model, [bt], graph=c2_graph).mean_energy[0]
    short = energy(c2_model, run_sta(c2_model, AnnealSchedule.linear(bt, 2000), 2000, seed=11, graph=c2_graph).states)
    long_ = energy(c2_model, run_sta(c2_model, AnnealSchedule.linear(bt, 20000), 500, seed=11, graph=c2_graph).states)
    assert abs(short.mean() - exact) <= 0.01 * abs(exact)
    assert short.mean() >= exact - 3 * short.std() / np.sqrt(len(short))
    assert abs(long_.mean() - exact) < abs(short.mean() - exact)


def test_constant_schedule_converges():
    m = random_model(10, seed=21, with_fields=False)
    exact = exact_stats_enumeration(m, [1.0]).edge_correlations[0]
    err = {}
    for k in (1, 3, 30):
        err[k] = np.mean([
            np.mean((empirical_correlations(run_gibbs(m, 1.0, k, 3000, seed=s), m) - exact) ** 2) for s in range(5)
        ])
    assert err[1] > err[3] > err[30]


# -- post-processing ------------------------------------------------------------


def test_postprocess_identity_and_meta(c2_model):
    s = run_sta(c2_model, AnnealSchedule.linear(1.0, 5), 50, seed=0)
    before = s.states.copy()
    same = postprocess(s, c2_model, 2.0, 0, seed=1)
    assert np.array_equal(same.states, s.states)
    out = postprocess(s, c2_model, 2.0, 2, seed=1)
    assert np.array_equal(s.states, before)
    assert out.meta["postprocess"] == {"beta": 2.0, "n_sweeps": 2, "seed": 1}
    assert s.meta["postprocess"] is None
    with pytest.raises(ValueError):
        postprocess(SampleSet(np.ones((2, 5)), "x"), c2_model, 1.0)


def test_postprocess_beta_zero_uniform_sampled(c2_graph, c2_model):
    s = SampleSet(np.ones((10_000, 32), dtype=np.int8), "c2")
    out = postprocess(s, c2_model, 0.0, 1, c2_graph.color_classes(), seed=3)
    c = empirical_correlations(out, c2_model)
    assert 0.5e-4 <= np.mean(c**2) <= 2e-4


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0, 4.0])
def test_do_no_harm(beta):
    rng = np.random.default_rng(int(beta * 10))
    for m in small_models():
        b = boltzmann_table(m, beta)
        col = default_coloring(m)
        starts = [rng.dirichlet(np.full(len(b), a)) for a in (0.05, 1.0, 10.0)]
        starts.append(np.eye(len(b))[0])
        for p in starts:
            q = propagate_sweep_exact(m, p, beta, col)
            assert kl(q, b) <= kl(p, b) + 1e-12


# -- parallel tempering ------------------------------------------------------------


def test_swap_probability():
    assert swap_probability(1.0, 2.0, -3.0, -3.0) == 1.0
    # the colder replica holding the higher energy always swaps
    assert swap_probability(1.0, 2.0, -5.0, -3.0) == 1.0
    assert swap_probability(1.0, 2.0, -3.0, -5.0) == pytest.approx(np.exp(-2.0))


def test_single_rung_pt_is_gibbs_chain(c2_model):
    res = run_parallel_tempering(c2_model, [1.5], 1, 40, 0, seed=9)
    chain = gibbs_chain(c2_model, 1.5, 40, seed=9)
    assert np.array_equal(res.samples[0].states, chain)
    assert res.swap_attempts.size == 0


def test_pt_rejects_bad_ladders(c2_model):
    with pytest.raises(ValueError):
        run_parallel_tempering(c2_model, [1.0, 0.5], n_exchanges=10, burn_in=1)
    with pytest.raises(ValueError):
        run_parallel_tempering(c2_model, [0.5, 1.0], n_exchanges=10, burn_in=10)


def test_pt_diagnostics_shapes(c2_model):
    res = run_parallel_tempering(c2_model, [0.2, 0.6, 1.0], 2, 100, 20, seed=1, n_blocks=8)
    assert res.block_energy.shape == (8, 3)
    assert res.block_edge_products.shape == (8, 3, c2_model.n_edges)
    assert res.energy_trace.shape == (100, 3)
    assert np.all((res.swap_acceptance >= 0) & (res.swap_acceptance <= 1))
    assert len(res.samples[1]) == 80
    # the recorded energy trace agrees with the recorded states
    assert np.allclose(energy(c2_model, res.samples[2].states), res.energy_trace[20:, 2])
