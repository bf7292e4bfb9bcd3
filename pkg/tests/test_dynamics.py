from __future__ import annotations

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from glauber_sofic.cayley import GroupSpec, metric_tail
from glauber_sofic.homgraph import cycle_hom, identity_hom, random_hom
from glauber_sofic.model import SpinModel, all_microstates, gibbs_finite, microstate_index
from glauber_sofic.dynamics import (F0, Glauber, evolve_exact, free_energy, free_energy_derivative,
                                    sample_final_states, sample_product, sample_trajectory,
                                    stability_gap, tv_dense)
from glauber_sofic.state import product_dense


def random_state(N, seed, low=0.05):
    z = np.random.default_rng(seed).uniform(low, 1.0, N)
    return z / z.sum()


def random_model(k, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(k, k))
    return SpinModel((A + A.T) / 2, rng.normal(size=k))


def loop_free(hom) -> bool:
    return not any(np.any(p == np.arange(hom.n)) for p in hom.perms)


def loop_free_hom(n, seed):
    spec = GroupSpec.free(2)
    for s in range(seed, seed + 1000):
        hom = random_hom(spec, n, s)
        if loop_free(hom):
            return hom
    raise AssertionError("no loop-free action found")


def test_F0_shape():
    s = np.linspace(0, 5, 101)
    vals = F0(s)
    assert np.all(vals <= 1e-15)
    assert F0(1.0) == 0.0 and F0(0.0) == -1.0
    assert np.all(vals[s != 1.0] < 0)
    with pytest.raises(ValueError):
        F0(-0.1)


@pytest.mark.parametrize("hom", [cycle_hom(4), loop_free_hom(4, 0), identity_hom(1, 3)],
                         ids=["cycle", "free", "loops"])
def test_generator_structure(hom):
    model = random_model(2, 0)
    g = Glauber(model, hom)
    G = g.a_matrix()
    assert np.allclose(G.sum(axis=0), 0.0, atol=1e-12)
    off = G - np.diag(np.diag(G))
    assert np.all(off >= 0)
    xi, _ = gibbs_finite(model, hom)
    stationary = np.abs(G @ xi).max() < 1e-12
    # a loop enters the local energy once per slot but the total energy once,
    # so exp(-U) is stationary exactly when no site is fixed by a generator
    assert stationary == loop_free(hom)


def test_loop_slots_counted_per_direction():
    model = SpinModel(np.array([[0.0, 0.0], [0.0, 1.0]]), np.zeros(2))
    g = Glauber(model, identity_hom(1, 1))
    # single site with loops in both directions: c(1) = e^-2 / (1 + e^-2)
    assert np.exp(g.log_kernels(0)[0, 1]) == pytest.approx(np.exp(-2) / (1 + np.exp(-2)))


def test_generator_rates_oracle():
    """Rate x -> x^{v->a} is the heat-bath probability of ``a`` at ``v``."""
    model = SpinModel.ising(0.8, 0.3)
    hom = cycle_hom(3)
    G = Glauber(model, hom).a_matrix()
    X = all_microstates(2, 3)
    for i, x in enumerate(X):
        for v in range(3):
            left, right = x[(v - 1) % 3], x[(v + 1) % 3]
            E = np.array([model.h[a] + model.J[a, left] + model.J[a, right] for a in range(2)])
            c = np.exp(-E) / np.exp(-E).sum()
            y = x.copy()
            y[v] = 1 - x[v]
            assert G[microstate_index(y, 2), i] == pytest.approx(c[y[v]], rel=1e-12)


def test_integrators_match_matrix_exponential():
    model = random_model(2, 3)
    hom = random_hom(GroupSpec.free(2), 5, 0)
    g = Glauber(model, hom)
    z0 = random_state(32, 1)
    exact = scipy.linalg.expm(0.7 * g.a_matrix()) @ z0
    assert np.abs(g.evolve(z0, 0.7, 1e-3) - exact).max() < 1e-10
    assert np.abs(g.evolve_uniformized(z0, 0.7) - exact).max() < 1e-12
    assert evolve_exact(model, hom, z0, 0.0).tolist() == z0.tolist()


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=2, max_value=3),
       st.integers(min_value=2, max_value=4))
def test_derivative_matches_inner_product_formula(seed, k, n):
    """dF/dt = <G zeta, log zeta + U>, computed independently of the F0 form."""
    model = random_model(k, seed)
    hom = loop_free_hom(n, seed)
    g = Glauber(model, hom)
    z = random_state(k ** n, seed, low=1e-3)
    direct = float((g.a_matrix() @ z) @ (np.log(z) + g.U))
    assert free_energy_derivative(model, hom, z) == pytest.approx(direct, rel=1e-9, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_derivative_sign_and_zero_at_gibbs(seed):
    model = random_model(2, seed)
    hom = cycle_hom(4)
    g = Glauber(model, hom)
    xi, _ = gibbs_finite(model, hom)
    assert abs(g.free_energy_derivative(xi)) < 1e-10
    z = random_state(16, seed)
    if np.abs(z - xi).max() > 1e-6:
        assert g.free_energy_derivative(z) < 0


def test_free_energy_minimized_by_gibbs():
    model = SpinModel.ising(0.5)
    hom = cycle_hom(5)
    xi, log_Z = gibbs_finite(model, hom)
    assert free_energy(model, hom, xi) == pytest.approx(-log_Z, abs=1e-12)
    for seed in range(5):
        assert free_energy(model, hom, random_state(32, seed)) > -log_Z


def test_derivative_requires_full_support():
    model = SpinModel.ising(0.5)
    z = np.zeros(8)
    z[0] = 1.0
    with pytest.raises(ValueError):
        free_energy_derivative(model, cycle_hom(3), z)


def test_relaxation_to_gibbs():
    model = SpinModel.ising(0.5)
    hom = cycle_hom(4)
    xi, _ = gibbs_finite(model, hom)
    z0 = np.zeros(16)
    z0[0] = 1.0
    assert tv_dense(evolve_exact(model, hom, z0, 80.0, 1e-2), xi) < 1e-6


def test_trajectory_events_and_determinism():
    model = SpinModel.ising(0.5)
    hom = cycle_hom(6)
    x, ev = sample_trajectory(model, hom, np.zeros(6, dtype=int), 2.0, 11)
    x2, ev2 = sample_trajectory(model, hom, np.zeros(6, dtype=int), 2.0, 11)
    assert ev == ev2 and x.tolist() == x2.tolist()
    times = [e.time for e in ev]
    assert times == sorted(times) and all(0 <= t <= 2.0 for t in times)
    replay = np.zeros(6, dtype=int)
    for e in ev:
        replay[e.site] = e.new_letter
    assert replay.tolist() == x.tolist()


def test_trajectory_sampler_law():
    """Single-path sampler reproduces the exact time-t law on a 3-cycle."""
    model = SpinModel.ising(0.7, 0.2)
    hom = cycle_hom(3)
    x0 = np.array([0, 1, 0])
    z0 = np.zeros(8)
    z0[microstate_index(x0, 2)] = 1.0
    exact = Glauber(model, hom).evolve_uniformized(z0, 0.6)
    runs = 4000
    counts = np.zeros(8)
    for s in range(runs):
        x, _ = sample_trajectory(model, hom, x0, 0.6, s)
        counts[microstate_index(x, 2)] += 1
    freq = counts / runs
    se = np.sqrt(exact * (1 - exact) / runs)
    assert np.all(np.abs(freq - exact) <= 4 * se + 1e-12)


def test_replica_sampler_law():
    model = random_model(3, 5)
    hom = random_hom(GroupSpec.free(2), 3, 4)
    marg = np.array([[0.2, 0.3, 0.5], [0.6, 0.2, 0.2], [1 / 3, 1 / 3, 1 / 3]])
    runs = 40_000
    X0 = sample_product(marg, runs, 0)
    assert np.abs(np.mean(X0 == 2, axis=0) - marg[:, 2]).max() < 0.02
    X, counts = sample_final_states(model, hom, X0, 0.5, 1)
    exact = Glauber(model, hom).evolve_uniformized(product_dense(marg), 0.5)
    freq = np.bincount(microstate_index(X.astype(np.int64), 3), minlength=27) / runs
    se = np.sqrt(exact * (1 - exact) / runs)
    assert np.all(np.abs(freq - exact) <= 4.5 * se + 1e-12)
    assert abs(counts.mean() - 1.5) < 4 * np.sqrt(1.5 / runs)


@pytest.mark.parametrize("t", [0.1, 0.3])
def test_stability_inequality_dense(t):
    model = SpinModel.ising(0.5)
    Z = GroupSpec.integers()
    marg = np.array([0.3, 0.7])
    rep = stability_gap(cycle_hom(6), cycle_hom(9), model, np.tile(marg, (6, 1)), np.tile(marg, (9, 1)),
                        t, 1, Z, R_max=5)
    assert rep.method == "exact"
    # identical product marginals: the only initial distance is the truncation tail
    assert rep.initial_upper == pytest.approx(metric_tail(Z, 1), abs=1e-9)
    assert rep.passed and rep.measured_upper <= rep.bound
    d = rep.to_dict()
    assert d["passed"] and d["M"] == pytest.approx(6 * np.tanh(1.0))


def test_bad_inputs():
    model = SpinModel.ising(0.5)
    with pytest.raises(ValueError):
        evolve_exact(model, cycle_hom(3), np.full(8, 1 / 8), -1.0)
    with pytest.raises(ValueError):
        Glauber(model, cycle_hom(3)).evolve(np.ones(4), 1.0)
    with pytest.raises(ValueError):
        sample_trajectory(model, cycle_hom(3), [0, 0, 0], -1.0, 0)
