from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glauber_sofic.cayley import GroupSpec, build_ball, metric_tail
from glauber_sofic.homgraph import cycle_hom, delta_R, random_hom
from glauber_sofic.model import SpinModel, all_microstates, gibbs_finite
from glauber_sofic.state import (ChainGibbs, ExplicitMarginals, PatternDistribution, ProductMeasure,
                                 dbar_truncated, empirical_micro, empirical_product, empirical_state,
                                 good_vertex_empirical, lift, pattern_cost, product_dense, restrict,
                                 transport_cost, tv_distance)

Z = GroupSpec.integers()
F2 = GroupSpec.free(2)


def dense_oracle(hom, zeta, R, k):
    """``sum_x zeta(x) P_x``, accumulated microstate by microstate."""
    ball = build_ball(hom_spec(hom), R)
    acc: dict = {}
    for x, z in zip(all_microstates(k, hom.n), zeta):
        if z == 0:
            continue
        for pat, w in empirical_micro(hom, x, R, ball, k).as_dict().items():
            acc[pat] = acc.get(pat, 0.0) + z * w
    return acc


def hom_spec(hom):
    return Z if hom.r == 1 else F2


def random_dense(k, n, seed):
    z = np.random.default_rng(seed).random(k ** n)
    return z / z.sum()


def assert_same(P: PatternDistribution, Q: dict, tol=1e-12):
    got = P.as_dict()
    keys = set(got) | set(Q)
    assert max(abs(got.get(p, 0.0) - Q.get(p, 0.0)) for p in keys) <= tol


def test_lift_on_cycle():
    ball = build_ball(Z, 1)
    # ball order: e, s, s^-1
    assert lift(cycle_hom(3), [1, 0, 0], 0, 1, ball).tolist() == [1, 0, 0]
    assert lift(cycle_hom(3), [1, 0, 0], 2, 1, ball).tolist() == [0, 1, 0]


def test_three_cycle_root_marginal():
    P = empirical_micro(cycle_hom(3), [0, 1, 1], 0, build_ball(Z, 0), 2)
    assert P.as_dict() == pytest.approx({(0,): 1 / 3, (1,): 2 / 3})


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=2, max_value=12), st.integers(min_value=0, max_value=10_000),
       st.integers(min_value=1, max_value=3))
def test_restrict_commutes_with_empirical(n, seed, R):
    hom = random_hom(F2, n, seed)
    x = np.random.default_rng(seed).integers(2, size=n)
    big = empirical_micro(hom, x, R, build_ball(F2, R), 2)
    for Rp in range(R):
        small = empirical_micro(hom, x, Rp, build_ball(F2, Rp), 2)
        assert_same(restrict(big, Rp), small.as_dict())


@pytest.mark.parametrize("hom,R", [(cycle_hom(5), 2), (random_hom(F2, 4, 1), 1), (cycle_hom(2), 1)])
def test_empirical_state_matches_oracle(hom, R):
    zeta = random_dense(2, hom.n, 3)
    ball = build_ball(hom_spec(hom), R)
    assert_same(empirical_state(hom, zeta, R, ball, 2), dense_oracle(hom, zeta, R, 2))


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=2, max_value=7), st.integers(min_value=0, max_value=10_000))
def test_empirical_product_matches_dense(n, seed):
    hom = random_hom(F2, n, seed)
    rng = np.random.default_rng(seed)
    marg = rng.random((n, 2)) + 0.05
    marg /= marg.sum(axis=1, keepdims=True)
    ball = build_ball(F2, 1)
    P = empirical_product(hom, marg, ball)
    assert_same(P, empirical_state(hom, product_dense(marg), 1, ball, 2).as_dict(), 1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=3, max_value=9), st.integers(min_value=0, max_value=10_000))
def test_good_vertex_empirical_is_close(n, seed):
    hom = random_hom(F2, n, seed)
    ball = build_ball(F2, 1)
    d = delta_R(hom, 1, ball)
    zeta = random_dense(2, n, seed)
    if d == 1.0:
        with pytest.raises(ValueError):
            good_vertex_empirical(hom, zeta, 1, ball, 2)
        return
    P = empirical_state(hom, zeta, 1, ball, 2)
    G = good_vertex_empirical(hom, zeta, 1, ball, 2)
    assert tv_distance(P, G) <= 2 * d + 1e-12


def test_dbar_all_plus_vs_all_minus():
    ball = build_ball(Z, 1)
    plus = PatternDistribution.from_rows(ball, 2, [[1, 1, 1]])
    minus = PatternDistribution.from_rows(ball, 2, [[0, 0, 0]])
    lo, hi = dbar_truncated(plus, minus)
    assert lo == pytest.approx(5 / 3)
    assert hi == pytest.approx(2.0)
    assert hi - lo == pytest.approx(metric_tail(Z, 1))


def _random_dist(ball, k, m, seed):
    rng = np.random.default_rng(seed)
    rows = rng.integers(k, size=(m, ball.size))
    return PatternDistribution.from_rows(ball, k, rows, rng.random(m) + 0.01)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_transport_metric_properties(seed):
    ball = build_ball(Z, 2)
    P, Q, S = (_random_dist(ball, 2, 6, seed + i) for i in range(3))
    assert transport_cost(P, P) == pytest.approx(0.0, abs=1e-12)
    pq = transport_cost(P, Q)
    assert pq == pytest.approx(transport_cost(Q, P), abs=1e-9)
    assert pq <= transport_cost(P, S) + transport_cost(S, Q) + 1e-9
    # costs are at most the full ball weight, and bounded below by the TV distance at the root
    assert pq <= pattern_cost(ball, [[0] * ball.size], [[1] * ball.size])[0, 0] + 1e-12
    root_tv = tv_distance(restrict(P, 0), restrict(Q, 0))
    assert pq >= root_tv - 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_transport_matches_assignment_oracle(seed):
    """With equal uniform weights an optimal coupling is a permutation."""
    ball = build_ball(F2, 1)
    rng = np.random.default_rng(seed)
    m = 5
    A = rng.integers(2, size=(m, ball.size))
    B = rng.integers(2, size=(m, ball.size))
    C = pattern_cost(ball, A, B)
    best = min(sum(C[i, p[i]] for i in range(m)) / m for p in itertools.permutations(range(m)))
    P = PatternDistribution(ball, 2, *_atoms(A, m))
    Q = PatternDistribution(ball, 2, *_atoms(B, m))
    assert transport_cost(P, Q) == pytest.approx(best, abs=1e-9)


def _atoms(rows, m):
    # keep repeated rows as separate atoms so the assignment oracle applies verbatim
    return np.asarray(rows, dtype=np.int8), np.full(m, 1.0 / m)


def test_product_measure_and_restriction():
    ball = build_ball(Z, 2)
    P = ProductMeasure((0.2, 0.8)).marginal(ball)
    assert P.full_support()
    assert P.prob([1] * ball.size) == pytest.approx(0.8 ** ball.size)
    assert restrict(P, 0).as_dict() == pytest.approx({(0,): 0.2, (1,): 0.8})
    E = ExplicitMarginals(P)
    assert E.marginal(build_ball(Z, 1)).as_dict() == pytest.approx(restrict(P, 1).as_dict())


def test_chain_gibbs_consistency_and_large_cycle():
    model = SpinModel.ising(0.5, 0.1)
    mu = ChainGibbs(model)
    big = mu.marginal(build_ball(Z, 2))
    assert_same(restrict(big, 1), mu.marginal(build_ball(Z, 1)).as_dict(), 1e-12)
    n = 16
    hom = cycle_hom(n)
    xi, _ = gibbs_finite(model, hom)
    finite = empirical_state(hom, xi, 2, build_ball(Z, 2), 2)
    assert tv_distance(big, finite) < 1e-3


def test_pattern_distribution_round_trip_and_checks():
    ball = build_ball(Z, 1)
    P = _random_dist(ball, 3, 4, 0)
    P2 = PatternDistribution.from_dict(P.to_dict(), Z)
    assert_same(P2, P.as_dict())
    with pytest.raises(ValueError):
        PatternDistribution.from_dict(P.to_dict(), F2)
    with pytest.raises(ValueError):
        PatternDistribution(ball, 2, np.zeros((1, 3)), np.array([0.5]))
    with pytest.raises(ValueError):
        restrict(P, 2)
