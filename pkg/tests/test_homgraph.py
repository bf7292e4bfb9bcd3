from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glauber_sofic.cayley import GroupSpec, build_ball
from glauber_sofic.homgraph import (Delta, HomGraph, Orbit, PeriodicMeasure, apply, ball_isomorphic,
                                    cycle_hom, delta_R, fixed_point_fraction, good_vertices,
                                    identity_hom, multiplicity_select, orbit_copy_construction,
                                    random_hom, torus_hom, validate)


def schreier_oracle(hom: HomGraph, spec: GroupSpec, R: int) -> np.ndarray:
    """Good-vertex mask from vertex and induced-edge counts of the BFS ball."""
    if R == 0:
        return np.ones(hom.n, dtype=bool)
    ball = build_ball(spec, R)
    cayley_edges = sum(int(np.count_nonzero(ball.step[2 * i] >= 0)) for i in range(spec.r))
    inverse = [np.argsort(p) for p in hom.perms]
    good = np.zeros(hom.n, dtype=bool)
    for v in range(hom.n):
        seen, frontier = {v}, [v]
        for _ in range(R):
            nxt = []
            for u in frontier:
                for i in range(hom.r):
                    for w in (int(hom.perms[i][u]), int(inverse[i][u])):
                        if w not in seen:
                            seen.add(w)
                            nxt.append(w)
            frontier = nxt
        edges = sum(1 for u in seen for i in range(hom.r) if int(hom.perms[i][u]) in seen)
        good[v] = len(seen) == ball.size and edges == cayley_edges
    return good


def test_cycle_delta_values():
    Z = GroupSpec.integers()
    hom = cycle_hom(20)
    for R in range(10):
        assert delta_R(hom, R, build_ball(Z, R)) == 0.0
    assert delta_R(hom, 10, build_ball(Z, 10)) == 1.0
    res = Delta(hom, Z, 9)
    assert res.value == pytest.approx(9 * (2 / 3) ** 9, abs=1e-12)
    assert res.argmin_R == 9


def test_identity_free_group_delta():
    res = Delta(identity_hom(2), GroupSpec.free(2), 20)
    assert res.value == pytest.approx(6 + 9 * (2 / 3) ** 20, abs=1e-12)
    assert res.deltas[0] == 0.0 and all(d == 1.0 for d in res.deltas[1:])


def test_delta_refuses_radius_beyond_r_max():
    spec = GroupSpec.from_dict({"family": "free", "r": 1, "r_max": 3})
    with pytest.raises(ValueError, match="r_max"):
        Delta(cycle_hom(40), spec, 6)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=2, max_value=30), st.integers(min_value=0, max_value=2**31 - 1),
       st.integers(min_value=0, max_value=3))
def test_good_vertices_match_schreier_oracle(n, seed, R):
    spec = GroupSpec.free(2)
    hom = random_hom(spec, n, seed)
    np.testing.assert_array_equal(good_vertices(hom, build_ball(spec, R)), schreier_oracle(hom, spec, R))


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=2, max_value=5), st.integers(min_value=2, max_value=5),
       st.integers(min_value=0, max_value=3))
def test_torus_good_vertices_match_oracle(a, b, R):
    spec = GroupSpec.free_abelian(2)
    hom = torus_hom((a, b))
    assert validate(hom, spec)
    np.testing.assert_array_equal(good_vertices(hom, build_ball(spec, R)), schreier_oracle(hom, spec, R))


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=3, max_value=40), st.integers(min_value=0, max_value=1000))
def test_delta_R_is_nondecreasing(n, seed):
    spec = GroupSpec.free(2)
    hom = random_hom(spec, n, seed)
    ds = [delta_R(hom, R, build_ball(spec, R)) for R in range(5)]
    assert all(b >= a for a, b in zip(ds, ds[1:]))
    assert ds[0] == 0.0


def test_ball_isomorphic_single_vertex():
    Z = GroupSpec.integers()
    hom = cycle_hom(7)
    # the radius-3 ball covers all 7 vertices and picks up the wrap-around edge
    assert ball_isomorphic(hom, 3, 2, build_ball(Z, 2))
    assert not ball_isomorphic(hom, 3, 3, build_ball(Z, 3))


def test_loops_break_isomorphism_from_radius_one():
    hom = identity_hom(1, 5)
    Z = GroupSpec.integers()
    assert delta_R(hom, 0, build_ball(Z, 0)) == 0.0
    assert delta_R(hom, 1, build_ball(Z, 1)) == 1.0
    assert fixed_point_fraction(hom, (1,)) == 1.0
    assert fixed_point_fraction(cycle_hom(5), (1,)) == 0.0


def test_apply_rightmost_letter_first():
    hom = HomGraph(np.array([[1, 2, 0], [0, 2, 1]]))
    v = 0
    expect = hom.perms[0][np.argsort(hom.perms[1])[v]]   # s_1 (s_2^-1 v)
    assert apply(hom, (1, -2), v) == expect
    assert apply(hom, (), 2) == 2


def test_validate_reports_broken_relator():
    spec = GroupSpec.free_abelian(2)
    hom = HomGraph(np.array([[1, 2, 0], [0, 2, 1]]))
    check = validate(hom, spec)
    assert not check and check.relator == (1, 2, -1, -2)
    assert validate(torus_hom((3, 4)), spec)
    cyc = GroupSpec.free_product_cyclic((2, 3))
    assert validate(random_hom(cyc, 12, 0), cyc)


def test_homgraph_rejects_non_permutations():
    with pytest.raises(ValueError):
        HomGraph(np.array([[0, 0, 1]]))
    h = cycle_hom(4)
    assert HomGraph.from_dict(h.to_dict()).perms.tolist() == h.perms.tolist()


def test_orbit_copy_weights_and_select():
    orb_a = Orbit(cycle_hom(2), [0, 1])
    orb_b = Orbit(cycle_hom(1), [1])
    pm = PeriodicMeasure((orb_a, orb_b), [0.5, 0.5])
    assert pm.validate(GroupSpec.integers())
    hom, labels = orbit_copy_construction(pm, [1, 2])
    assert hom.n == 4 and labels.tolist() == [0, 1, 1, 1]
    m, err = multiplicity_select([0.5, 0.5], [2, 1], 8)
    assert err == 0.0 and m[0] * 2 == m[1] * 1
    with pytest.raises(ValueError):
        multiplicity_select([0.5, 0.5], [2, 1], 2)
