import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pshexhaust.domain import (CATALOG, ThinSublevelError, exit_radii, make_ball, make_domain,
                               make_full_space, make_halfspace_intersection, make_hartogs_wedge,
                               make_hollowed_ball, make_polydisc, projection_distance,
                               sample_sublevel, sublevel, uniform_inclusion_margin)
from pshexhaust.fields import ScalarField, norm_sq_field

from conftest import ball_points, random_points

DOMAINS = {
    "ball": make_ball((0, 0), 1.0),
    "polydisc": make_polydisc((1.0, 0.7)),
    "halfspace": make_halfspace_intersection([[1, 0], [0, 1j], [-1, -1]], [0.5, 0.8, 1.0]),
    "wedge": make_hartogs_wedge(1.0),
    "hollowed": make_hollowed_ball(1.0, 0.4),
}


def test_ball_examples():
    B = make_ball((0, 0), 1.0)
    assert B.boundary_distance([0, 0]) == 1.0
    assert B.boundary_distance([0.5, 0]) == 0.5
    with pytest.raises(ValueError, match="not in"):
        B.boundary_distance([1, 0])


def test_invalid_parameters():
    for bad in (lambda: make_ball((0,), 0.0), lambda: make_polydisc((1.0, -1.0)),
                lambda: make_hartogs_wedge(-2), lambda: make_hollowed_ball(1.0, 1.5),
                lambda: make_halfspace_intersection([[0, 0]], [1.0])):
        with pytest.raises(ValueError):
            bad()


def test_catalog_examples():
    assert make_polydisc((1, 1)).boundary_distance([0.5, 0]) == 0.5
    assert make_hartogs_wedge(1.0).boundary_distance([0, 0.5]) == pytest.approx(1 / (2 * np.sqrt(2)))
    assert make_full_space().boundary_distance([3, 4]) == np.inf
    assert {"ball", "polydisc", "hartogs_wedge", "full_space"} <= set(CATALOG)
    assert make_domain("ball", radius=2.0).boundary_distance([0]) == 2.0
    with pytest.raises(ValueError, match="unknown domain"):
        make_domain("torus")


def test_wedge_distance_against_dense_boundary_oracle(rng):
    # the boundary piece |w1| = |w2| <= 1 sampled densely, plus the rim |w2| = 1
    s = np.linspace(0, 1, 801)
    ph = np.exp(1j * np.linspace(0, 2 * np.pi, 64, endpoint=False))
    z = np.array([0.0, 0.5])
    # phases of z are zero, so the nearest boundary points keep real coordinates
    cone = np.stack([s, s], axis=1)
    d_cone = np.min(np.linalg.norm(cone - z, axis=1))
    rim = np.stack([np.zeros_like(ph), ph], axis=1)
    d_rim = np.min(np.abs(rim - z).max(axis=1))
    assert min(d_cone, d_rim) == pytest.approx(1 / (2 * np.sqrt(2)), abs=1e-6)
    assert projection_distance(make_hartogs_wedge(1.0), z) == pytest.approx(1 / (2 * np.sqrt(2)),
                                                                             abs=1e-6)


@pytest.mark.parametrize("name", ["ball", "polydisc"])
def test_projection_oracle_matches_closed_form(name, rng):
    V = DOMAINS[name]
    Z = ball_points(rng, 8, 2, 0.6)
    for z in Z:
        assert projection_distance(V, z) == pytest.approx(V.boundary_distance(z), abs=1e-6)


@pytest.mark.parametrize("name", sorted(DOMAINS))
def test_distance_is_one_lipschitz(name, rng):
    V = DOMAINS[name]
    Z = random_points(rng, 1000, 2, 0.5)
    W = Z + random_points(rng, 1000, 2, 0.05)
    dz, dw = V.inner(Z), V.inner(W)
    both = (dz > 0) & (dw > 0)
    assert both.sum() > 100
    assert np.all(np.abs(dz - dw)[both] <= np.linalg.norm(Z - W, axis=1)[both])


@pytest.mark.parametrize("name", sorted(DOMAINS))
def test_distance_ball_lies_inside(name, rng):
    V = DOMAINS[name]
    Z = random_points(rng, 300, 2, 0.4)
    Z = Z[V.inner(Z) > 0][:50]
    d = V.inner(Z)
    U = random_points(rng, Z.shape[0], 2)
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    assert np.all(V.inner(Z + 0.999 * d[:, None] * U) > 0)


def test_exit_radii_on_ball():
    B = make_ball((0, 0), 1.0)
    D = np.array([[1, 0], [0, 1j], [np.sqrt(0.5), np.sqrt(0.5)]], dtype=complex)
    assert np.allclose(exit_radii(B, np.zeros(2), D), 1.0, atol=1e-9)


def test_uniform_inclusion_margin(spec2, rng):
    B = make_ball((0, 0), 1.0)
    assert uniform_inclusion_margin([[0, 0]], B) == 1.0
    S = ball_points(rng, 100, 2, 0.5)
    assert uniform_inclusion_margin(S, B) >= 0.5
    with pytest.raises(ValueError, match="outside"):
        uniform_inclusion_margin([[0, 0], [1, 0]], B)


def test_sample_sublevel_examples(spec2):
    B = make_ball((0, 0), 1.0)
    f = norm_sq_field()
    S = sample_sublevel(sublevel(f, 0.25, B), 200, spec2)
    assert S.shape == (200, 2) and np.all(np.linalg.norm(S, axis=1) <= 0.5)
    with pytest.raises(ThinSublevelError):
        sample_sublevel(sublevel(f, -5.0, B), 10, spec2, max_proposals=20_000)
    small = sample_sublevel(sublevel(f, 0.1, B), 100, spec2)
    assert np.all(sublevel(f, 0.3, B).contains(small))


def test_sample_sublevel_is_deterministic(spec2):
    B = make_ball((0, 0), 1.0)
    a = sample_sublevel(sublevel(norm_sq_field(), 0.5, B), 50, spec2, stream=3)
    b = sample_sublevel(sublevel(norm_sq_field(), 0.5, B), 50, spec2, stream=3)
    assert np.array_equal(a, b)


def test_bounds_only_decide_membership(spec2):
    B = make_ball((0, 0), 1.0)
    f = norm_sq_field()
    calls = []

    def counted(Z):
        calls.append(Z.shape[0])
        return np.sum(np.abs(Z) ** 2, axis=1)

    g = ScalarField(counted)
    lower = ScalarField(lambda Z: np.sum(np.abs(Z) ** 2, axis=1) - 0.01)
    upper = ScalarField(lambda Z: np.sum(np.abs(Z) ** 2, axis=1) + 0.01)
    a = sample_sublevel(sublevel(f, 0.3, B), 100, spec2)
    b = sample_sublevel(sublevel(g, 0.3, B), 100, spec2, lower_bound=[lower], upper_bound=upper)
    assert np.array_equal(a, b)
    # only proposals in the undecided band 0.29 < |z|^2 <= 0.31 reach the exact field
    assert 0 < sum(calls) < 0.1 * 4096


@settings(max_examples=30, deadline=None)
@given(s=st.floats(0.05, 0.5), t=st.floats(0.05, 0.5))
def test_sublevel_monotone(s, t):
    s, t = min(s, t), max(s, t)
    B = make_ball((0, 0), 1.0)
    f = norm_sq_field()
    Z = np.array([[0.1, 0.2j], [0.5, 0.1], [0.3 + 0.3j, 0.0]])
    assert np.all(sublevel(f, t, B).contains(Z) >= sublevel(f, s, B).contains(Z))
