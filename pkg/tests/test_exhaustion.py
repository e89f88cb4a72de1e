import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from pshexhaust.calculus import certify_semi_anti_psh, estimate_lipschitz
from pshexhaust.domain import make_ball, make_full_space, make_polydisc, sample_sublevel, sublevel
from pshexhaust.exhaustion import (PIPELINES, DomainResolutionError, LipschitzExhaustion,
                                   PipelineState, SmoothExhaustion, certification_points,
                                   check_domination, check_sandwich, check_semi_anti,
                                   check_truncation, choose_c0, dimension_stability,
                                   lambda_value, lipschitz_bound, lipschitz_exhaustion,
                                   psh_exhaustion, sampled_inf_log_term, select_eps,
                                   semi_anti_psh_exhaustion, smooth_exhaustion)
from pshexhaust.fields import norm_sq_field

from conftest import ball_points

BALL = make_ball((0, 0), 1.0)


# ---------------------------------------------------------------- Lipschitz exhaustion

def test_lipschitz_exhaustion_examples(rng):
    f = lipschitz_exhaustion(BALL, 0.0)
    assert f([0, 0]) == 0.0
    z = np.array([0.6, 0.0])
    assert f(z) == pytest.approx(-math.log(0.4) + 0.36)
    assert f([1.2, 0]) == math.inf
    assert lipschitz_exhaustion(make_full_space(), 5.0)([0, 0]) == 1.0


def test_lipschitz_exhaustion_bounded_below(spec2):
    c0 = choose_c0(BALL, spec2)
    f = lipschitz_exhaustion(BALL, c0)
    pts = sample_sublevel(sublevel(f, 50.0, BALL), 10_000, spec2, stream=3)
    assert f.evaluate(pts).min() >= c0 + sampled_inf_log_term(BALL, spec2) - 1e-12
    assert f.evaluate(pts).min() >= 2.0 - 1e-12


def test_lipschitz_bound_dominates_quotients(rng):
    f = lipschitz_exhaustion(BALL, 0.0)
    S = ball_points(rng, 200, 2, 0.8)
    assert estimate_lipschitz(f, S) <= lipschitz_bound(BALL, S)


def test_choose_c0_full_space(spec2):
    assert choose_c0(make_full_space(), spec2) == 0.0


# ---------------------------------------------------------------- state and levels

def test_pipeline_state_round_trip():
    st = PipelineState("smooth_Psi", c0=1.5, truncation_K=6, eps_seq={1: {"eps": 0.1}},
                       lambda_table={1: 2.0}, extra={"x": np.float64(2.5)})
    again = PipelineState.from_dict(st.to_dict())
    assert again.to_dict() == st.to_dict()
    with pytest.raises(ValueError, match="unknown stage"):
        PipelineState("nonsense")


def test_lambda_value_degenerate_case(spec2):
    rho = lipschitz_exhaustion(BALL, 2.0)
    for t in (3.0, 4.0):
        value, count = lambda_value(rho, rho, BALL, t, spec2, 2)
        assert count > 0
        assert value == pytest.approx(t + 1, abs=1e-6)


def test_lambda_value_exceeds_level_and_is_monotone(spec2):
    rho = lipschitz_exhaustion(BALL, 2.0)
    Psi = 2 * rho
    values = [lambda_value(rho, Psi, BALL, t, spec2, 2)[0] for t in (3.0, 4.0, 5.0, 6.0)]
    assert all(v > t for v, t in zip(values, (3.0, 4.0, 5.0, 6.0)))
    assert all(np.diff(values) > 0)


def test_select_eps_reports_resolution_failure():
    f = norm_sq_field()
    centers = np.array([[0.5, 0.0]])
    dirs = np.eye(2, dtype=complex)
    # the ball around a center on the level set can never fit inside that same level
    with pytest.raises(DomainResolutionError, match="domain resolution exceeded"):
        select_eps(f, BALL, 0.5, [(centers, 0.25, "tight")], dirs, f, max_halvings=5)
    eps, halvings, _ = select_eps(f, BALL, 0.5, [(centers, 0.3, "loose")], dirs, f)
    assert 0 < eps <= 0.5 and halvings >= 1


# ---------------------------------------------------------------- smooth series

@pytest.fixture(scope="module")
def smooth_field(spec2, kit2):
    return smooth_exhaustion(make_polydisc((1.0, 1.0)), kit2, spec2, max_level=3,
                             mollifier_count=8)


def test_smooth_series_invariants(smooth_field, spec2):
    F = smooth_field
    P = certification_points(F, 400, spec2)
    assert P.shape[0] == 400
    for rep in (check_sandwich(F, P), check_domination(F, P), check_truncation(F, P)):
        assert rep.passed, rep.failures()
    eps = [v["eps"] for v in F.state.eps_seq.values()]
    assert all(0 < e < v["bound"] for e, v in zip(eps, F.state.eps_seq.values()))


def test_smooth_series_truncation_is_exact_not_approximate(smooth_field, spec2):
    F = smooth_field
    P = certification_points(F, 200, spec2)
    e = F.base.evaluate(P)
    Q = P[e <= 1]
    assert np.array_equal(F.partial(3).evaluate(Q), F.partial(len(F.terms)).evaluate(Q))


def test_smooth_series_rejects_full_space(spec2, kit2):
    with pytest.raises(ValueError, match="full space"):
        smooth_exhaustion(make_full_space(), kit2, spec2)


# ---------------------------------------------------------------- semi-anti-psh series

@pytest.fixture(scope="module")
def semi_anti_field(spec2, kit2):
    return semi_anti_psh_exhaustion(BALL, kit2, spec2, prepare_levels=3)


def test_semi_anti_positivity_and_domination(semi_anti_field, spec2):
    S = semi_anti_field
    P = sample_sublevel(sublevel(S.eta, 4.0, BALL), 150, spec2, stream=9)
    rep = check_semi_anti(S, P)
    assert rep.passed, rep.failures()


def test_semi_anti_finite_constant_stable_across_dimensions(semi_anti_field, spec2):
    S = semi_anti_field
    P = sample_sublevel(sublevel(S.eta, 3.0, BALL), 60, spec2, stream=10)
    res = certify_semi_anti_psh(S, BALL, P)
    assert res.passes and np.isfinite(res.C_estimate)
    assert dimension_stability(res).passed
    st = S.state()
    assert st.stage == "semi_anti_Psi" and set(st.t_seq) >= {1, 2, 3}
    # terms whose support misses every sample have no envelope time
    chosen = [t for t in st.t_seq.values() if t is not None]
    assert chosen and all(t > 0 for t in chosen)


# ---------------------------------------------------------------- psh series and estimators

def test_psh_exhaustion_full_space(spec2, kit2):
    F = psh_exhaustion(make_full_space(), kit2, spec2)
    assert F([1, 1j]) == 2.0
    assert F.state.stage == "psh_eta"


def test_estimators_follow_sklearn_conventions(spec2):
    est = LipschitzExhaustion(c0=1.0, spec=spec2)
    assert clone(est).get_params() == est.get_params()
    with pytest.raises(NotFittedError):
        est.predict([[0, 0]])
    est.fit(BALL)
    assert est.predict([[0, 0]])[0] == 1.0
    assert est.state_.c0 == 1.0
    assert set(PIPELINES) == {"lipschitz", "smooth", "semi_anti_psh", "psh"}
    assert SmoothExhaustion(max_level=2).get_params()["max_level"] == 2
