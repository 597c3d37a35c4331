import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from wirelesscbc.certificate import (Box, QuadraticCbc, SafetySpec, bound_ratio,
                                     check_inequality, compute_beta, compute_c,
                                     compute_eta, drift_operator,
                                     maximize_quadratic_over_box,
                                     minimize_quadratic_over_box, probability_bound,
                                     validate_cbc)
from wirelesscbc.exceptions import (CertificateError, DimensionError, SpecError,
                                    UncertifiedLevelWarning)
from wirelesscbc.model import DtSls, FeedbackGain, NetworkParams, build_augmented
from wirelesscbc.synthesis import SynthesisConfig, solve_generalized_lyapunov, synthesize


def _spec(U=0.5, T=10):
    return SafetySpec(Box.symmetric(2.0, 1), Box.symmetric(0.5, 1),
                      [Box([1.0], [2.0])], Box.symmetric(U, 1), T)


@pytest.fixture
def scalar_aug():
    system = DtSls([[0.9]], [[1.0]], [[0.04]], [[0.01]])
    return build_augmented(system, FeedbackGain([[-0.3]]), NetworkParams(0.9, 0.8))


# -- boxes and specs ----------------------------------------------------------------

def test_box_basics():
    a = Box([0.0, -1.0], [2.0, 1.0])
    b = Box([1.0, 0.0], [3.0, 2.0])
    assert a.intersects(b)
    assert a.intersection(b) == Box([1.0, 0.0], [2.0, 1.0])
    assert Box([0.5, 0.0], [1.0, 0.5]).issubset(a)
    assert a.product(b).dim == 4
    np.testing.assert_array_equal(a.contains([[1.0, 0.0], [2.5, 0.0]]), [True, False])
    assert Box.from_intervals(a.to_intervals()) == a


def test_box_rejects_inverted_bounds():
    with pytest.raises(ValueError):
        Box([1.0], [0.0])


def test_spec_validation():
    X, X0 = Box.symmetric(2.0, 1), Box.symmetric(0.5, 1)
    U = Box.symmetric(1.0, 1)
    with pytest.raises(SpecError, match="not contained"):
        SafetySpec(X, Box.symmetric(3.0, 1), [Box([1.0], [2.0])], U, 5)
    with pytest.raises(SpecError, match="overlaps"):
        SafetySpec(X, X0, [Box([0.0], [2.0])], U, 5)
    with pytest.raises(SpecError, match="does not intersect"):
        SafetySpec(X, X0, [Box([3.0], [4.0])], U, 5)
    with pytest.raises(SpecError, match="horizon"):
        SafetySpec(X, X0, [Box([1.0], [2.0])], U, 2.5)
    with pytest.raises(DimensionError):
        SafetySpec(X, Box.symmetric(0.5, 2), [Box([1.0], [2.0])], U, 5)


def test_beta_requires_unsafe_set():
    spec = SafetySpec(Box.symmetric(2.0, 1), Box.symmetric(0.5, 1), [],
                      Box.symmetric(1.0, 1), 5)
    with pytest.raises(SpecError, match="empty"):
        compute_beta(np.eye(4), spec)


# -- level sets -------------------------------------------------------------------

def test_level_sets_closed_form_scalar():
    # diagonal P over X0 x X x U x U = [-.5,.5] x [-2,2] x [-.5,.5]^2
    P = np.diag([1.0, 2.0, 3.0, 4.0])
    spec = _spec()
    assert compute_eta(P, spec) == pytest.approx(0.25 + 8.0 + 0.75 + 1.0, abs=1e-15)
    assert compute_beta(P, spec) == pytest.approx(1.0, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(dim=st.integers(1, 5), seed=st.integers(0, 2**31 - 1))
def test_box_extrema_match_brute_force(dim, seed):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(dim, dim))
    P = G @ G.T
    lo = rng.uniform(-2.0, 1.0, dim)
    box = Box(lo, lo + rng.uniform(0.1, 2.0, dim))
    verts = np.array(list(itertools.product(*zip(box.lower, box.upper))))
    vmax = max(v @ P @ v for v in verts)
    assert maximize_quadratic_over_box(P, box).value == pytest.approx(vmax, rel=1e-12)
    best = min(minimize(lambda z: z @ P @ z, x0, jac=lambda z: 2 * P @ z,
                        bounds=list(zip(box.lower, box.upper)), method="L-BFGS-B",
                        options={"ftol": 1e-15, "gtol": 1e-12}).fun
               for x0 in box.sample(rng, 4))
    res = minimize_quadratic_over_box(P, box)
    assert res.certified
    assert res.value <= best + 1e-9 * max(1.0, best)
    assert res.value == pytest.approx(res.argument @ P @ res.argument, rel=1e-9, abs=1e-12)
    assert box.contains(res.argument, tol=1e-12)


def test_singular_psd_min_on_face():
    # P = v v' with v = (1, -1): minimum 0 reached along the diagonal when feasible
    P = np.array([[1.0, -1.0], [-1.0, 1.0]])
    assert minimize_quadratic_over_box(P, Box([0.5, 0.0], [1.0, 2.0])).value == \
        pytest.approx(0.0, abs=1e-14)
    assert minimize_quadratic_over_box(P, Box([2.0, 0.0], [3.0, 1.0])).value == \
        pytest.approx(1.0, abs=1e-14)


def test_high_dimension_falls_back_and_warns():
    n = 4  # kappa = 2 (n + m) = 14 > 12
    spec = SafetySpec(Box.symmetric(2.0, n), Box.symmetric(0.5, n),
                      [Box(np.r_[1.0, -2.0 * np.ones(n - 1)], 2.0 * np.ones(n))],
                      Box.symmetric(1.0, 3), 5)
    P = np.eye(14)
    with pytest.warns(UncertifiedLevelWarning):
        value, certified = compute_beta(P, spec, return_certified=True)
    assert not certified
    assert value == pytest.approx(1.0, abs=1e-6)


def test_vertex_enumeration_limit():
    with pytest.raises(ValueError, match="limit"):
        maximize_quadratic_over_box(np.eye(27), Box.symmetric(1.0, 27))


# -- drift and c --------------------------------------------------------------------

def test_compute_c_scalar_enumeration(scalar_aug):
    P = np.diag([1.0, 2.0, 0.5, 0.25])
    sigma = scalar_aug.system.sigma_w
    mt = 0.9
    # E tr(E_k' P E_k Sigma) over theta ~ Bernoulli(mt): only the x_hat noise gain varies
    expected = 1.0 * 0.04 + 2.0 * (mt * 0.9 ** 2) * 0.01
    assert compute_c(scalar_aug, P) == pytest.approx(expected, rel=1e-14)
    assert compute_c(scalar_aug, P, sigma) == pytest.approx(expected, rel=1e-14)


def test_paper_variant_inflates_nothing_when_links_are_perfect():
    system = DtSls([[0.9]], [[1.0]])
    exact = build_augmented(system, [[-0.3]], NetworkParams(1.0, 1.0), "exact")
    paper = build_augmented(system, [[-0.3]], NetworkParams(1.0, 1.0), "paper")
    P = np.eye(4)
    np.testing.assert_allclose(drift_operator(exact, P), drift_operator(paper, P))


def test_lyapunov_solution_satisfies_inequality(scalar_aug):
    P = solve_generalized_lyapunov(scalar_aug)
    report = check_inequality(scalar_aug, P)
    assert report.satisfied
    assert report.max_eig == pytest.approx(-1.0, abs=1e-9)   # L(P) - P = -I


# -- bound and certificate ----------------------------------------------------------

def test_bound_ratio_reference_values():
    assert bound_ratio(0.0001306, 0.000166, 0.7233, 100) == pytest.approx(
        0.023130927692520394, rel=1e-12)
    with pytest.raises(ValueError):
        bound_ratio(0.1, 0.1, 0.0, 10)


def test_probability_bound_clamps_to_one():
    cbc = QuadraticCbc(np.eye(2), eta=0.5, beta=1.0, c=0.1)
    assert probability_bound(cbc, 3) == pytest.approx(0.8)
    assert probability_bound(cbc, 100) == 1.0


def test_scaling_leaves_bound_invariant():
    cbc = QuadraticCbc(np.eye(2), eta=0.2, beta=1.5, c=0.01)
    assert cbc.scaled(7.0).epsilon(10) == pytest.approx(cbc.epsilon(10), rel=1e-14)
    assert cbc([[1.0, 2.0]])[0] == pytest.approx(5.0)


def test_certificate_requires_separation():
    with pytest.raises(CertificateError):
        QuadraticCbc(np.eye(2), eta=1.0, beta=1.0, c=0.0)


def test_validate_cbc_success_and_failures(scalar_aug):
    spec = _spec(U=0.1, T=20)
    cfg = SynthesisConfig(refine_budget=200)
    result = synthesize(scalar_aug.system, scalar_aug.network, spec, cfg)
    aug = build_augmented(scalar_aug.system, result.gain, scalar_aug.network)
    P = result.cbc.P
    cbc = validate_cbc(aug, P, spec)
    assert cbc.beta > cbc.eta
    assert cbc.c == pytest.approx(compute_c(aug, P))
    with pytest.raises(CertificateError) as info:
        validate_cbc(scalar_aug, np.eye(4), spec)
    assert "drift inequality L(P) - P <= 0" in info.value.failures
    assert info.value.failures["beta > eta"] < 0


def test_validate_rejects_indefinite(scalar_aug):
    with pytest.raises(CertificateError, match="semidefinite"):
        validate_cbc(scalar_aug, np.diag([1.0, -1.0, 1.0, 1.0]), _spec())


def test_eta_rejects_indefinite():
    with pytest.raises(ValueError):
        compute_eta(np.diag([1.0, -1.0, 1.0, 1.0]), _spec())


def test_beta_warning_absent_when_exact():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        compute_beta(np.eye(4), _spec())


def test_motor_identity_candidate_fails_inequality():
    from wirelesscbc.motor import build_motor
    aug = build_augmented(build_motor(), [[0.0, 0.0], [0.0, 0.0]], NetworkParams(0.9, 0.9))
    assert not check_inequality(aug, np.eye(8)).satisfied


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_drift_operator_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    system = DtSls(rng.normal(size=(2, 2)), rng.normal(size=(2, 1)))
    aug = build_augmented(system, rng.normal(size=(1, 2)), NetworkParams(0.7, 0.4))
    G, H = rng.normal(size=(2, 6, 6))
    P, Q = G + G.T, H + H.T
    lhs = drift_operator(aug, a * P + b * Q)
    rhs = a * drift_operator(aug, P) + b * drift_operator(aug, Q)
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12 * max(1.0, np.abs(lhs).max()))


@settings(max_examples=50, deadline=None)
@given(eta=st.floats(0, 1), c=st.floats(0, 0.1), dc=st.floats(0, 0.1),
       beta=st.floats(0.01, 10), T=st.integers(0, 500), dT=st.integers(0, 500))
def test_bound_monotone_in_horizon_and_c(eta, c, dc, beta, T, dT):
    base = bound_ratio(eta, c, beta, T)
    assert bound_ratio(eta, c, beta, T + dT) >= base
    assert bound_ratio(eta, c + dc, beta, T) >= base


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), s=st.floats(1e-3, 1e3))
def test_level_sets_scale_with_P(seed, s):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(4, 4))
    P = G @ G.T
    spec = _spec()
    eta, beta = compute_eta(P, spec), compute_beta(P, spec)
    assert compute_eta(s * P, spec) == pytest.approx(s * eta, rel=1e-12)
    assert compute_beta(s * P, spec) == pytest.approx(s * beta, rel=1e-12, abs=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_beta_against_dense_grid(seed):
    # 41 points per axis on kappa = 4; the grid minimum exceeds the true one by at
    # most the first-order change plus curvature over half a grid step per axis
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(4, 4))
    P = G @ G.T
    lo = rng.uniform(-1.0, 0.5, 4)
    box = Box(lo, lo + rng.uniform(0.5, 2.0, 4))
    axes = [np.linspace(l, u, 41) for l, u in zip(box.lower, box.upper)]
    Z = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 4)
    grid_min = float(np.einsum("ij,jk,ik->i", Z, P, Z).min())
    res = minimize_quadratic_over_box(P, box)
    half = (box.upper - box.lower) / 80
    slack = np.abs(2 * P @ res.argument) @ half + np.linalg.eigvalsh(P)[-1] * half @ half
    assert res.value <= grid_min + 1e-12
    assert grid_min - res.value <= slack
