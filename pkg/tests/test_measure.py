import math

import numpy as np
import pytest
from scipy import integrate, optimize

from o3cp1 import measure
from o3cp1.measure import (
    DEFAULT_QUAD,
    HALF_PI,
    STAGE_LADDER,
    MeasureDomainError,
    MollifierConfig,
    QuadControl,
    angular_pair_integral_bessel,
    constant_ratio,
    identity_rhs_smoothed,
    measure_lhs,
    measure_lhs_cartesian,
    mollified_delta,
    one_site_ratio_test,
    phi_roots,
    pushforward_uniformity,
    random_sphere_points,
    reduction_consistency,
    reduction_stage_value,
    richardson_extrapolate,
    verify_constant_c,
)


def test_mollifier_config_validation():
    MollifierConfig(eps=0.1, eps_ladder=(0.1, 0.05))
    with pytest.raises(MeasureDomainError):
        MollifierConfig(eps=-0.1)
    with pytest.raises(MeasureDomainError):
        MollifierConfig(eps_ladder=(0.05, 0.1))
    with pytest.raises(MeasureDomainError):
        MollifierConfig(eps_ladder=(0.1, 0.1))


def test_quad_control_rejects_under_resolution():
    with pytest.raises(MeasureDomainError):
        QuadControl(phi_steps_per_eps=3.0)


def test_on_sphere_ratio_is_half_pi():
    rng = np.random.default_rng(10)
    for p in random_sphere_points(rng, 3):
        for eps in (0.1, 0.05):
            assert constant_ratio(p, eps) == pytest.approx(HALF_PI, rel=1e-6)


def test_pole_point_ratio():
    n = np.array([0.0, 0.0, 1.0])
    assert constant_ratio(n, 0.05) == pytest.approx(HALF_PI, rel=1e-6)


def test_support_off_sphere():
    assert measure_lhs(np.array([0.0, 0.0, 2.0]), 0.025) < 1e-12
    assert measure_lhs(np.array([1.4, 0.0, 0.0]), 0.025) < 1e-12


def test_rotational_invariance():
    rng = np.random.default_rng(11)
    p = random_sphere_points(rng, 1)[0]
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    a, b, c, d = q
    rot = np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a - b * b + c * c - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a - b * b - c * c + d * d],
        ]
    )
    eps = 0.05
    assert measure_lhs(rot @ p, eps) == pytest.approx(measure_lhs(p, eps), rel=1e-7)


def test_angular_integral_bessel_matches_trapezoid():
    eps = 0.05
    nx, ny = 0.4, -0.55
    rho_xy = math.hypot(nx, ny)
    n_phi = 4000
    phi = np.linspace(0, 2 * np.pi, n_phi, endpoint=False)
    for rho in (0.55, 0.68, 0.8):
        direct = (
            mollified_delta(nx - rho * np.cos(phi), eps)
            * mollified_delta(ny + rho * np.sin(phi), eps)
        ).sum() * (2 * np.pi / n_phi) * 2 * np.pi
        closed = angular_pair_integral_bessel(rho, rho_xy, eps)
        assert direct == pytest.approx(closed, rel=1e-10)


def test_cartesian_cross_check():
    rng = np.random.default_rng(12)
    p = random_sphere_points(rng, 1)[0]
    eps = 0.15
    polar = measure_lhs(p, eps)
    cart = measure_lhs_cartesian(p, eps)
    assert cart == pytest.approx(polar, rel=1e-6)


def test_richardson_on_synthetic_data():
    eps = np.array([0.1, 0.05, 0.025])
    values = 1.7 + 3.2 * eps**2
    limit, residual, order = richardson_extrapolate(eps, values)
    assert limit == pytest.approx(1.7, abs=1e-12)
    assert residual < 1e-12
    assert order == pytest.approx(2.0, abs=1e-6)


def test_verify_constant_default_ladder():
    rng = np.random.default_rng(13)
    points = random_sphere_points(rng, 10)
    est = verify_constant_c(points)
    assert est.passes(rel_tol=0.01)
    assert est.constant == pytest.approx(HALF_PI, rel=1e-6)
    assert est.spread < 1e-8


def test_verify_constant_rotated_points():
    rng = np.random.default_rng(14)
    points = random_sphere_points(rng, 10)
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    a, b, c, d = q
    rot = np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a - b * b + c * c - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a - b * b - c * c + d * d],
        ]
    )
    est = verify_constant_c(points @ rot.T)
    assert est.constant == pytest.approx(HALF_PI, rel=1e-4)


def test_verify_constant_single_width_is_biased():
    rng = np.random.default_rng(15)
    points = random_sphere_points(rng, 10)
    est = verify_constant_c(points, MollifierConfig(eps=0.5, eps_ladder=(0.5,)))
    assert est.biased
    assert not est.passes()
    assert "biased" in est.notes
    # the coarse-width estimate itself misses the constant by more than 1%
    assert abs(est.constant - HALF_PI) > 0.01 * HALF_PI


def test_verify_constant_requires_points():
    rng = np.random.default_rng(16)
    with pytest.raises(MeasureDomainError):
        verify_constant_c(random_sphere_points(rng, 5))
    off = random_sphere_points(rng, 10) * 1.2
    with pytest.raises(MeasureDomainError):
        verify_constant_c(off)


# --- reduction stages ---------------------------------------------------------


def test_phi_roots_examples():
    phi0, fprime = phi_roots([0.0, 0.8, -0.6])
    assert phi0 == pytest.approx(np.pi / 2, abs=1e-15)
    assert fprime == pytest.approx(0.8, abs=1e-15)
    _, fprime = phi_roots([0.5, 0.5, 1 / math.sqrt(2)])
    assert fprime == pytest.approx(0.5, abs=1e-14)


def test_phi_roots_against_numeric_root_finder():
    rng = np.random.default_rng(17)
    for p in random_sphere_points(rng, 20, min_q=0.3):
        nx, _, nz = p
        rho_z = math.sqrt(1 - nz * nz)
        f = lambda phi: rho_z * math.cos(phi) - nx
        phi0, fprime = phi_roots(p)
        root = optimize.brentq(f, 0.0, math.pi, xtol=1e-14)
        assert abs(root - phi0) < 1e-10
        h = 1e-6
        fprime_fd = abs((f(root + h) - f(root - h)) / (2 * h))
        assert abs(fprime_fd - fprime) < 1e-8
        assert abs(fprime - math.sqrt(1 - p[0] ** 2 - p[2] ** 2)) < 1e-10


def test_phi_roots_domain_errors():
    with pytest.raises(MeasureDomainError):
        phi_roots([0.0, 0.0, 1.0])
    with pytest.raises(MeasureDomainError):
        phi_roots([0.9, 0.1, 0.5])  # |n_x| > sqrt(1 - n_z^2)


def test_stage_values_estimate_constant():
    rng = np.random.default_rng(18)
    p = random_sphere_points(rng, 1, min_q=0.55, max_abs_nz=0.8)[0]
    for stage in measure.STAGES:
        sv = reduction_stage_value(p, 0.025, stage)
        assert sv.constant == pytest.approx(HALF_PI, rel=2e-3)


def test_stage_consistency_pairwise():
    rng = np.random.default_rng(19)
    for p in random_sphere_points(rng, 2, min_q=0.55, max_abs_nz=0.8):
        sc = reduction_consistency(p)
        assert sc.passed
        assert sc.max_pair_gap <= sc.combined_tolerance
        for stage in measure.STAGES:
            assert sc.constants[stage] == pytest.approx(HALF_PI, rel=1e-3)


def test_raw_vs_after_R_theta_at_example_point():
    # n_y = 0 sits on the singular locus of the later stages, but the first
    # two stages are regular there and must agree after extrapolation
    n = np.array([0.6, 0.0, 0.8])
    extraps = []
    residuals = []
    for stage in ("raw-4d", "after-R-theta"):
        ladder = STAGE_LADDER
        consts = [measure_lhs(n, e) / measure.stage_reference(n, e, stage)
                  if stage == "raw-4d"
                  else measure._stage_after_R_theta(n, e, DEFAULT_QUAD)
                  / measure.stage_reference(n, e, stage)
                  for e in ladder]
        limit, residual, _ = richardson_extrapolate(ladder, consts)
        extraps.append(limit)
        residuals.append(residual)
    tol = 5.0 * sum(residuals) + 1e-7 * sum(abs(v) for v in extraps)
    assert abs(extraps[0] - extraps[1]) <= tol
    assert extraps[0] == pytest.approx(HALF_PI, rel=1e-4)


def test_stage_rejects_singular_locus():
    # on-sphere point with small |f'|: n_x^2 + n_z^2 close to 1
    n = np.array([0.6, 0.05, math.sqrt(1 - 0.36 - 0.0025)])
    with pytest.raises(MeasureDomainError):
        reduction_stage_value(n, 0.05, "after-phi")
    with pytest.raises(MeasureDomainError):
        reduction_consistency(n)


# --- one-site ratio -------------------------------------------------------------


def sinh_over_lam_oracle(lam):
    """Independent 1D integral (1/2) int_{-1}^{1} e^{-lam u} du."""
    val, _ = integrate.quad(lambda u: math.exp(-lam * u), -1.0, 1.0, epsabs=1e-14)
    return val / 2.0


@pytest.mark.parametrize("lam", [0.0, 1.0, 2.5])
def test_one_site_ratio(lam):
    res = one_site_ratio_test(lam)
    assert res.rel_diff < 1e-6
    expected = math.pi**2 * sinh_over_lam_oracle(lam)
    assert res.lhs == pytest.approx(expected, rel=1e-10)
    assert res.rhs == pytest.approx(expected, rel=1e-10)


def test_one_site_ratio_lambda_zero_is_pi_squared():
    res = one_site_ratio_test(0.0)
    assert res.lhs == pytest.approx(9.8696044, abs=1e-6)
    assert res.rhs == pytest.approx(math.pi**2, rel=1e-12)


def test_one_site_ratio_lambda_one_value():
    res = one_site_ratio_test(1.0)
    assert res.lhs == pytest.approx(math.pi**2 * 1.1752012, rel=1e-7)


# --- pushforward ----------------------------------------------------------------


def test_pushforward_uniformity_ks():
    res = pushforward_uniformity(np.random.default_rng(0))
    assert res.passed
    assert res.ks_nz < res.critical
    assert res.ks_azimuth < res.critical


def test_identity_reference_positive_and_peaked():
    n = np.array([0.0, 1.0, 0.0])
    assert identity_rhs_smoothed(n, 0.05) > identity_rhs_smoothed(1.2 * n, 0.05)
