import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gnplate.material import (
    ModelType,
    NonFinite,
    TypeMismatch,
    flux_energy_pencil,
    internal_energy_coercivity,
    internal_energy_density_matrix,
    require_valid,
    validate,
    xi_estimate,
    zeta,
)


def failure_names(report):
    return [c.name for c in report.failures()]
from tests.conftest import reference_material

coef = st.floats(min_value=0.05, max_value=5.0, allow_nan=False)


def test_reference_material_is_valid_both_types():
    for model in ("TypeII", "TypeIII"):
        report = validate(reference_material(model))
        assert report.passed, report.failures()


def test_validation_margins_are_positive(mat3):
    report = validate(mat3)
    for name in ("mu_positive", "conduction_pd", "rate_pd", "delta_positive"):
        assert report.margin(name) > 0.0


def test_type2_requires_exactly_zero_rates():
    bad = reference_material("TypeII", k2=1e-14)
    report = validate(bad)
    assert not report.passed
    assert "type2_rates_zero" in failure_names(report)


def test_negative_shear_modulus_fails():
    report = validate(reference_material(mu=-1.0))
    assert "mu_positive" in failure_names(report)


def test_negative_lambda_allowed_when_sum_positive():
    report = validate(reference_material(lam=-0.5, mu=1.0))
    assert report.passed


def test_capacity_determinant_check():
    # kappa^2 >= c*r breaks the thermal/diffusive capacity block
    report = validate(reference_material(kappa=1.1, c=1.0, r=1.0))
    assert "delta_positive" in failure_names(report)


def test_nan_coefficient_raises():
    with pytest.raises(NonFinite):
        validate(reference_material(k1=math.nan))


def test_require_valid_raises_on_failure():
    with pytest.raises(ValueError):
        require_valid(reference_material(mu=-1.0))


def test_derived_quantities(mat3):
    h = mat3.half_thickness
    assert mat3.inertia == pytest.approx((2.0 / 3.0) * h**3)
    assert mat3.delta == pytest.approx(mat3.c * mat3.r - mat3.kappa**2)


def test_numeric_values_excludes_model_type(mat3):
    values = mat3.numeric_values()
    assert "model_type" not in values
    assert values["lam"] == 1.0


def test_model_type_from_string():
    assert ModelType.from_string("TypeII") is ModelType.TYPE_II
    assert ModelType.from_string("TypeIII") is ModelType.TYPE_III
    with pytest.raises(ValueError):
        ModelType.from_string("TypeIV")


def test_internal_energy_matrix_is_symmetric_psd(mat3):
    M = internal_energy_density_matrix(mat3)
    np.testing.assert_allclose(M, M.T, atol=0.0)
    assert np.min(np.linalg.eigvalsh(M)) > 0.0


def test_coercivity_constant_bounds_quadratic_form(mat3):
    c0 = internal_energy_coercivity(mat3)
    M = internal_energy_density_matrix(mat3)
    rng = np.random.default_rng(7)
    for _ in range(50):
        x = rng.standard_normal(M.shape[0])
        assert x @ M @ x >= c0 * (x @ x) - 1e-12


def test_coercivity_refuses_invalid_material():
    # validation runs first, so the indefinite case never reaches the solver
    with pytest.raises(ValueError):
        internal_energy_coercivity(reference_material(mu=-1.0))


def test_zeta_reference_value(mat3):
    # max(k2,h2)/lambda_min of [[c,kappa],[kappa,r]]: 0.5/0.8 for this set
    assert zeta(mat3) == pytest.approx(0.625, rel=1e-12)


def test_zeta_rejects_type2(mat2):
    with pytest.raises(TypeMismatch):
        zeta(mat2)


def test_xi_reference_value(mat3):
    assert xi_estimate(mat3) == pytest.approx(1.7392232564625534, rel=1e-9)


def test_xi_bounds_flux_by_energy(mat3):
    # the estimate is the best constant in |x^T B x| <= xi * x^T A x
    B, A = flux_energy_pencil(mat3)
    xi = xi_estimate(mat3)
    rng = np.random.default_rng(11)
    for _ in range(200):
        x = rng.standard_normal(A.shape[0])
        assert abs(x @ B @ x) <= xi * (x @ A @ x) * (1.0 + 1e-9)


def test_xi_is_attained(mat3):
    # some direction must come within a percent of the bound, else xi is slack
    B, A = flux_energy_pencil(mat3)
    xi = xi_estimate(mat3)
    L = np.linalg.cholesky(A)
    C = np.linalg.solve(L, np.linalg.solve(L, B).T).T
    top = np.max(np.abs(np.linalg.eigvalsh(0.5 * (C + C.T))))
    assert top == pytest.approx(xi, rel=1e-9)


def test_pencil_energy_side_is_positive_definite(mat2, mat3):
    for params in (mat2, mat3):
        _, A = flux_energy_pencil(params)
        assert np.min(np.linalg.eigvalsh(A)) > 0.0


@settings(max_examples=25, deadline=None)
@given(lam=coef, mu=coef, c=coef, r=coef, k1=coef, h1=coef, rho=coef, h=coef)
def test_random_decoupled_materials_validate(lam, mu, c, r, k1, h1, rho, h):
    params = reference_material(
        "TypeIII", lam=lam, mu=mu, c=c, r=r, k1=k1, h1=h1, rho=rho,
        half_thickness=h, kappa=0.0, hbar1=0.0, hbar2=0.0, d1=0.0, d2=0.0,
    )
    report = validate(params)
    assert report.passed, report.failures()
    assert zeta(params) > 0.0
    assert xi_estimate(params) > 0.0


@settings(max_examples=25, deadline=None)
@given(scale=st.floats(min_value=0.1, max_value=10.0))
def test_xi_invariant_under_rate_scaling(scale):
    # the pencil contains no type III rate moduli, so xi must not move
    base = reference_material("TypeIII")
    scaled = reference_material(
        "TypeIII", k2=base.k2 * scale, h2=base.h2 * scale, hbar2=base.hbar2 * scale
    )
    assert xi_estimate(scaled) == pytest.approx(xi_estimate(base), rel=1e-12)
