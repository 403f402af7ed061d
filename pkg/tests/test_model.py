import math

import numpy as np
import pytest
from scipy import integrate as sp_integrate

from rmshift import model
from rmshift.errors import (
    ConfigError,
    DensityError,
    EvaluationError,
    IdentifiabilityError,
    QuadratureError,
    RateRegimeError,
    VariantError,
)
from rmshift.quadrature import integrate

TWO_PI = 2 * math.pi


def quad_oracle(fn, a=-0.5, b=0.5):
    value, _ = sp_integrate.quad(fn, a, b, epsabs=1e-13, epsrel=1e-13, limit=400)
    return value


# -- quadrature -------------------------------------------------------------

def test_integrate_polynomial_and_trig():
    value, err = integrate(lambda x: x ** 4)
    assert value == pytest.approx(2 * 0.5 ** 5 / 5, abs=1e-15)
    value, _ = integrate(lambda x: np.sin(TWO_PI * x) ** 2)
    assert value == pytest.approx(0.5, abs=1e-14)


def test_integrate_breakpoints_handle_kinks():
    value, _ = integrate(lambda x: np.abs(x - 0.1), breakpoints=[0.1])
    assert value == pytest.approx(0.6 ** 2 / 2 + 0.4 ** 2 / 2, abs=1e-14)


def test_integrate_reports_nonconvergence():
    with pytest.raises(QuadratureError) as info:
        integrate(lambda x: np.sign(x - 0.1234567), max_panels=64)
    assert info.value.residual > 0


def test_integrate_rejects_nonfinite():
    with pytest.raises(EvaluationError):
        integrate(lambda x: np.full_like(x, np.nan))


# -- shapes and densities ---------------------------------------------------

@pytest.mark.parametrize("shape", [model.CosineSum(8), model.CosineSum(3), model.MixedShape()])
def test_builtin_shapes_are_periodic(shape):
    x = np.linspace(-2, 2, 1001)
    assert np.allclose(shape(x + 1), shape(x), atol=1e-12, rtol=0)
    if shape.symmetric:
        assert np.allclose(shape(-x), shape(x), atol=1e-12, rtol=0)
    assert np.max(np.abs(shape(x))) <= shape.sup_norm() + 1e-12


def test_tabulated_shape_periodizes_and_interpolates():
    xs = np.linspace(-0.5, 0.5, 41)
    ys = np.cos(TWO_PI * xs)
    shape = model.TabulatedShape(xs, ys, symmetric=True)
    probe = np.linspace(-0.5, 0.5, 301)
    assert np.allclose(shape(probe), np.cos(TWO_PI * probe), atol=2e-4)
    assert np.allclose(shape(probe + 1), shape(probe), atol=1e-12)
    spec = model.ModelSpec(shape, sigma2=1.0, theta=0.0)
    assert spec.f1 == pytest.approx(0.5, abs=1e-4)


def test_tabulated_shape_without_endpoint():
    xs = np.linspace(-0.5, 0.5, 40, endpoint=False)
    shape = model.TabulatedShape(xs, np.sin(TWO_PI * xs))
    assert shape(0.5) == pytest.approx(shape(-0.5), abs=1e-12)
    assert shape(0.3) == pytest.approx(math.sin(TWO_PI * 0.3), abs=1e-4)


@pytest.mark.parametrize("xs", [[0.0, 0.1, 0.05, 0.2], [-0.6, 0, 0.1, 0.2], [0, 0.1, 0.2]])
def test_table_validation(xs):
    with pytest.raises(ConfigError):
        model.TabulatedShape(xs, np.zeros(len(xs)))


def test_load_table_header_optional(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("x,value\n-0.5,1\n-0.2,1\n0.2,1\n0.5,1\n")
    x, v = model.load_table(p)
    assert x.tolist() == [-0.5, -0.2, 0.2, 0.5]
    p.write_text("-0.5,1\n-0.2,1\n0.2,1\n0.5,1\n")
    assert model.load_table(p)[0].size == 4
    p.write_text("-0.5,1\n-0.2,oops\n0.2,1\n0.5,1\n")
    with pytest.raises(ConfigError, match="row 2"):
        model.load_table(p)


@pytest.mark.parametrize("density", [
    model.UniformDensity(),
    model.CosineDensity(0.6),
    model.TabulatedDensity([-0.5, -0.1, 0.2, 0.5], [0.5, 1.5, 1.0, 0.8]),
])
def test_densities_have_unit_mass_and_sample_correctly(density):
    density.validate()
    assert quad_oracle(density) == pytest.approx(1.0, abs=1e-8)
    assert density(0.7) == 0.0 and density(-0.51) == 0.0
    rng = np.random.default_rng(5)
    draws = density.sample(rng, 200_000)
    assert np.all(np.abs(draws) <= 0.5)
    mean = quad_oracle(lambda x: x * density(x))
    assert draws.mean() == pytest.approx(mean, abs=4 * 0.3 / math.sqrt(draws.size))


def test_density_below_gmin_is_rejected():
    with pytest.raises(DensityError):
        model.TabulatedDensity([-0.5, 0.0, 0.1, 0.5], [1.0, 0.0, 1.0, 1.0]).validate()
    with pytest.raises(ConfigError):
        model.CosineDensity(1.0)


def test_modelspec_invariants(exp1, exp2):
    assert exp1.f1 == pytest.approx(0.5, abs=1e-12)
    assert exp1.g1 == 0.0
    assert exp2.f1 == pytest.approx(0.5, abs=1e-12)
    assert exp2.g1 == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ConfigError):
        model.experiment1(theta=0.25)
    with pytest.raises(ConfigError):
        model.ModelSpec(model.CosineSum(2), sigma2=-1.0)


def test_identifiability_error():
    zero = model.CallableShape(lambda x: np.zeros_like(x), symmetric=True, description="zero")
    with pytest.raises(IdentifiabilityError):
        model.ModelSpec(zero)


def test_symmetric_flag_checked_against_g1():
    odd = model.CallableShape(lambda x: np.sin(TWO_PI * x), symmetric=True)
    with pytest.raises(ConfigError):
        model.ModelSpec(odd)


# -- Fourier coefficients ---------------------------------------------------

def test_fourier_coeffs_cosine_sum():
    f1, g1 = model.fourier_coeffs(model.CosineSum(8))
    assert f1 == pytest.approx(0.5, abs=1e-10)
    assert g1 == pytest.approx(0.0, abs=1e-10)


def test_fourier_coeffs_zero_function():
    zero = model.CallableShape(lambda x: np.zeros_like(x))
    assert model.fourier_coeffs(zero) == (0.0, 0.0)


def test_fourier_coeffs_mixed_shape_against_quad_oracle():
    f = model.MixedShape()
    f1, g1 = model.fourier_coeffs(f)
    f1_ref = quad_oracle(lambda x: math.cos(TWO_PI * x) * f(x))
    g1_ref = quad_oracle(lambda x: math.sin(TWO_PI * x) * f(x))
    assert f1_ref == pytest.approx(0.5, abs=1e-12) and g1_ref == pytest.approx(0.5, abs=1e-12)
    assert f1 == pytest.approx(f1_ref, abs=1e-10)
    assert g1 == pytest.approx(g1_ref, abs=1e-10)


@pytest.mark.parametrize("k", [1, 2, 5])
def test_fourier_coeffs_of_odd_function_has_zero_f1(k):
    odd = model.CallableShape(lambda x: np.sin(TWO_PI * k * x) + np.sin(TWO_PI * x) ** 3)
    f1, _ = model.fourier_coeffs(odd)
    assert abs(f1) <= 1e-10


def test_fourier_coeffs_nonfinite():
    bad = model.CallableShape(lambda x: np.full_like(x, np.inf))
    with pytest.raises(EvaluationError):
        model.fourier_coeffs(bad)


# -- drift functions --------------------------------------------------------

def test_phi_closed_examples(exp1):
    assert model.phi_closed(exp1, exp1.theta) == 0.0
    assert model.phi_closed(exp1, exp1.theta - 0.25) == pytest.approx(0.5, abs=1e-12)


def test_phi_closed_rejects_nonsymmetric(exp2):
    with pytest.raises(VariantError, match="Phi_closed"):
        model.phi_closed(exp2, 0.0)


@pytest.mark.parametrize("shape", [model.CosineSum(8), model.CosineSum(1), model.CosineSum(4)])
def test_phi_closed_matches_quadrature(shape):
    spec = model.ModelSpec(shape, theta=-0.07)
    for t in np.linspace(-0.5, 0.5, 101):
        assert model.phi_closed(spec, t) == pytest.approx(model.phi_quadrature(spec, t), abs=1e-8)


def test_phi_quadrature_examples(exp1):
    assert abs(model.phi_quadrature(exp1, exp1.theta)) <= 1e-10
    assert model.phi_quadrature(exp1, exp1.theta - 0.25) == pytest.approx(0.5, abs=1e-8)
    zero = model.CallableShape(lambda x: np.zeros_like(x), symmetric=True)
    assert all(
        integrate(lambda x: np.sin(TWO_PI * (x - t)) * zero(x))[0] == 0 for t in (0.0, 0.3)
    )


def test_phi_sign_structure(exp1):
    ts = exp1.theta + np.linspace(-0.499, 0.499, 999)
    prod = (ts - exp1.theta) * model.phi_closed(exp1, ts)
    nonzero = ts != exp1.theta
    assert np.all(np.sign(prod[nonzero]) == -np.sign(exp1.f1))
    neg = model.ModelSpec(model.CallableShape(lambda x: -model.CosineSum(2)(x), symmetric=True), theta=0.1)
    prod = (ts - neg.theta) * model.phi_closed(neg, ts)
    assert np.all(np.sign(prod[nonzero]) == 1)


def test_Phi_closed(exp2, exp1):
    assert model.Phi_closed(exp2, exp2.theta) == 0.0
    assert model.Phi_closed(exp2, exp2.theta - 0.25) == pytest.approx(0.5, abs=1e-12)
    ts = np.linspace(-0.5, 0.5, 21)
    assert np.allclose(model.Phi_closed(exp1, ts), exp1.f1 * model.phi_closed(exp1, ts), atol=1e-15)
    for t in ts:
        assert model.Phi_closed(exp2, t) == pytest.approx(model.Phi_quadrature(exp2, t), abs=1e-8)


# -- variance integrals -----------------------------------------------------

def test_varphi_noise_only():
    spec = model.ModelSpec(model.CosineSum(1), sigma2=1.0)
    flat = model.ModelSpec(model.CosineSum(1), sigma2=2.0)
    # f = 0 is not identifiable, so check the noise term through linearity instead
    for t in (0.0, 0.2, -0.4):
        diff = model.varphi_quadrature(flat, t) - model.varphi_quadrature(spec, t)
        assert diff == pytest.approx(0.5, abs=1e-12)


def test_varphi_experiment1_at_theta(exp1):
    assert model.varphi_quadrature(exp1, exp1.theta) == pytest.approx(7 / 8, abs=1e-8)
    f = exp1.f
    ref = quad_oracle(lambda x: math.sin(TWO_PI * (x - 0.1)) ** 2 * (f(x - 0.1) ** 2 + 1.0))
    assert ref == pytest.approx(7 / 8, abs=1e-10)


def test_varphi_with_nonuniform_density_against_quad():
    spec = model.ModelSpec(model.CosineSum(3), model.CosineDensity(-0.4), sigma2=0.5, theta=0.05)
    g = spec.g
    for t in (-0.2, 0.05, 0.3):
        ref = quad_oracle(lambda x: math.sin(TWO_PI * (x - t)) ** 2 / g(x)
                          * (spec.f(x - 0.05) ** 2 + 0.5))
        assert model.varphi_quadrature(spec, t) == pytest.approx(ref, abs=1e-9)


def test_Psi_reduces_to_scaled_varphi(exp1):
    for t in np.linspace(-0.5, 0.5, 11):
        assert model.Psi_quadrature(exp1, t) == pytest.approx(
            exp1.f1 ** 2 * model.varphi_quadrature(exp1, t), abs=1e-10)


def test_Psi_monte_carlo_oracle(exp2):
    rng = np.random.default_rng(2024)
    x = rng.random(1_000_000) - 0.5
    u = TWO_PI * (x - exp2.theta)
    sample = (0.5 * np.sin(u) - 0.5 * np.cos(u)) ** 2 * (exp2.f(x - exp2.theta) ** 2 + exp2.sigma2)
    se = sample.std(ddof=1) / math.sqrt(sample.size)
    assert abs(model.Psi_quadrature(exp2, exp2.theta) - sample.mean()) <= 3 * se


def test_varphi_lower_bound(exp1):
    ts = np.linspace(-0.5, 0.5, 41)
    assert min(model.varphi_quadrature(exp1, t) for t in ts) > 0


def test_density_error_in_variance_integral():
    g = model.TabulatedDensity([-0.5, 0.0, 0.1, 0.5], [1.0, 1e-9, 1.0, 1.0], g_min=1e-12)
    spec = model.ModelSpec(model.CosineSum(1), g)
    object.__setattr__(g, "g_min", 1e-3)
    with pytest.raises(DensityError):
        model.varphi_quadrature(spec, 0.0)


# -- xi^2 and efficient variance --------------------------------------------

def test_xi_squared_experiment1(exp1):
    assert model.xi_squared(exp1) == pytest.approx(7 / (8 * (2 * math.pi - 1)), abs=1e-9)
    assert model.xi_squared(exp1) == pytest.approx(0.1656198, abs=1e-7)


def test_xi_squared_boundary_regime():
    scaled = model.CallableShape(lambda x: np.cos(TWO_PI * x) / (2 * math.pi), symmetric=True)
    spec = model.ModelSpec(scaled)
    assert 4 * math.pi * abs(spec.f1) == pytest.approx(1.0)
    with pytest.raises(RateRegimeError):
        model.xi_squared(spec)


def test_xi_squared_variants(exp1, exp2):
    assert model.xi_squared(exp1, "nonsymmetric") == pytest.approx(
        model.Psi_quadrature(exp1, 0.1) / (4 * math.pi * 0.25 - 1))
    with pytest.raises(VariantError):
        model.xi_squared(exp2, "symmetric")
    assert model.xi_squared(exp2) == pytest.approx(
        model.Psi_quadrature(exp2, exp2.theta) / (2 * math.pi - 1))


def test_efficient_variance(exp1):
    eff = model.efficient_variance(exp1)
    assert eff == pytest.approx(7 / 8 / math.pi ** 2, abs=1e-10)
    assert eff == pytest.approx(0.0886560, abs=1e-7)
    assert eff < model.xi_squared(exp1)


# -- kernel-estimator variance ----------------------------------------------

@pytest.mark.parametrize("x, expected", [(0.2, 5 / 38), (0.45, 5 / 19), (0.0, 5 / 19),
                                         (-0.45, 5 / 19), (0.4, 5 / 38), (-0.4, 5 / 38)])
def test_nw_variance_table(exp1, x, expected):
    assert model.nw_asymptotic_variance(exp1, x, 0.9) == pytest.approx(expected, abs=1e-12)


def test_nw_variance_is_even(exp1):
    for x in np.linspace(0.001, 0.5, 77):
        assert model.nw_asymptotic_variance(exp1, x, 0.7) == model.nw_asymptotic_variance(exp1, -x, 0.7)


def test_nw_variance_preconditions(exp1):
    with pytest.raises(ConfigError):
        model.nw_asymptotic_variance(exp1, 0.6, 0.9)
    with pytest.raises(ConfigError):
        model.nw_asymptotic_variance(exp1, 0.1, 0.3)
