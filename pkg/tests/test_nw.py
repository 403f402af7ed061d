import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmshift import model, nw
from rmshift.errors import ConfigError, UndefinedEstimateError

Q95 = 1.959963984540054


def batch_oracle(grid, alpha, xs, ys, thetas, kernel_value=0.5):
    """Symmetrized sums written out term by term from a logged history."""
    num = np.zeros(grid.size)
    den = np.zeros(grid.size)
    for j, x in enumerate(grid):
        for k in range(len(xs)):
            h = (k + 1) ** -alpha
            w = 0.0
            for target in (x, -x):
                u = (xs[k] - thetas[k] - target) / h
                if abs(u) <= 1.0:
                    w += kernel_value / h
            num[j] += w * ys[k]
            den[j] += w
    return num, den


# -- kernels ----------------------------------------------------------------

@pytest.mark.parametrize("kernel", [nw.UNIFORM, nw.EPANECHNIKOV])
def test_builtin_kernels_validate(kernel):
    assert kernel.validate() is kernel


def test_bad_kernel_rejected():
    bad = nw.KernelSpec(lambda u: np.where(np.abs(u) <= 1, 0.4, 0.0), 1.0, 0.32, "bad")
    with pytest.raises(ConfigError, match="bad"):
        bad.validate()
    lopsided = nw.KernelSpec(lambda u: np.where((u > -1) & (u <= 0.5), 2 / 3, 0.0), 1.0, 2 / 3)
    with pytest.raises(ConfigError):
        lopsided.validate()
    with pytest.raises(ConfigError):
        nw.get_kernel("gaussian")


def test_weight_examples():
    assert nw.weight(nw.UNIFORM, 1.0, 0.3, 0.0, 0.2) == 0.5
    assert nw.weight(nw.UNIFORM, 1.0, 0.3, 0.0, -0.8) == 0.0
    assert nw.weight(nw.UNIFORM, 0.1, 0.35, 0.0, 0.3) == pytest.approx(5.0)
    with pytest.raises(ConfigError):
        nw.weight(nw.UNIFORM, 0.0, 0.3, 0.0, 0.2)


# -- grid and state ---------------------------------------------------------

@pytest.mark.parametrize("points", [2, 3, 11, 101, 200])
def test_symmetric_grid(points):
    grid = nw.symmetric_grid(points)
    assert grid.size == points
    assert grid[0] == -0.5 and grid[-1] == 0.5
    assert np.array_equal(grid, -grid[::-1])


def test_state_validation():
    with pytest.raises(ConfigError):
        nw.NWState.empty(np.array([-0.5, 0.1, 0.5]))
    with pytest.raises(ConfigError):
        nw.NWState.empty(alpha=1.0)
    with pytest.raises(ConfigError):
        nw.symmetric_grid(1)


def test_single_update_example():
    state = nw.update(nw.NWState.empty(nw.symmetric_grid(11)), nw.UNIFORM, 0.0, 3.0, 0.0)
    assert state.n == 1 and state.bandwidth == 1.0
    assert np.all(state.num == 3.0)
    assert np.all(state.den == 1.0)


def test_zero_response_gives_zero_estimate():
    state = nw.NWState.empty(nw.symmetric_grid(21))
    rng = np.random.default_rng(0)
    for x in rng.random(50) - 0.5:
        state = nw.update(state, nw.UNIFORM, x, 0.0, 0.0)
    assert np.all(state.num == 0)
    covered = state.den > 0
    assert covered.any()
    assert np.all(nw.curve(state)[covered] == 0)


def test_constant_data_is_reproduced():
    rng = np.random.default_rng(1)
    xs = rng.random(300) - 0.5
    state = nw.NWState.empty()
    for x in xs:
        # power-of-two level: every product is exact, so the ratio is too
        state = nw.update(state, nw.UNIFORM, x, 0.25, 0.02)
    covered = state.grid[state.den > 0]
    assert covered.size > 50
    for x in covered:
        assert nw.evaluate(state, x) == 0.25
    batch = nw.update_batch(nw.NWState.empty(), nw.UNIFORM, xs, np.full(300, 0.75), 0.02)
    for x in covered:
        assert nw.evaluate(batch, x) == pytest.approx(0.75, rel=1e-14)


def test_undefined_point_raises():
    state = nw.NWState.empty(alpha=0.9)
    with pytest.raises(UndefinedEstimateError):
        nw.evaluate(state, 0.0)
    # after many steps the window is tiny; a single early point leaves gaps
    state = nw.NWState(state.grid, state.num, state.den, 10_000, 0.9)
    state = nw.update(state, nw.UNIFORM, 0.3, 1.0, 0.0)
    assert np.isnan(nw.curve(state)[50])
    with pytest.raises(UndefinedEstimateError):
        nw.evaluate(state, 0.0)
    assert nw.evaluate(state, 0.3) == 1.0
    with pytest.raises(ConfigError):
        nw.evaluate(state, 0.123)


def test_batch_update_matches_stream_and_oracle(exp1):
    rng = np.random.default_rng(7)
    xs = rng.random(200) - 0.5
    ys = exp1.f(xs - 0.1) + rng.standard_normal(200)
    thetas = np.concatenate([[0.0], 0.1 + 0.05 * rng.standard_normal(199)])
    grid = nw.symmetric_grid(41)
    stream = nw.NWState.empty(grid, 0.7)
    for k in range(200):
        stream = nw.update(stream, nw.UNIFORM, xs[k], ys[k], thetas[k])
    batch = nw.update_batch(nw.NWState.empty(grid, 0.7), nw.UNIFORM, xs, ys, thetas, chunk=37)
    num, den = batch_oracle(grid, 0.7, xs, ys, thetas)
    assert stream.n == batch.n == 200
    np.testing.assert_allclose(stream.den, den, rtol=1e-12, atol=0)
    np.testing.assert_allclose(stream.num, num, rtol=1e-12, atol=1e-12 * np.abs(num).max())
    np.testing.assert_allclose(batch.den, den, rtol=1e-12, atol=0)
    np.testing.assert_allclose(batch.num, num, rtol=1e-12, atol=1e-12 * np.abs(num).max())


def test_batch_resumes_from_state():
    rng = np.random.default_rng(3)
    xs, ys = rng.random(100) - 0.5, rng.random(100)
    full = nw.update_batch(nw.NWState.empty(), nw.UNIFORM, xs, ys, 0.0)
    part = nw.update_batch(nw.NWState.empty(), nw.UNIFORM, xs[:40], ys[:40], 0.0)
    part = nw.update_batch(part, nw.UNIFORM, xs[40:], ys[40:], 0.0)
    np.testing.assert_allclose(part.num, full.num, rtol=1e-13)
    np.testing.assert_allclose(part.den, full.den, rtol=1e-13)


def test_noiseless_estimates_converge(exp1):
    spec = model.experiment1(theta=0.1)
    grid = nw.symmetric_grid(101)
    interior = np.abs(grid) <= 0.4
    errors = []
    for n in (500, 50_000):
        rng = np.random.default_rng(11)
        xs = rng.random(n) - 0.5
        state = nw.update_batch(nw.NWState.empty(grid, 0.5), nw.UNIFORM, xs, spec.f(xs - 0.1), 0.1)
        errors.append(np.max(np.abs(nw.curve(state)[interior] - spec.f(grid[interior]))))
    assert errors[1] < errors[0] / 3


# -- bands ------------------------------------------------------------------

def _state_after(n, alpha=0.9):
    grid = nw.symmetric_grid(101)
    return nw.NWState(grid, np.zeros(101), np.ones(101), n, alpha)


def test_band_variances_follow_table(exp1):
    band = nw.confidence_band(_state_after(1000), exp1, 0.95, theta_hat=0.1)
    inner = (np.abs(band.x) <= 0.4) & (band.x != 0)
    assert np.allclose(band.variance[inner], 5 / 38, atol=1e-12)
    assert np.allclose(band.variance[~inner], 5 / 19, atol=1e-12)


def test_band_lengths_against_reported_extremes(exp1):
    band = nw.confidence_band(_state_after(1000), exp1, 0.95, theta_hat=0.1)
    length = band.upper - band.lower
    half = length / 2
    scale = 1000 ** 0.1
    assert length[np.isclose(band.x, 0.04)][0] == pytest.approx(2 * Q95 * math.sqrt(5 / 38 / scale))
    # the two reported figures: full length where v^2 = 5/38, half length where v^2 = 5/19
    assert length[np.isclose(band.x, 0.04)][0] == pytest.approx(1.0066, rel=0.05)
    assert half[np.isclose(band.x, 0.47)][0] == pytest.approx(0.7118, rel=0.05)


def test_band_with_zero_noise_has_zero_width(exp1):
    spec = SimpleNamespace(g=exp1.g, sigma2=0.0, theta=0.1)
    band = nw.confidence_band(_state_after(1000), spec)
    assert np.all(band.upper == band.lower)


def test_band_alpha_outside_clt_range(exp1):
    with pytest.raises(ConfigError):
        nw.confidence_band(_state_after(1000, alpha=0.2), exp1)


def test_band_monotone_in_level(exp1):
    s = _state_after(500)
    narrow = nw.confidence_band(s, exp1, 0.9)
    wide = nw.confidence_band(s, exp1, 0.99)
    assert np.all(wide.upper - wide.lower > narrow.upper - narrow.lower)


# -- properties -------------------------------------------------------------

@settings(max_examples=150, deadline=None)
@given(
    seed=st.integers(0, 2 ** 32 - 1),
    points=st.integers(2, 60),
    alpha=st.floats(0.05, 0.95),
    n=st.integers(1, 40),
    kernel=st.sampled_from([nw.UNIFORM, nw.EPANECHNIKOV]),
)
def test_symmetry_monotonicity_and_range(seed, points, alpha, n, kernel):
    rng = np.random.default_rng(seed)
    state = nw.NWState.empty(nw.symmetric_grid(points), alpha)
    ys = rng.normal(size=n)
    for k in range(n):
        prev_den = state.den
        state = nw.update(state, kernel, rng.random() - 0.5, ys[k], 0.25 * (rng.random() - 0.5))
        assert np.all(state.den >= prev_den)
        est = nw.curve(state)
        assert np.array_equal(est, est[::-1], equal_nan=True)
    covered = state.den > 0
    est = nw.curve(state)[covered]
    assert np.all(est >= ys.min() - 1e-12) and np.all(est <= ys.max() + 1e-12)
