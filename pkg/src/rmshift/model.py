"""Shape functions, observation densities and the closed-form auxiliaries.

The regression model is ``Y = f(X - theta) + eps`` with ``f`` periodic of
period 1, ``X`` drawn from a density ``g`` on ``[-1/2, 1/2]`` and centred
noise of variance ``sigma2``. Everything the estimators need from the model
(first Fourier coefficients, the drift function and its root, the variance
integrals) lives here, together with quadrature versions used as oracles.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    ConfigError,
    DensityError,
    EvaluationError,
    IdentifiabilityError,
    RateRegimeError,
    VariantError,
)
from .quadrature import integrate

TWO_PI = 2.0 * math.pi
DEFAULT_G_MIN = 1e-6
_PROBE = np.linspace(-0.5, 0.5, 2001)


def wrap(x):
    """Map ``x`` into ``[-1/2, 1/2)`` modulo 1."""
    return np.mod(np.asarray(x, dtype=float) + 0.5, 1.0) - 0.5


# --------------------------------------------------------------------------
# Shape functions
# --------------------------------------------------------------------------

class ShapeFunction:
    """A bounded period-1 function.

    Subclasses implement ``_eval`` on float arrays. ``bound`` is a declared
    sup-norm bound (``None`` means it is probed on a dense grid).
    """

    symmetric = False
    description = "shape"
    bound = None

    def __call__(self, x):
        scalar = np.ndim(x) == 0
        out = np.asarray(self._eval(np.asarray(x, dtype=float)), dtype=float)
        if not np.all(np.isfinite(out)):
            raise EvaluationError(f"{self.description}: non-finite value")
        return float(out) if scalar else out

    def _eval(self, x):
        raise NotImplementedError

    def sup_norm(self):
        if self.bound is not None:
            return float(self.bound)
        return float(np.max(np.abs(self(_PROBE))))

    def __repr__(self):
        return f"{type(self).__name__}({self.description!r})"


class CosineSum(ShapeFunction):
    """``f(x) = sum_{k=1..p} cos(2 k pi x)``; symmetric with ``f1 = 1/2``."""

    symmetric = True

    def __init__(self, p=8):
        if int(p) != p or p < 1:
            raise ConfigError(f"p must be a positive integer, got {p!r}")
        self.p = int(p)
        self.description = f"cosine_sum(p={self.p})"
        self.bound = float(self.p)

    def _eval(self, x):
        k = np.arange(1, self.p + 1)
        return np.cos(TWO_PI * np.multiply.outer(x, k)).sum(axis=-1)


class MixedShape(ShapeFunction):
    """``f(x) = cos(2 pi x) + sin(2 pi x) + cos(2 pi x) sin(2 pi x)``.

    Not symmetric; ``f1 = g1 = 1/2``.
    """

    symmetric = False
    description = "mixed"
    bound = 2.5

    def _eval(self, x):
        c = np.cos(TWO_PI * x)
        s = np.sin(TWO_PI * x)
        return c + s + c * s


class CallableShape(ShapeFunction):
    """Wrap an arbitrary vectorized callable assumed periodic with period 1."""

    def __init__(self, fn, symmetric=False, description="callable", bound=None):
        self._fn = fn
        self.symmetric = bool(symmetric)
        self.description = description
        self.bound = bound

    def _eval(self, x):
        return self._fn(x)


def _read_table(x, values):
    x = np.asarray(x, dtype=float)
    values = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.shape != values.shape or x.size < 4:
        raise ConfigError("table needs matching 1-d x and value columns with >= 4 rows")
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(values)):
        raise ConfigError("table contains non-finite entries")
    if np.any(np.diff(x) <= 0):
        raise ConfigError("table x must be strictly increasing")
    if x[0] < -0.5 or x[-1] > 0.5:
        raise ConfigError("table x must lie in [-1/2, 1/2]")
    return x, values


class TabulatedShape(ShapeFunction):
    """Periodic cubic spline through tabulated ``(x, f(x))`` pairs.

    If both endpoints -1/2 and 1/2 are present their values are averaged;
    otherwise the first point is repeated one period later. Either way the
    spline is built with periodic end conditions.
    """

    def __init__(self, x, values, symmetric=False, description="tabulated"):
        x, values = _read_table(x, values)
        values = values.copy()
        if x[0] == -0.5 and x[-1] == 0.5:
            values[0] = values[-1] = 0.5 * (values[0] + values[-1])
        else:
            x = np.append(x, x[0] + 1.0)
            values = np.append(values, values[0])
        self._x0 = x[0]
        self._spline = CubicSpline(x, values, bc_type="periodic")
        self.symmetric = bool(symmetric)
        self.description = description

    def _eval(self, x):
        return self._spline(self._x0 + np.mod(x - self._x0, 1.0))


def load_table(path):
    """Read a two-column ``x, value`` CSV; a non-numeric first row is a header."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                if lineno == 1 and not rows:
                    continue
                raise ConfigError(f"{path}: malformed row {lineno}: {row!r}") from None
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    x, values = np.array(rows).T
    return _read_table(x, values)


# --------------------------------------------------------------------------
# Densities
# --------------------------------------------------------------------------

class Density:
    """Probability density of the observation times on ``[-1/2, 1/2]``.

    Evaluates to 0 outside the support. ``g_min`` is the lower bound that is
    checked wherever the estimators divide by ``g``.
    """

    description = "density"
    breakpoints = None

    def __init__(self, g_min=DEFAULT_G_MIN):
        self.g_min = float(g_min)

    def __call__(self, x):
        scalar = np.ndim(x) == 0
        x = np.asarray(x, dtype=float)
        inside = np.abs(x) <= 0.5
        out = np.where(inside, self._eval(np.clip(x, -0.5, 0.5)), 0.0)
        return float(out) if scalar else out

    def _eval(self, x):
        raise NotImplementedError

    def sample(self, rng, size):
        """Draw ``size`` points by inverse CDF from uniform variates."""
        return self.inverse_cdf(rng.random(size))

    def inverse_cdf(self, u):
        raise NotImplementedError

    def validate(self):
        """Check positivity against ``g_min`` and unit mass."""
        probe = self(_PROBE)
        if np.min(probe) < self.g_min:
            raise DensityError(
                f"{self.description}: density {np.min(probe):.3g} below "
                f"g_min={self.g_min:g} at x={_PROBE[np.argmin(probe)]:.4f}"
            )
        mass, _ = integrate(self, breakpoints=self.breakpoints)
        if abs(mass - 1.0) > 1e-8:
            raise DensityError(f"{self.description}: integrates to {mass!r}, not 1")
        return self

    def __repr__(self):
        return f"{type(self).__name__}({self.description!r})"


class UniformDensity(Density):
    description = "uniform"

    def _eval(self, x):
        return np.ones_like(x)

    def inverse_cdf(self, u):
        return np.asarray(u, dtype=float) - 0.5


class CosineDensity(Density):
    """``g(x) = 1 + b cos(2 pi x)`` with ``|b| < 1``."""

    def __init__(self, b, g_min=DEFAULT_G_MIN):
        super().__init__(g_min)
        if not abs(b) < 1:
            raise ConfigError(f"cosine density needs |b| < 1, got {b!r}")
        self.b = float(b)
        self.description = f"cosine(b={self.b:g})"

    def _eval(self, x):
        return 1.0 + self.b * np.cos(TWO_PI * x)

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), -0.5, 0.5)
        return x + 0.5 + self.b * np.sin(TWO_PI * x) / TWO_PI

    def inverse_cdf(self, u):
        u = np.asarray(u, dtype=float)
        x = u - 0.5
        # Newton on a strictly increasing CDF; quadratic convergence from the uniform guess
        for _ in range(50):
            step = (self.cdf(x) - u) / self._eval(x)
            x = np.clip(x - step, -0.5, 0.5)
            if np.max(np.abs(step)) < 1e-15:
                break
        return x


class TabulatedDensity(Density):
    """Piecewise-linear density through tabulated points, renormalized.

    Values are held constant beyond the first/last table point.
    """

    def __init__(self, x, values, g_min=DEFAULT_G_MIN, description="tabulated"):
        super().__init__(g_min)
        x, values = _read_table(x, values)
        knots = np.concatenate([[-0.5], x, [0.5]])
        vals = np.concatenate([[values[0]], values, [values[-1]]])
        keep = np.concatenate([[True], np.diff(knots) > 0])
        knots, vals = knots[keep], vals[keep]
        mass = float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(knots)))
        if mass <= 0:
            raise DensityError("tabulated density has non-positive mass")
        self._knots = knots
        self._vals = vals / mass
        self._cum = np.concatenate(
            [[0.0], np.cumsum(0.5 * (self._vals[1:] + self._vals[:-1]) * np.diff(knots))]
        )
        self.breakpoints = tuple(knots[1:-1])
        self.description = description

    def _eval(self, x):
        return np.interp(x, self._knots, self._vals)

    def inverse_cdf(self, u):
        u = np.asarray(u, dtype=float) * self._cum[-1]
        i = np.clip(np.searchsorted(self._cum, u, side="right") - 1, 0, len(self._knots) - 2)
        x0, g0 = self._knots[i], self._vals[i]
        slope = (self._vals[i + 1] - g0) / (self._knots[i + 1] - x0)
        r = u - self._cum[i]
        # solve g0*d + slope*d^2/2 = r for the offset d in the segment
        disc = np.sqrt(np.maximum(g0 * g0 + 2.0 * slope * r, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(np.abs(slope) > 1e-14, 2.0 * r / (g0 + disc), r / g0)
        return np.clip(x0 + d, -0.5, 0.5)


# --------------------------------------------------------------------------
# Model
# --------------------------------------------------------------------------

def fourier_coeffs(f):
    """First cosine and sine Fourier coefficients of a period-1 function.

    Returns
    -------
    f1, g1 : float
        Integrals of ``cos(2 pi x) f(x)`` and ``sin(2 pi x) f(x)`` over
        ``[-1/2, 1/2]``.
    """
    knots = getattr(getattr(f, "_spline", None), "x", None)
    bp = None if knots is None else wrap(knots)
    f1, _ = integrate(lambda x: np.cos(TWO_PI * x) * f(x), breakpoints=bp)
    g1, _ = integrate(lambda x: np.sin(TWO_PI * x) * f(x), breakpoints=bp)
    return f1, g1


@dataclass(frozen=True)
class ModelSpec:
    """Shape, design density and noise level of the regression model.

    ``f1`` and ``g1`` are computed at construction. ``theta`` is the true
    shift, used only for simulation and for evaluating the variance formulas.
    """

    f: ShapeFunction
    g: Density = field(default_factory=UniformDensity)
    sigma2: float = 1.0
    theta: float = 0.0
    f1: float = field(init=False)
    g1: float = field(init=False)

    def __post_init__(self):
        if not (self.sigma2 >= 0 and math.isfinite(self.sigma2)):
            raise ConfigError(f"sigma2 must be a finite non-negative number, got {self.sigma2!r}")
        if not abs(self.theta) < 0.25:
            raise ConfigError(f"theta must satisfy |theta| < 1/4, got {self.theta!r}")
        self.g.validate()
        f1, g1 = fourier_coeffs(self.f)
        if self.f.symmetric:
            if abs(g1) > 1e-8:
                raise ConfigError(f"{self.f.description} is flagged symmetric but g1={g1:.3g}")
            g1 = 0.0
        if f1 * f1 + g1 * g1 <= 0:
            raise IdentifiabilityError("f1 = g1 = 0: the shift is not identifiable")
        object.__setattr__(self, "f1", f1)
        object.__setattr__(self, "g1", g1)

    @property
    def symmetric(self):
        return self.f.symmetric

    def with_theta(self, theta):
        """Copy with a different true shift (coefficients are recomputed)."""
        return ModelSpec(self.f, self.g, self.sigma2, theta)


def experiment1(p=8, theta=0.1, sigma2=1.0):
    """Cosine-sum shape, uniform design, standard normal noise."""
    return ModelSpec(CosineSum(p), UniformDensity(), sigma2, theta)


def experiment2(theta=-0.2, sigma2=0.2):
    """Non-symmetric mixed shape, uniform design, noise variance 1/5."""
    return ModelSpec(MixedShape(), UniformDensity(), sigma2, theta)


# --------------------------------------------------------------------------
# Drift functions
# --------------------------------------------------------------------------

def phi_closed(spec, t):
    """``f1 sin(2 pi (theta - t))``, the mean drift for a symmetric shape."""
    if not spec.symmetric:
        raise VariantError("phi_closed requires a symmetric shape; use Phi_closed")
    return spec.f1 * np.sin(TWO_PI * (spec.theta - np.asarray(t, dtype=float)))


def phi_quadrature(spec, t):
    """Integral of ``sin(2 pi (x - t)) f(x - theta)`` over ``[-1/2, 1/2]``."""
    value, _ = integrate(lambda x: np.sin(TWO_PI * (x - t)) * spec.f(x - spec.theta))
    return value


def Phi_closed(spec, t):
    """``(f1^2 + g1^2) sin(2 pi (theta - t))``, valid without symmetry."""
    energy = spec.f1 ** 2 + spec.g1 ** 2
    if energy <= 0:
        raise IdentifiabilityError("f1 = g1 = 0")
    return energy * np.sin(TWO_PI * (spec.theta - np.asarray(t, dtype=float)))


def Phi_quadrature(spec, t):
    """Quadrature form of the non-symmetric drift, for cross-checking."""
    f1, g1 = spec.f1, spec.g1

    def integrand(x):
        u = TWO_PI * (x - t)
        return (f1 * np.sin(u) - g1 * np.cos(u)) * spec.f(x - spec.theta)

    value, _ = integrate(integrand)
    return value


# --------------------------------------------------------------------------
# Variance integrals
# --------------------------------------------------------------------------

def _weighted_second_moment(spec, weight):
    g = spec.g

    def integrand(x):
        gx = g(x)
        low = gx < g.g_min
        if np.any(low):
            raise DensityError(
                f"density {gx[low][0]:.3g} below g_min={g.g_min:g} at x={x[low][0]:.6f}"
            )
        return weight(x) / gx * (spec.f(x - spec.theta) ** 2 + spec.sigma2)

    value, _ = integrate(integrand, breakpoints=g.breakpoints)
    return value


def varphi_quadrature(spec, t):
    """Conditional second moment of the symmetric update statistic at ``t``.

    Integral of ``sin^2(2 pi (x - t)) / g(x) * (f^2(x - theta) + sigma2)``.
    """
    return _weighted_second_moment(spec, lambda x: np.sin(TWO_PI * (x - t)) ** 2)


def Psi_quadrature(spec, t):
    """Second moment of the non-symmetric update statistic at ``t``."""
    f1, g1 = spec.f1, spec.g1

    def weight(x):
        u = TWO_PI * (x - t)
        return (f1 * np.sin(u) - g1 * np.cos(u)) ** 2

    return _weighted_second_moment(spec, weight)


def xi_squared(spec, mode=None):
    """Asymptotic variance of ``sqrt(n) (theta_hat - theta)`` for steps ``1/n``.

    ``mode`` is ``"symmetric"`` or ``"nonsymmetric"``; by default it follows
    the shape's symmetry flag.
    """
    if mode is None:
        mode = "symmetric" if spec.symmetric else "nonsymmetric"
    if mode == "symmetric":
        if not spec.symmetric:
            raise VariantError("symmetric xi^2 needs a symmetric shape")
        gain = 4.0 * math.pi * abs(spec.f1)
        if gain <= 1:
            raise RateRegimeError(
                f"4*pi*|f1| = {gain:.4g} <= 1: sqrt(n) regime does not apply (unsupported)"
            )
        return varphi_quadrature(spec, spec.theta) / (gain - 1.0)
    if mode == "nonsymmetric":
        gain = 4.0 * math.pi * (spec.f1 ** 2 + spec.g1 ** 2)
        if gain <= 1:
            raise RateRegimeError(
                f"4*pi*(f1^2+g1^2) = {gain:.4g} <= 1: sqrt(n) regime does not apply (unsupported)"
            )
        return Psi_quadrature(spec, spec.theta) / (gain - 1.0)
    raise ConfigError(f"unknown mode {mode!r}")


def efficient_variance(spec):
    """Variance ``varphi(theta) / (4 pi^2 f1^2)`` of the optimally scaled step."""
    if not spec.symmetric:
        raise VariantError("efficient variance is defined for symmetric shapes")
    return varphi_quadrature(spec, spec.theta) / (4.0 * math.pi ** 2 * spec.f1 ** 2)


def nw_asymptotic_variance(spec, x, alpha, nu2=0.5, theta=None):
    """Pointwise asymptotic variance of the symmetrized kernel estimator.

    ``sigma2 nu2 / ((1 + alpha) (g(theta + x) + g(theta - x)))`` for
    ``x != 0`` and ``sigma2 nu2 / ((1 + alpha) g(theta))`` at ``x = 0``.
    ``theta`` defaults to ``spec.theta``; pass an estimate for plug-in bands.
    """
    if not abs(x) <= 0.5:
        raise ConfigError(f"x must satisfy |x| <= 1/2, got {x!r}")
    if not 1.0 / 3.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (1/3, 1) for the CLT, got {alpha!r}")
    theta = spec.theta if theta is None else theta
    if x == 0:
        mass = spec.g(theta)
    else:
        mass = spec.g(theta + x) + spec.g(theta - x)
    if mass <= 0:
        raise DensityError(f"density vanishes at theta +/- x for x={x!r}")
    return spec.sigma2 * nu2 / ((1.0 + alpha) * mass)
