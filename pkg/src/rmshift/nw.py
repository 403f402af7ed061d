"""Recursive symmetrized Nadaraya-Watson estimation of the shape function.

Observation ``k`` enters with bandwidth ``h_k = k**-alpha`` and is centred
with the shift estimate available *before* it was seen. Weights at ``x`` and
``-x`` are pooled, so the estimate is even by construction. The estimator is
kept as per-point numerator/denominator sums on a fixed symmetric grid.
"""

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .errors import ConfigError, UndefinedEstimateError
from .model import nw_asymptotic_variance
from .quadrature import integrate


# --------------------------------------------------------------------------
# Kernels
# --------------------------------------------------------------------------

def _uniform(u):
    return np.where(np.abs(u) <= 1.0, 0.5, 0.0)


def _epanechnikov(u):
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


@dataclass(frozen=True)
class KernelSpec:
    """Symmetric probability kernel with support ``[-A, A]``.

    ``nu2`` is the integral of the squared kernel.
    """

    evaluator: object
    support_radius: float
    nu2: float
    name: str = "kernel"

    def __call__(self, u):
        return self.evaluator(np.asarray(u, dtype=float))

    def validate(self, tol=1e-8):
        a = self.support_radius
        probe = np.linspace(-1.5 * a, 1.5 * a, 3001)
        k = self(probe)
        if np.any(k < 0) or not np.array_equal(k, self(-probe)):
            raise ConfigError(f"{self.name}: kernel must be non-negative and even")
        if np.any(k[np.abs(probe) > a] != 0):
            raise ConfigError(f"{self.name}: kernel must vanish outside [-A, A]")
        mass, _ = integrate(self, -a, a)
        energy, _ = integrate(lambda u: self(u) ** 2, -a, a)
        if abs(mass - 1) > tol or abs(energy - self.nu2) > tol:
            raise ConfigError(f"{self.name}: mass {mass!r}, nu2 {energy!r} vs declared {self.nu2!r}")
        return self


UNIFORM = KernelSpec(_uniform, 1.0, 0.5, "uniform")
EPANECHNIKOV = KernelSpec(_epanechnikov, 1.0, 0.6, "epanechnikov")
KERNELS = {"uniform": UNIFORM, "epanechnikov": EPANECHNIKOV}


def get_kernel(name):
    try:
        return KERNELS[name]
    except KeyError:
        raise ConfigError(f"kernel: expected one of {sorted(KERNELS)}, got {name!r}") from None


def weight(kernel, h, x_obs, theta_hat_prev, x_eval):
    """``K((x_obs - theta_hat_prev - x_eval) / h) / h``; vectorized in ``x_eval``."""
    if not h > 0:
        raise ConfigError(f"bandwidth must be positive, got {h!r}")
    return kernel((x_obs - theta_hat_prev - np.asarray(x_eval, dtype=float)) / h) / h


# --------------------------------------------------------------------------
# Estimator state
# --------------------------------------------------------------------------

def symmetric_grid(points=101):
    """Sorted grid on ``[-1/2, 1/2]`` whose points are exact negatives of each other."""
    if points < 2:
        raise ConfigError(f"grid_points must be >= 2, got {points!r}")
    half = points - 1
    k = np.arange(-half, half + 1, 2)
    return k / (2.0 * half)


@dataclass(frozen=True)
class NWState:
    grid: np.ndarray
    num: np.ndarray
    den: np.ndarray
    n: int = 0
    alpha: float = 0.9

    @classmethod
    def empty(cls, grid=None, alpha=0.9):
        grid = symmetric_grid() if grid is None else np.asarray(grid, dtype=float)
        if grid.ndim != 1 or np.any(np.diff(grid) <= 0):
            raise ConfigError("grid must be strictly increasing")
        if np.any(np.abs(grid) > 0.5) or not np.array_equal(grid, -grid[::-1]):
            raise ConfigError("grid must lie in [-1/2, 1/2] and be symmetric about 0")
        if not 0 < alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {alpha!r}")
        zeros = np.zeros_like(grid)
        return cls(grid, zeros, zeros.copy(), 0, float(alpha))

    @property
    def bandwidth(self):
        """Bandwidth of the most recent update, ``n**-alpha``."""
        return self.n ** -self.alpha if self.n else math.inf


def _half(grid):
    # indices 0..m-1 cover the non-positive half; mirrored sums are copied
    return (grid.size + 1) // 2


def _pooled_weights(kernel, grid, x_obs, theta_prev, h):
    """Rows of ``W(x_j) + W(-x_j)`` for the first half of the grid."""
    m = _half(grid)
    left = grid[:m]
    d = np.subtract.outer(x_obs - theta_prev, left)
    e = np.add.outer(x_obs - theta_prev, left)
    h = np.asarray(h)[..., None] if np.ndim(h) else h
    return kernel(d / h) / h + kernel(e / h) / h


def _mirror(half_values, size):
    m = half_values.shape[-1]
    tail = half_values[..., : size - m][..., ::-1]
    return np.concatenate([half_values, tail], axis=-1)


def update(state, kernel, x_obs, y_obs, theta_hat_prev):
    """Add one observation; ``theta_hat_prev`` is the estimate before it."""
    n = state.n + 1
    h = n ** -state.alpha
    s = _mirror(_pooled_weights(kernel, state.grid, x_obs, theta_hat_prev, h), state.grid.size)
    return NWState(state.grid, state.num + s * y_obs, state.den + s, n, state.alpha)


def update_batch(state, kernel, x_obs, y_obs, theta_hat_prev, chunk=4096):
    """Add a block of observations at once.

    Equivalent to repeated :func:`update` calls up to summation order.
    """
    x_obs = np.asarray(x_obs, dtype=float)
    y_obs = np.asarray(y_obs, dtype=float)
    theta_hat_prev = np.broadcast_to(np.asarray(theta_hat_prev, dtype=float), x_obs.shape)
    m = _half(state.grid)
    num = np.zeros(m)
    den = np.zeros(m)
    for start in range(0, x_obs.size, chunk):
        sl = slice(start, start + chunk)
        k = np.arange(state.n + 1 + start, state.n + 1 + start + x_obs[sl].size)
        h = k ** -state.alpha
        s = _pooled_weights(kernel, state.grid, x_obs[sl], theta_hat_prev[sl], h)
        num += y_obs[sl] @ s
        den += s.sum(axis=0)
    size = state.grid.size
    return NWState(
        state.grid,
        state.num + _mirror(num, size),
        state.den + _mirror(den, size),
        state.n + x_obs.size,
        state.alpha,
    )


def _index(state, x_eval):
    hits = np.flatnonzero(state.grid == x_eval)
    if hits.size == 0:
        raise ConfigError(f"{x_eval!r} is not a grid point")
    return int(hits[0])


def evaluate(state, x_eval):
    """Estimate at a grid point; raises if no observation has weight there."""
    j = _index(state, x_eval)
    if state.den[j] == 0:
        raise UndefinedEstimateError(f"no kernel weight at x={x_eval!r} after n={state.n}")
    return state.num[j] / state.den[j]


def curve(state):
    """Estimates on the whole grid, ``nan`` where the denominator is 0."""
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(state.den > 0, state.num / np.where(state.den > 0, state.den, 1.0), np.nan)


@dataclass(frozen=True)
class CurveBand:
    x: np.ndarray
    f_hat: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    variance: np.ndarray
    level: float


def confidence_band(state, spec, level=0.95, theta_hat=None, kernel=UNIFORM):
    """Pointwise normal bands ``f_hat +/- q sqrt(v^2(x) / (n h_n))``.

    ``v^2`` uses the known density and ``spec.sigma2`` centred at
    ``theta_hat`` (default ``spec.theta``). Requires ``1/3 < alpha < 1``.
    """
    if state.n < 1:
        raise ConfigError("confidence_band needs n >= 1")
    if not 0 < level < 1:
        raise ConfigError(f"level must lie in (0, 1), got {level!r}")
    q = NormalDist().inv_cdf(1.0 - (1.0 - level) / 2.0)
    variance = np.array([
        nw_asymptotic_variance(spec, float(x), state.alpha, kernel.nu2, theta_hat)
        for x in state.grid
    ])
    half = q * np.sqrt(variance / (state.n * state.bandwidth))
    f_hat = curve(state)
    return CurveBand(state.grid, f_hat, f_hat - half, f_hat + half, variance, level)
