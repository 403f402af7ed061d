"""Projected Robbins-Monro estimation of the shift parameter.

The iteration is ``theta_{n+1} = clip(theta_n + d * c * gamma_{n+1} * T_{n+1})``
where ``T`` is a single-observation statistic whose conditional mean vanishes
at the true shift, ``gamma_n = gamma0 / n**a`` and ``d``, ``c`` are a
direction and a gain that depend on the mode:

``symmetric_sign``
    ``T = sin(2 pi (X - theta_n)) Y / g(X)``, ``d = sign(f1)``, ``c = 1``.
``nonsymmetric``
    ``T = (f1 sin(.) - g1 cos(.)) Y / g(X)``, ``d = +1``, ``c = 1``.
``efficient_known_f1``
    symmetric ``T``, ``d = sign(f1)``, ``c = 1 / (2 pi |f1|)``.
``efficient_adaptive``
    symmetric ``T`` with ``f1`` replaced by its running estimate; the sign is
    frozen once the estimate clears ``sign_freeze_threshold``.
"""

import math
from dataclasses import asdict, dataclass
from statistics import NormalDist

import numpy as np

from .errors import ConfigError, DensityError, RateRegimeError, VariantError
from .model import Psi_quadrature, varphi_quadrature

TWO_PI = 2.0 * math.pi
MODES = ("symmetric_sign", "nonsymmetric", "efficient_known_f1", "efficient_adaptive")


@dataclass(frozen=True)
class RMConfig:
    mode: str = "symmetric_sign"
    f1_sign: int = 1
    f1: float | None = None
    g1: float | None = None
    gamma0: float = 1.0
    a: float = 1.0
    projection_radius: float = 0.25
    theta0: float = 0.0
    sign_freeze_threshold: float = 0.05
    g_min: float = 1e-6

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode: expected one of {MODES}, got {self.mode!r}")
        if self.f1_sign not in (1, -1):
            raise ConfigError(f"f1_sign must be +1 or -1, got {self.f1_sign!r}")
        if not (self.gamma0 > 0 and math.isfinite(self.gamma0)):
            raise ConfigError(f"gamma0 must be positive, got {self.gamma0!r}")
        if not 0.5 < self.a <= 1.0:
            raise ConfigError(f"a must lie in (1/2, 1], got {self.a!r}")
        if not self.projection_radius > 0:
            raise ConfigError(f"projection_radius must be positive, got {self.projection_radius!r}")
        if not abs(self.theta0) <= self.projection_radius:
            raise ConfigError(
                f"theta0: |{self.theta0!r}| exceeds projection_radius {self.projection_radius!r}"
            )
        if not self.sign_freeze_threshold > 0:
            raise ConfigError("sign_freeze_threshold must be positive")
        if self.mode == "nonsymmetric":
            if self.f1 is None or self.g1 is None:
                raise ConfigError("nonsymmetric mode needs both f1 and g1")
            if self.f1 ** 2 + self.g1 ** 2 <= 0:
                raise ConfigError("nonsymmetric mode needs f1^2 + g1^2 > 0")
        if self.mode == "efficient_known_f1" and not self.f1:
            raise ConfigError("efficient_known_f1 mode needs a nonzero f1")
        if self.f1 and self.mode in ("symmetric_sign", "efficient_known_f1"):
            if math.copysign(1, self.f1) != self.f1_sign:
                raise ConfigError(f"f1_sign={self.f1_sign} contradicts f1={self.f1!r}")

    @classmethod
    def for_model(cls, spec, mode=None, **kwargs):
        """Config with coefficients taken from a model (simulation helper)."""
        if mode is None:
            mode = "symmetric_sign" if spec.symmetric else "nonsymmetric"
        kwargs.setdefault("f1_sign", 1 if spec.f1 >= 0 else -1)
        if mode == "nonsymmetric":
            kwargs.setdefault("g1", spec.g1)
        if mode != "efficient_adaptive":
            kwargs.setdefault("f1", spec.f1)
        return cls(mode=mode, **kwargs)

    def step_size(self, n):
        """``gamma_n = gamma0 / n**a`` for ``n >= 1``."""
        return self.gamma0 / n ** self.a


@dataclass(frozen=True)
class RMState:
    """Value snapshot of the recursion after ``n`` observations.

    ``sum_sq_dev`` accumulates ``(theta_hat_k - theta)^2`` and is ``None``
    unless the true shift is known (simulation).
    """

    theta_hat: float
    n: int = 0
    sum_T2: float = 0.0
    projection_count: int = 0
    f1_hat: float = 0.0
    sign_frozen: int | None = None
    sum_sq_dev: float | None = None

    @classmethod
    def initial(cls, config, track_deviation=False):
        return cls(theta_hat=float(config.theta0), sum_sq_dev=0.0 if track_deviation else None)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, record):
        return cls(**record)


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    level: float
    variance_used: float

    @property
    def width(self):
        return self.upper - self.lower

    def covers(self, value):
        return self.lower <= value <= self.upper


def project(x, radius=0.25):
    """Clip ``x`` to ``[-radius, radius]``."""
    if x > radius:
        return radius
    if x < -radius:
        return -radius
    return x


def _check_density(g_at_x, x, g_min):
    if not g_at_x >= g_min:
        raise DensityError(f"g({x!r}) = {g_at_x!r} is below g_min={g_min:g}")


def t_statistic(config, state, x, y, g_at_x):
    """Update statistic ``T_{n+1}`` for one observation."""
    _check_density(g_at_x, x, config.g_min)
    u = TWO_PI * (x - state.theta_hat)
    if config.mode == "nonsymmetric":
        return (config.f1 * math.sin(u) - config.g1 * math.cos(u)) * y / g_at_x
    return math.sin(u) * y / g_at_x


def _direction_and_gain(config, state):
    if config.mode == "symmetric_sign":
        return config.f1_sign, 1.0
    if config.mode == "nonsymmetric":
        return 1, 1.0
    if config.mode == "efficient_known_f1":
        return config.f1_sign, 1.0 / (TWO_PI * abs(config.f1))
    sign = config.f1_sign if state.sign_frozen is None else state.sign_frozen
    return sign, 1.0 / (TWO_PI * max(abs(state.f1_hat), config.sign_freeze_threshold))


def step(config, state, x, y, g_at_x, theta_true=None):
    """Advance the recursion by one observation and return the new state.

    ``theta_true`` is required when the state tracks squared deviations.
    """
    t = t_statistic(config, state, x, y, g_at_x)
    direction, gain = _direction_and_gain(config, state)
    n = state.n + 1
    raw = state.theta_hat + direction * gain * config.step_size(n) * t
    radius = config.projection_radius
    theta_new = project(raw, radius)
    f1_hat = state.f1_hat + (math.cos(TWO_PI * (x - state.theta_hat)) * y / g_at_x - state.f1_hat) / n
    sign_frozen = state.sign_frozen
    if (config.mode == "efficient_adaptive" and sign_frozen is None
            and abs(f1_hat) > config.sign_freeze_threshold):
        sign_frozen = 1 if f1_hat > 0 else -1
    sum_sq_dev = state.sum_sq_dev
    if sum_sq_dev is not None:
        if theta_true is None:
            raise ConfigError("state tracks deviations; theta_true is required")
        sum_sq_dev = sum_sq_dev + (theta_new - theta_true) ** 2
    return RMState(
        theta_hat=theta_new,
        n=n,
        sum_T2=state.sum_T2 + t * t,
        projection_count=state.projection_count + (abs(raw) > radius),
        f1_hat=f1_hat,
        sign_frozen=sign_frozen,
        sum_sq_dev=sum_sq_dev,
    )


def run(config, x, y, g_at_x, state=None, theta_true=None):
    """Stream arrays of observations through the recursion.

    Performs exactly the arithmetic of repeated :func:`step` calls, without
    allocating a state per observation.

    Returns
    -------
    state : RMState
        Final state.
    path : ndarray
        ``theta_hat`` after each observation (length ``len(x)``).
    """
    if state is None:
        state = RMState.initial(config, track_deviation=theta_true is not None)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    g_at_x = np.broadcast_to(np.asarray(g_at_x, dtype=float), x.shape)
    if x.size and not np.min(g_at_x) >= config.g_min:
        i = int(np.argmin(g_at_x))
        _check_density(float(g_at_x[i]), float(x[i]), config.g_min)

    mode = config.mode
    nonsym = mode == "nonsymmetric"
    adaptive = mode == "efficient_adaptive"
    f1c, g1c = config.f1, config.g1
    radius, gamma0, a = config.projection_radius, config.gamma0, config.a
    thr = config.sign_freeze_threshold
    sin, cos = math.sin, math.cos

    theta, n, s2 = state.theta_hat, state.n, state.sum_T2
    count, f1_hat, frozen, ssd = state.projection_count, state.f1_hat, state.sign_frozen, state.sum_sq_dev
    if ssd is not None and theta_true is None:
        raise ConfigError("state tracks deviations; theta_true is required")
    direction, gain = _direction_and_gain(config, state)
    path = []
    append = path.append
    for xi, yi, gi in zip(x.tolist(), y.tolist(), g_at_x.tolist()):
        u = TWO_PI * (xi - theta)
        if nonsym:
            t = (f1c * sin(u) - g1c * cos(u)) * yi / gi
        else:
            t = sin(u) * yi / gi
        if adaptive:
            direction = config.f1_sign if frozen is None else frozen
            gain = 1.0 / (TWO_PI * max(abs(f1_hat), thr))
        n += 1
        raw = theta + direction * gain * (gamma0 / n ** a) * t
        if raw > radius:
            theta_new = radius
        elif raw < -radius:
            theta_new = -radius
        else:
            theta_new = raw
        f1_hat = f1_hat + (cos(u) * yi / gi - f1_hat) / n
        if adaptive and frozen is None and abs(f1_hat) > thr:
            frozen = 1 if f1_hat > 0 else -1
        s2 = s2 + t * t
        count += abs(raw) > radius
        theta = theta_new
        if ssd is not None:
            ssd = ssd + (theta - theta_true) ** 2
        append(theta)
    final = RMState(theta, n, s2, count, f1_hat, frozen, ssd)
    return final, np.asarray(path, dtype=float)


def _working_gain(config, state):
    """Curvature ``h`` of the mean drift at the root and total step scale ``c``."""
    if config.mode == "nonsymmetric":
        return TWO_PI * (config.f1 ** 2 + config.g1 ** 2), config.gamma0
    if config.f1 is not None:
        f1 = config.f1
    else:
        f1 = state.f1_hat
    if f1 == 0:
        raise RateRegimeError("working f1 estimate is zero; variance is undefined")
    h = TWO_PI * abs(f1)
    if config.mode in ("efficient_known_f1", "efficient_adaptive"):
        return h, config.gamma0 / h
    return h, config.gamma0


def _variance_from_moment(config, h, c, moment, n):
    if config.a == 1.0:
        denom = 2.0 * c * h - 1.0
        if denom <= 0:
            raise RateRegimeError(
                f"2*gamma*h = {2.0 * c * h:.4g} <= 1: sqrt(n) regime does not apply (unsupported)"
            )
        return c * c * moment / denom
    # gamma_n = c / n**a with a < 1: Var(theta_n) ~ c * moment / (2 h n**a)
    return c * moment / (2.0 * h) * n ** (1.0 - config.a)


def variance_estimate(state, config):
    """Plug-in estimate of ``n Var(theta_hat_n)``.

    Uses the running second moment of ``T`` in place of ``varphi(theta)``
    (``Psi(theta)`` in non-symmetric mode). With the default ``1/n``
    schedule this is ``(sum_T2/n) / (4 pi |f1| - 1)``. When ``f1`` is not
    configured, the running estimate ``f1_hat`` is used.
    """
    if state.n < 1:
        raise ConfigError("variance_estimate needs at least one step")
    if state.sum_T2 == 0:
        return 0.0
    h, c = _working_gain(config, state)
    return _variance_from_moment(config, h, c, state.sum_T2 / state.n, state.n)


def theoretical_variance(config, spec, n=None):
    """Asymptotic ``n Var(theta_hat_n)`` implied by the model and the config.

    For the default schedule this is ``xi^2(theta)`` in the sign and
    non-symmetric modes and ``varphi(theta) / (4 pi^2 f1^2)`` in the
    efficient modes. ``n`` is needed only when ``a < 1``.
    """
    if config.mode == "nonsymmetric":
        energy = spec.f1 ** 2 + spec.g1 ** 2
        h, c = TWO_PI * energy, config.gamma0
        moment = Psi_quadrature(spec, spec.theta)
    else:
        if not spec.symmetric:
            raise VariantError(f"{config.mode} mode targets symmetric shapes")
        h = TWO_PI * abs(spec.f1)
        c = config.gamma0 / h if config.mode.startswith("efficient") else config.gamma0
        moment = varphi_quadrature(spec, spec.theta)
    if config.a != 1.0 and n is None:
        raise ConfigError("n is required when a < 1")
    return _variance_from_moment(config, h, c, moment, n)


def confidence_interval(state, variance, level=0.95):
    """Normal interval ``theta_hat +/- q * sqrt(variance / n)``."""
    if state.n < 1:
        raise ConfigError("confidence_interval needs n >= 1")
    if not variance >= 0:
        raise ConfigError(f"variance must be non-negative, got {variance!r}")
    if not 0 < level < 1:
        raise ConfigError(f"level must lie in (0, 1), got {level!r}")
    q = NormalDist().inv_cdf(1.0 - (1.0 - level) / 2.0)
    half = q * math.sqrt(variance / state.n)
    return ConfidenceInterval(state.theta_hat - half, state.theta_hat + half, level, variance)


def restart(config, state):
    """Fresh state at ``theta0`` keeping the deviation-tracking flag."""
    return RMState.initial(config, track_deviation=state.sum_sq_dev is not None)
