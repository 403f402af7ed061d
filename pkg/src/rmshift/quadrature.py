"""Composite Gauss-Legendre quadrature with panel doubling."""

from functools import lru_cache

import numpy as np

from .errors import EvaluationError, QuadratureError


@lru_cache(maxsize=8)
def _reference_rule(order):
    return np.polynomial.legendre.leggauss(order)


def _composite(fn, edges, order):
    nodes, weights = _reference_rule(order)
    left = edges[:-1, None]
    half = 0.5 * (edges[1:] - edges[:-1])[:, None]
    x = left + half * (nodes[None, :] + 1.0)
    values = np.asarray(fn(x.ravel()), dtype=float).reshape(x.shape)
    if not np.all(np.isfinite(values)):
        raise EvaluationError("integrand returned non-finite values")
    return float(np.sum(half * values * weights[None, :]))


def integrate(fn, a=-0.5, b=0.5, tol=1e-12, order=20, panels=4,
              max_panels=4096, breakpoints=None):
    """Integrate a vectorized function over ``[a, b]``.

    The interval (split at optional ``breakpoints``) is divided into equal
    panels, each integrated with an ``order``-point Gauss-Legendre rule. The
    panel count is doubled until two successive estimates agree to
    ``tol * max(1, |I|)``.

    Parameters
    ----------
    fn : callable
        Maps a 1-d array of abscissae to an array of the same shape.
    a, b : float
        Integration bounds.
    tol : float
        Target absolute tolerance (relative above magnitude 1).
    order : int
        Nodes per panel.
    panels : int
        Initial number of panels per breakpoint segment.
    max_panels : int
        Give up once the panel count per segment exceeds this.
    breakpoints : sequence of float, optional
        Interior points where the integrand may be non-smooth.

    Returns
    -------
    value : float
    error : float
        Difference between the last two refinement levels.

    Raises
    ------
    QuadratureError
        If the refinement does not converge.
    """
    cuts = [a, b]
    if breakpoints is not None:
        inner = [float(p) for p in breakpoints if a < p < b]
        cuts = [a] + sorted(set(inner)) + [b]
    cuts = np.asarray(cuts, dtype=float)

    def estimate(m):
        edges = np.concatenate(
            [np.linspace(lo, hi, m + 1)[:-1] for lo, hi in zip(cuts[:-1], cuts[1:])]
            + [cuts[-1:]]
        )
        return _composite(fn, edges, order)

    m = panels
    previous = estimate(m)
    while m < max_panels:
        m *= 2
        current = estimate(m)
        err = abs(current - previous)
        if err <= tol * max(1.0, abs(current)):
            return current, err
        previous = current
    raise QuadratureError(
        f"quadrature did not converge on [{a}, {b}] with {m} panels "
        f"(residual {err:.3e})",
        residual=err,
    )
