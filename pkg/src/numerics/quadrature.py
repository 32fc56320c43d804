"""Quadrature helpers: fixed Gauss rules, cancellation-free power differences and the
adaptive time integrals used by the Duhamel and moment computations."""

import logging
from functools import lru_cache
from typing import Callable, Iterable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate

logger = logging.getLogger(__name__)


@lru_cache(maxsize=32)
def _reference_rule(order: int) -> tuple:
    x, w = leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(order: int, lo, hi):
    """Gauss–Legendre nodes and weights mapped to [lo, hi].

    Scalar bounds give arrays of shape (order,). Array bounds broadcast the rule
    along a trailing axis.
    """
    x, w = _reference_rule(order)
    lo, hi = np.broadcast_arrays(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
    lo, hi = lo[..., None], hi[..., None]
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def power_difference(r0, width, q: float):
    """r1**q - r0**q with r1 = r0 + width, computed without cancellation (r0 > 0)."""
    r0 = np.asarray(r0, dtype=float)
    return r0 ** q * np.expm1(q * np.log1p(width / r0))


def adaptive_integral(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    abs_tol: float = 1e-10,
    rel_tol: float = 1e-10,
    points: Optional[Iterable[float]] = None,
    limit: int = 400,
) -> float:
    """Adaptive Gauss–Kronrod integral of a scalar function on [lo, hi]."""
    if hi <= lo:
        return 0.0
    breaks = None
    if points is not None:
        breaks = sorted(p for p in points if lo < p < hi)
        if not breaks:
            breaks = None
    value, err = integrate.quad(f, lo, hi, epsabs=abs_tol, epsrel=rel_tol, limit=limit, points=breaks)
    if err > 100 * max(abs_tol, rel_tol * abs(value)):
        logger.debug("quad error estimate %.2e on [%g, %g] above tolerance", err, lo, hi)
    return float(value)
