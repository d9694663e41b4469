"""Adaptive Gauss-Legendre quadrature with a log-domain front end.

The integrands that show up here are Gibbs factors exp(+-(something)/nu^2)
whose dynamic range far exceeds double precision.  All such integrals are
evaluated as  shift + log(integral of exp(log_f - shift))  with the shift
taken at the peak of the integrand, so only ratios relative to the peak are
ever represented in the linear domain.

The core integrator is composite 15-point Gauss-Legendre with bisection
refinement: a panel is accepted when splitting it changes its value by less
than its share of the global tolerance.  Panels can be recorded so that
cumulative tables (for the transition weights) reuse the same mesh.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import QuadratureError

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(15)


def _gl15(f: Callable, a: float, b: float) -> float:
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    return half * float(np.dot(_GL_WEIGHTS, f(mid + half * _GL_NODES)))


@dataclass(frozen=True)
class Panel:
    """One accepted subinterval of an adaptive integration."""

    a: float
    b: float
    value: float


def adaptive_gl(
    f: Callable,
    a: float,
    b: float,
    rel_tol: float = 1e-10,
    max_depth: int = 40,
    record_panels: bool = False,
):
    """Integrate a vectorized callable over [a, b].

    Returns the integral, or ``(integral, panels)`` with the accepted panels
    in left-to-right order when ``record_panels`` is set.  Raises
    :class:`QuadratureError` if some panel fails to converge within
    ``max_depth`` bisections.
    """
    if not b > a:
        raise QuadratureError(f"empty or reversed interval [{a}, {b}]")
    first = _gl15(f, a, b)
    # Seed the global error budget with a coarse magnitude estimate; it is
    # only used for scaling, not as the final value.
    coarse = max(abs(first), 1e-300)
    panels: list[Panel] = []
    total = 0.0

    stack = [(a, b, first, 0, rel_tol * coarse)]
    while stack:
        pa, pb, whole, depth, tol = stack.pop()
        mid = 0.5 * (pa + pb)
        left = _gl15(f, pa, mid)
        right = _gl15(f, mid, pb)
        better = left + right
        if abs(better - whole) <= tol:
            total += better
            if record_panels:
                panels.append(Panel(pa, mid, left))
                panels.append(Panel(mid, pb, right))
            continue
        if depth >= max_depth:
            raise QuadratureError(
                f"panel [{pa}, {pb}] did not converge at depth {depth}"
            )
        stack.append((mid, pb, right, depth + 1, 0.5 * tol))
        stack.append((pa, mid, left, depth + 1, 0.5 * tol))

    if record_panels:
        panels.sort(key=lambda p: p.a)
        return total, panels
    return total


def refine_panels(f: Callable, panels: Sequence[Panel]) -> float:
    """Re-evaluate a recorded mesh with every panel bisected once.

    Used by convergence checks: for a resolved integrand the refined value
    agrees with the adaptive one to roundoff.
    """
    total = 0.0
    for p in panels:
        mid = 0.5 * (p.a + p.b)
        total += _gl15(f, p.a, mid) + _gl15(f, mid, p.b)
    return total


def log_integral(
    log_f: Callable,
    a: float,
    b: float,
    shift: float | None = None,
    rel_tol: float = 1e-10,
    max_depth: int = 40,
    record_panels: bool = False,
):
    """Return log of the integral of exp(log_f) over [a, b].

    ``shift`` should be (close to) the maximum of ``log_f`` on the interval;
    when omitted it is estimated from a dense sample.  With the shift in
    place the linear-domain integrand is <= 1 near the peak and underflows
    harmlessly to zero in the tails.
    """
    if shift is None:
        sample = np.asarray(log_f(np.linspace(a, b, 257)), dtype=float)
        shift = float(np.max(sample))

    def f(x):
        return np.exp(np.asarray(log_f(x), dtype=float) - shift)

    out = adaptive_gl(f, a, b, rel_tol=rel_tol, max_depth=max_depth,
                      record_panels=record_panels)
    if record_panels:
        value, panels = out
    else:
        value, panels = out, None
    if not value > 0.0:
        raise QuadratureError(
            f"integral of exp-integrand on [{a}, {b}] is not positive"
        )
    log_value = shift + float(np.log(value))
    if record_panels:
        return log_value, panels
    return log_value
