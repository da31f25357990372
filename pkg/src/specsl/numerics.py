"""Adaptive quadrature and monotone-function inversion.

Small, dependency-free numerical kernels used by the schedule reparametrization:
an adaptive Simpson integrator with an absolute-error budget and a bisection
solver for strictly increasing functions.
"""
from __future__ import annotations

from collections.abc import Callable


class QuadratureError(RuntimeError):
    """Adaptive refinement failed to meet the requested tolerance."""


def adaptive_simpson(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float = 1e-10,
    max_depth: int = 48,
) -> float:
    """Integrate ``f`` over ``[a, b]`` to absolute tolerance ``tol``.

    Classic adaptive Simpson refinement: a subinterval is accepted when the
    two-panel estimate agrees with its one-panel estimate to within 15 * tol
    (the Richardson error estimate for Simpson's rule), and the extrapolated
    correction is applied. The tolerance budget is halved on each split, so
    the accumulated error is bounded by ``tol``.
    """
    if tol <= 0.0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    if a == b:
        return 0.0
    if b < a:
        return -adaptive_simpson(f, b, a, tol, max_depth)
    fa, fb = f(a), f(b)
    mid = 0.5 * (a + b)
    fmid = f(mid)
    whole = (b - a) / 6.0 * (fa + 4.0 * fmid + fb)
    return _refine(f, a, b, fa, fmid, fb, whole, tol, max_depth)


def _refine(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    err = left + right - whole
    if abs(err) <= 15.0 * tol:
        return left + right + err / 15.0
    if depth <= 0:
        raise QuadratureError(
            f"no convergence on [{a!r}, {b!r}]: residual {abs(err):.3e} "
            f"exceeds 15*tol = {15.0 * tol:.3e} at maximum depth"
        )
    half = 0.5 * tol
    return _refine(f, a, m, fa, flm, fm, left, half, depth - 1) + _refine(
        f, m, b, fm, frm, fb, right, half, depth - 1
    )


def bisect_increasing(
    f: Callable[[float], float],
    target: float,
    lo: float,
    hi: float,
    tol: float = 1e-10,
) -> float:
    """Solve ``f(t) = target`` for nondecreasing ``f`` on ``[lo, hi]``.

    Plain bisection to an argument tolerance of ``tol``. The bracket must be
    valid: ``f(lo) <= target <= f(hi)`` up to ``tol`` slack.
    """
    if not lo <= hi:
        raise ValueError(f"invalid bracket [{lo}, {hi}]")
    flo, fhi = f(lo), f(hi)
    if target < flo - tol or target > fhi + tol:
        raise ValueError(
            f"target {target!r} outside bracket values [{flo!r}, {fhi!r}]"
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
