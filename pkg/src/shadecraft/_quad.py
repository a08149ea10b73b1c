"""Adaptive Gauss-Legendre quadrature used by the payoff and shading engines.

Integrands must accept and return numpy arrays.
"""

import numpy as np

_NODES15, _WEIGHTS15 = np.polynomial.legendre.leggauss(15)
_NODES10, _WEIGHTS10 = np.polynomial.legendre.leggauss(10)


def _panel(f, a, b):
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    return half * float(np.dot(_WEIGHTS15, f(mid + half * _NODES15)))


def _refine(f, a, b, whole, tol, depth, budget):
    mid = 0.5 * (a + b)
    left = _panel(f, a, mid)
    right = _panel(f, mid, b)
    total = left + right
    budget[0] -= 2
    # the floor keeps child tolerances meaningful at machine precision
    if depth <= 0 or budget[0] <= 0 or abs(total - whole) <= max(tol, 4e-16 * abs(total)):
        return total
    child_tol = max(0.5 * tol, 1e-16 * abs(total))
    return (_refine(f, a, mid, left, child_tol, depth - 1, budget)
            + _refine(f, mid, b, right, child_tol, depth - 1, budget))


def integrate(f, a, b, rel_tol=1e-9, abs_tol=1e-13, breakpoints=(), max_depth=48,
              max_panels=100000):
    """Integrate f over [a, b], splitting at interior breakpoints (kinks)."""
    if not b > a:
        return 0.0
    pts = [a] + sorted(p for p in set(breakpoints) if a < p < b) + [b]
    rough = sum(abs(_panel(f, lo, hi)) for lo, hi in zip(pts[:-1], pts[1:]))
    total = 0.0
    budget = [max_panels]
    for lo, hi in zip(pts[:-1], pts[1:]):
        tol = max(abs_tol, rel_tol * rough) * (hi - lo) / (b - a)
        total += _refine(f, lo, hi, _panel(f, lo, hi), tol, max_depth, budget)
    return total


def panel_integrals(f, knots):
    """Fixed 10-point Gauss-Legendre integral of f over each knot interval.

    Returns an array of length len(knots) - 1. Accurate to machine precision
    for integrands that are smooth within each interval.
    """
    knots = np.asarray(knots, dtype=float)
    mids = 0.5 * (knots[1:] + knots[:-1])
    halfs = 0.5 * (knots[1:] - knots[:-1])
    pts = mids[:, None] + halfs[:, None] * _NODES10[None, :]
    vals = f(pts.ravel()).reshape(pts.shape)
    return halfs * (vals @ _WEIGHTS10)
