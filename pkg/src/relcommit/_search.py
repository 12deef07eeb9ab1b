import math

import numpy as np

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_min(f, a, b, tol):
    """Minimise a unimodal scalar function on [a, b] until the bracket is below ``tol``."""
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    if fc <= fd:
        return c, fc
    return d, fd


def grid_then_golden(f_vec, f_scalar, lo, hi, n_grid, tol):
    """Grid search followed by golden-section refinement around the best cell.

    ``f_vec`` evaluates an array of abscissae, ``f_scalar`` a single one.
    Returns ``(x, f(x))`` for the minimiser; never worse than the best grid point.
    """
    xs = np.linspace(lo, hi, n_grid)
    ys = f_vec(xs)
    i = int(np.argmin(ys))
    a = xs[max(i - 1, 0)]
    b = xs[min(i + 1, n_grid - 1)]
    x, y = golden_section_min(f_scalar, a, b, tol)
    if ys[i] < y:
        return float(xs[i]), float(ys[i])
    return float(x), float(y)
