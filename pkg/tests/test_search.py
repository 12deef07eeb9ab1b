import math

import numpy as np
from hypothesis import given, strategies as st

from relcommit._search import golden_section_min, grid_then_golden


@given(st.floats(-5.0, 5.0), st.floats(0.1, 10.0))
def test_golden_section_finds_parabola_vertex(x0, k):
    x, fx = golden_section_min(lambda x: k * (x - x0) ** 2, -10.0, 10.0, 1e-9)
    assert abs(x - x0) < 1e-6
    assert fx < 1e-10 * max(k, 1.0)


def test_grid_then_golden_handles_multimodal():
    f = lambda x: np.cos(3 * x) + 0.1 * x  # noqa: E731
    x, fx = grid_then_golden(f, lambda x: float(f(x)), 0.0, 10.0, 1000, 1e-10)
    xs = np.linspace(0.0, 10.0, 1_000_001)
    assert fx <= f(xs).min() + 1e-9
    assert math.isclose(fx, float(f(x)))


def test_grid_then_golden_boundary_minimum():
    x, fx = grid_then_golden(lambda x: x, lambda x: x, 2.0, 3.0, 100, 1e-9)
    assert x == 2.0 and fx == 2.0
