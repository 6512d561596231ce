"""Brute-force numerical cross-checks for the closed forms in vogellab.states.

Everything here is deliberately plain: uniform grids and the trapezoidal rule.
Only the test suite uses these functions.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .states import FockDiagonalState, marginal_pdf, wigner

DEFAULT_HALF_WIDTH = 8.0
DEFAULT_STEP = 1.0 / 512.0
MAX_MOMENT_ORDER = 8


@dataclass(frozen=True)
class TabulatedDensity:
    """Density sampled on a uniform grid over [-L, L]."""

    grid: np.ndarray
    values: np.ndarray
    step: float

    def __post_init__(self):
        if self.grid.shape != self.values.shape:
            raise ValueError("grid and values must have the same shape")
        if np.any(self.values < 0.0):
            raise ValueError("density values must be non-negative")

    @classmethod
    def from_state(
        cls,
        state: FockDiagonalState,
        half_width: float = DEFAULT_HALF_WIDTH,
        step: float = DEFAULT_STEP,
    ) -> "TabulatedDensity":
        count = int(round(2.0 * half_width / step))
        grid = np.linspace(-half_width, half_width, count + 1)
        values = np.clip(marginal_pdf(state, grid), 0.0, None)
        return cls(grid=grid, values=values, step=float(grid[1] - grid[0]))

    def integral(self) -> float:
        return float(trapezoid(self.values, self.grid))


def numeric_char_fn(density: TabulatedDensity, nu: float) -> complex:
    """Trapezoidal integral of density(x) exp(i nu x)."""
    phase = nu * density.grid
    re = trapezoid(density.values * np.cos(phase), density.grid)
    im = trapezoid(density.values * np.sin(phase), density.grid)
    return complex(re, im)


def numeric_marginal_from_wigner(
    state: FockDiagonalState,
    x: float,
    half_width: float = DEFAULT_HALF_WIDTH,
    step: float = DEFAULT_STEP,
) -> float:
    """Integrate W(x, p) over p."""
    count = int(math.ceil(2.0 * half_width / step))
    p = np.linspace(-half_width, half_width, count + 1)
    return float(trapezoid(wigner(state, np.full_like(p, x), p), p))


def numeric_moment(density: TabulatedDensity, order: int) -> float:
    """Trapezoidal integral of x^order density(x)."""
    if order < 0:
        raise ValueError(f"moment order must be non-negative, got {order}")
    if order > MAX_MOMENT_ORDER:
        raise ValueError(
            f"moment order {order} unsupported: truncation error unbounded beyond "
            f"order {MAX_MOMENT_ORDER} on the tabulated support"
        )
    return float(trapezoid(density.grid**order * density.values, density.grid))
