"""Exponential-interpolation quadrature on the age grid.

On every cell [jh, (j+1)h] a positive profile is replaced by the exponential
C*exp(sigma*a) through its two nodes, and integrals against 1, a, or a linear
weight are taken in closed form.  The results are exact whenever the profile
itself is exponential, which is the case for equilibrium profiles.

The first cell [0, h] is never interpolated from f(0): in the simulator f(0)
is the unknown newborn density.  Instead the interpolant through f(h), f(2h)
is extended over the merged cell [0, 2h].
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import NonPositiveInterior

# Below this |ln(f_{j+1}/f_j)| the cell is treated as constant.
DEGENERATE_LOG_RATIO = 1e-9

_SERIES_CUTOFF = 0.5
_SERIES_TERMS = 17


def _series_coefficients(kind):
    n = np.arange(_SERIES_TERMS)
    factorial = np.cumprod(np.concatenate([[1.0], np.arange(1, _SERIES_TERMS)]))
    if kind == "right":
        # u*exp(x*u): x^n / (n! (n+2))
        return 1.0 / (factorial * (n + 2))
    # (1-u)*exp(x*u): x^n / (n+2)!
    return 1.0 / (factorial * (n + 1) * (n + 2))


_RIGHT_COEFFS = _series_coefficients("right")
_LEFT_COEFFS = _series_coefficients("left")


def _series(x, coeffs):
    # Power table by cumulative product; much cheaper than Horner or ** on short grids.
    x = np.asarray(x, dtype=float)
    powers = np.cumprod(np.broadcast_to(x[..., None], x.shape + (_SERIES_TERMS - 1,)), axis=-1)
    return coeffs[0] + powers @ coeffs[1:]


def _moment_right(x):
    """Integral of u*exp(x*u) over [0, 1]."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < _SERIES_CUTOFF
    xs = np.where(small, 0.0, x)
    with np.errstate(over="ignore", invalid="ignore"):
        closed = (xs * np.exp(xs) - np.expm1(xs)) / np.where(small, 1.0, xs * xs)
    return np.where(small, _series(np.where(small, x, 0.0), _RIGHT_COEFFS), closed)


def _moment_left(x):
    """Integral of (1-u)*exp(x*u) over [0, 1]."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < _SERIES_CUTOFF
    xs = np.where(small, 0.0, x)
    with np.errstate(over="ignore", invalid="ignore"):
        closed = (np.expm1(xs) - xs) / np.where(small, 1.0, xs * xs)
    return np.where(small, _series(np.where(small, x, 0.0), _LEFT_COEFFS), closed)


def _log_ratio(left, right):
    x = np.log(np.asarray(right, dtype=float) / np.asarray(left, dtype=float))
    return np.where(np.abs(x) < DEGENERATE_LOG_RATIO, 0.0, x)


def _linear_weight_cell(f_left, x, width, w_left, w_right):
    """Integral over a cell of width ``width`` of a linear weight times the
    exponential that starts at ``f_left`` and grows by exp(x) across the cell."""
    return width * f_left * (w_left * _moment_left(x) + w_right * _moment_right(x))


class Cell(NamedTuple):
    """One grid cell [j*h, (j+1)*h] with positive end values.

    With ``merged=True`` the cell is the boundary interval [0, 2h] and
    ``left``/``right`` hold f(h) and f(2h).  Fields may be numpy arrays to
    process many cells at once.
    """

    left: float
    right: float
    j: int
    h: float
    merged: bool = False


def exp_interp_params(c: Cell) -> tuple[float, float]:
    """Rate and amplitude of the exponential C*exp(sigma*a) through the cell nodes."""
    sigma = np.log(np.asarray(c.right, dtype=float) / c.left) / c.h
    node = c.h if c.merged else np.asarray(c.j) * c.h
    amplitude = c.left * np.exp(-sigma * node)
    return sigma, amplitude


def _cell_weighted(c: Cell, weight):
    """Integral of weight(a) times the cell interpolant; weight is linear on
    each grid cell and given as a callable of age."""
    x = _log_ratio(c.left, c.right)
    h = c.h
    if c.merged:
        f_zero = c.left * np.exp(-x)
        first = _linear_weight_cell(f_zero, x, h, weight(0.0 * h), weight(h))
        second = _linear_weight_cell(c.left, x, h, weight(h), weight(2 * h))
        return first + second
    a0 = np.asarray(c.j) * h
    return _linear_weight_cell(c.left, x, h, weight(a0), weight(a0 + h))


def cell_integral(c: Cell):
    """Integral of the exponential interpolant over the cell."""
    return _cell_weighted(c, lambda a: np.ones_like(np.asarray(a, dtype=float)))


def age_weighted_integral(c: Cell):
    """Integral of a times the interpolant over the cell."""
    return _cell_weighted(c, lambda a: np.asarray(a, dtype=float))


def reflected_weighted_integral(c: Cell, A2: float = 2.0):
    """Integral of (A2 - a) times the interpolant over the cell."""
    return _cell_weighted(c, lambda a: A2 - np.asarray(a, dtype=float))


def _interior(values: np.ndarray) -> np.ndarray:
    interior = np.asarray(values, dtype=float)[1:]
    if not np.all(np.isfinite(interior)) or np.any(interior <= 0):
        bad = int(np.argmax(~(interior > 0))) + 1
        raise NonPositiveInterior(f"profile must be positive at interior nodes; node {bad} is not")
    return interior


def weighted_boundary_integral(weights, values, h: float) -> float:
    """Integral of a piecewise-linear weight times a positive profile, using
    the merged [0, 2h] cell so that ``values[0]`` is never read."""
    w = np.asarray(weights, dtype=float)
    f = np.asarray(values, dtype=float)
    _interior(f)
    x = _log_ratio(f[1:-1], f[2:])
    f_zero = f[1] * np.exp(-x[0])
    total = _linear_weight_cell(f_zero, x[0], h, w[0], w[1])
    total = total + np.sum(_linear_weight_cell(f[1:-1], x, h, w[1:-1], w[2:]))
    return float(total)


def weighted_log_integral(weights, log_values, h: float) -> float:
    """Integral of a piecewise-linear weight times exp(log_values), all cells.

    Working from logarithms keeps tiny or huge profiles (far-off dilution
    rates during root bracketing) free of underflow in the interpolation.
    """
    w = np.asarray(weights, dtype=float)
    lf = np.asarray(log_values, dtype=float)
    shift = float(np.max(lf))
    x = np.diff(lf)
    x = np.where(np.abs(x) < DEGENERATE_LOG_RATIO, 0.0, x)
    cells = _linear_weight_cell(np.exp(lf[:-1] - shift), x, h, w[:-1], w[1:])
    with np.errstate(over="ignore"):
        return float(np.exp(shift) * np.sum(cells))


def renewal_integral(f, m) -> float:
    """Newborn density: integral of k(a) f(a) over [0, A] without using f(0)."""
    from .model import TriangularBirth

    values = np.asarray(getattr(f, "values", f), dtype=float)
    h = m.h
    interior = _interior(values)
    if isinstance(m.k, TriangularBirth):
        N = m.N
        half = N // 2
        left, right = interior[:-1], interior[1:]
        g = m.k.gain
        merged = age_weighted_integral(Cell(left[0], right[0], 2, h, merged=True))
        j_up = np.arange(2, half)
        j_down = np.arange(half, N)
        rising = age_weighted_integral(Cell(left[j_up - 1], right[j_up - 1], j_up, h))
        falling = reflected_weighted_integral(
            Cell(left[j_down - 1], right[j_down - 1], j_down, h), A2=m.A
        )
        return float(g * (merged + np.sum(rising)) + g * np.sum(falling))
    return weighted_boundary_integral(m.k_values, values, h)


def output_integral(f, m) -> float:
    """Measured output: integral of p(a) f(a) over [0, A] without using f(0)."""
    values = np.asarray(getattr(f, "values", f), dtype=float)
    h = m.h
    interior = _interior(values)
    if m.p_is_constant:
        j = np.arange(2, m.N)
        merged = cell_integral(Cell(interior[0], interior[1], 2, h, merged=True))
        cells = cell_integral(Cell(interior[j - 1], interior[j], j, h))
        return float(m.p * (merged + np.sum(cells)))
    return weighted_boundary_integral(m.p_values, values, h)
