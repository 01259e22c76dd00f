"""Linear integral delay equation x(t) = int_0^A phi(a) x(t-a) da.

The kernel is sampled on a uniform lag grid and discretized with trapezoid
weights.  The ergodic projection is evaluated with tail weights built from
those same trapezoid weights, so that it is conserved exactly (to rounding)
by the discrete solver and maps constants to themselves.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    BadDelta,
    GapNotContractive,
    IncompatibleHistory,
    NoContraction,
    SingularStep,
    ValidationError,
)
from .profiles import History

COMPATIBILITY_TOL = 1e-6
GAP_MARGIN = 1e-9
REFINE = 8


def trapezoid_weights(n_cells: int) -> np.ndarray:
    w = np.ones(n_cells + 1)
    w[0] = w[-1] = 0.5
    return w


@dataclass(frozen=True, eq=False)
class Kernel:
    """A delay kernel phi sampled at lags a = j*h, j = 0..N."""

    h: float
    phi: np.ndarray

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        if phi.ndim != 1 or phi.size < 5:
            raise ValidationError("kernel needs at least 4 cells")
        if not np.all(np.isfinite(phi)):
            raise ValidationError("kernel samples must be finite")
        if not self.h > 0:
            raise ValidationError("grid step must be positive")
        phi.flags.writeable = False
        object.__setattr__(self, "phi", phi)
        if not self.mean_age > 0:
            raise ValidationError("kernel must have positive first moment")

    @classmethod
    def from_profile(cls, profile, normalize: bool = False) -> "Kernel":
        kern = cls(profile.h, profile.values)
        return kern.normalized() if normalize else kern

    @classmethod
    def uniform(cls, A: float, h: float, value: float | None = None) -> "Kernel":
        n = int(round(A / h))
        return cls(h, np.full(n + 1, 1.0 / A if value is None else value))

    def normalized(self) -> "Kernel":
        """Rescale so the discrete mass is exactly one."""
        return Kernel(self.h, self.phi / self.mass)

    @property
    def N(self) -> int:
        return self.phi.size - 1

    @property
    def A(self) -> float:
        return self.N * self.h

    @property
    def lags(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.h

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights c_j = h w_j phi_j."""
        return self.h * trapezoid_weights(self.N) * self.phi

    @cached_property
    def mass(self) -> float:
        """Discrete integral of phi."""
        return float(np.sum(self.weights))

    @cached_property
    def _tails(self) -> np.ndarray:
        # S_j = sum_{l >= j} c_l for j = 0..N+1, with S_{N+1} = 0.
        return np.concatenate([np.cumsum(self.weights[::-1])[::-1], [0.0]])

    @cached_property
    def projection_weights(self) -> np.ndarray:
        """Weights of the conserved functional; they approximate the tail
        integral of phi at each lag to second order."""
        s = self._tails
        omega = 0.5 * (s[:-1] + s[1:])
        omega[0] = 0.5 * s[1]
        return omega

    @cached_property
    def mean_age(self) -> float:
        """Discrete counterpart of int a phi(a) da."""
        return float(self.h * np.sum(self.projection_weights))

    @property
    def r(self) -> float:
        return 1.0 / self.mean_age

    @cached_property
    def tail(self) -> np.ndarray:
        """int_a^A phi(s) ds at the nodes, by reverse cumulative trapezoid."""
        cells = 0.5 * self.h * (self.phi[:-1] + self.phi[1:])
        return np.concatenate([np.cumsum(cells[::-1])[::-1], [0.0]])

    def integral_to(self, delta: float) -> float:
        """int_0^delta phi(a) da for the piecewise-linear interpolant."""
        a = self.lags
        cells = 0.5 * self.h * (self.phi[:-1] + self.phi[1:])
        cumulative = np.concatenate([[0.0], np.cumsum(cells)])
        j = min(int(np.floor(delta / self.h + 1e-12)), self.N)
        if j >= self.N:
            return float(cumulative[-1])
        frac = delta - a[j]
        slope = (self.phi[j + 1] - self.phi[j]) / self.h
        return float(cumulative[j] + self.phi[j] * frac + 0.5 * slope * frac**2)


def _check_grid(kern: Kernel, x: History) -> None:
    if x.N != kern.N or abs(x.h - kern.h) > 1e-12 * kern.h:
        raise ValidationError("history and kernel must share the lag grid")


def compatibility_residual(kern: Kernel, x: History) -> float:
    """x(0) minus the quadrature of int phi(a) x(-a) da."""
    _check_grid(kern, x)
    return float(x.values[0] - np.dot(kern.weights, x.values))


def compatible_history(kern: Kernel, past) -> History:
    """History whose current value is fixed by the delay equation.

    ``past`` holds x(-a) at lags h..A (lag-first, N values); x(0) is solved
    from the discrete equation.
    """
    past = np.asarray(past, dtype=float)
    c = kern.weights
    if c[0] >= 1:
        raise SingularStep("zero-lag weight reaches one; refine the grid")
    current = np.dot(c[1:], past) / (1.0 - c[0])
    return History(kern.h, np.concatenate([[current], past]), compatible=True)


@dataclass(frozen=True, eq=False)
class IDESolution:
    """Path of an IDE solution on t = -A .. t_end at step h."""

    h: float
    N: int
    path: np.ndarray

    @property
    def times(self) -> np.ndarray:
        """Times t >= 0 at which new values were computed (t = 0 included)."""
        return np.arange(self.path.size - self.N) * self.h

    @property
    def values(self) -> np.ndarray:
        return self.path[self.N:]

    def history(self, i: int) -> History:
        """The A-history at time i*h."""
        window = self.path[i : i + self.N + 1]
        return History(self.h, window[::-1], compatible=True)

    def histories(self):
        for i in range(self.values.size):
            yield self.history(i)


def ide_solve(kern: Kernel, x0: History, t_end: float) -> IDESolution:
    """March the trapezoid discretization of the delay equation to ``t_end``.

    At each step the unknown current value also appears under the integral
    with weight c_0, so it is obtained from a scalar linear equation.
    """
    _check_grid(kern, x0)
    n_steps = int(round(t_end / kern.h))
    if n_steps < 0 or abs(n_steps * kern.h - t_end) > 1e-9 * max(1.0, t_end):
        raise ValidationError("t_end must be a nonnegative multiple of the grid step")
    c = kern.weights
    if c[0] >= 1:
        raise SingularStep(f"zero-lag weight {c[0]:.3g} reaches one; refine the grid")
    scale = max(1.0, float(np.max(np.abs(x0.values))))
    residual = compatibility_residual(kern, x0)
    if abs(residual) > COMPATIBILITY_TOL * scale:
        raise IncompatibleHistory(f"x(0) misses the delay equation by {residual:.3g}")

    N = kern.N
    path = np.empty(N + 1 + n_steps)
    path[: N + 1] = x0.values[::-1]
    # Reversed lag weights so a forward window dot product gives sum_j c_j x(t - jh).
    past_weights = c[1:][::-1] / (1.0 - c[0])
    for i in range(n_steps):
        k = N + 1 + i
        path[k] = np.dot(past_weights, path[k - N : k])
    return IDESolution(kern.h, N, path)


def ergodic_projection(kern: Kernel, x: History) -> float:
    """The conserved weight P(x); P maps a constant history to its value."""
    _check_grid(kern, x)
    return float(kern.r * kern.h * np.dot(kern.projection_weights, x.values))


def _contraction_integrand(kern: Kernel, lam: float, refine: int):
    """Nodes and values of phi - r lam tail on a grid that is refined inside
    every cell where this signed integrand changes sign."""
    a = kern.lags
    phi = kern.phi
    tail = kern.tail
    rl = kern.r * lam
    signed = phi - rl * tail
    ages, values = [a[:1]], [signed[:1]]
    for j in range(kern.N):
        if signed[j] * signed[j + 1] < 0:
            s = np.linspace(0.0, 1.0, refine + 1)[1:]
            local_phi = phi[j] + (phi[j + 1] - phi[j]) * s
            # Tail of the linear interpolant from a_j + s*h to the right node.
            local_tail = tail[j + 1] + kern.h * (1 - s) * 0.5 * (local_phi + phi[j + 1])
            ages.append(a[j] + s * kern.h)
            values.append(local_phi - rl * local_tail)
        else:
            ages.append(a[j + 1 : j + 2])
            values.append(signed[j + 1 : j + 2])
    return np.concatenate(ages), np.concatenate(values)


def _abs_weighted_integral(ages, signed, sigma: float) -> float:
    """Integral of |F| exp(sigma a) where F is linear between nodes; pieces
    that cross zero are split at the crossing."""
    weight = np.exp(sigma * ages)
    total = 0.0
    for i in range(ages.size - 1):
        f0, f1 = signed[i], signed[i + 1]
        a0, a1 = ages[i], ages[i + 1]
        if f0 * f1 < 0:
            root = a0 + (a1 - a0) * f0 / (f0 - f1)
            total += 0.5 * (root - a0) * abs(f0) * weight[i]
            total += 0.5 * (a1 - root) * abs(f1) * weight[i + 1]
        else:
            total += 0.5 * (a1 - a0) * (abs(f0) * weight[i] + abs(f1) * weight[i + 1])
    return total


def weighted_contraction_integral(kern: Kernel, lam: float, sigma: float = 0.0) -> float:
    """int_0^A |phi(a) - r lam int_a^A phi| exp(sigma a) da."""
    ages, signed = _contraction_integrand(kern, lam, REFINE)
    return _abs_weighted_integral(ages, signed, sigma)


def kernel_contraction_gap(kern: Kernel, lam: float) -> float:
    """The gap g(lam); a value below one certifies exponential convergence."""
    if lam < 0:
        raise ValidationError("lambda must be nonnegative")
    return weighted_contraction_integral(kern, lam, 0.0)


def _require_normalized(kern: Kernel) -> None:
    if np.any(kern.phi < 0):
        raise ValidationError("contraction search needs a nonnegative kernel")
    if abs(kern.mass - 1.0) > 1e-9:
        raise ValidationError(f"kernel mass is {kern.mass:.12g}, expected 1")


def find_contraction_lambda(kern: Kernel, n_scan: int = 200, width: float = 1e-6):
    """Minimize g over a log-spaced scan of (0, 2/r] refined by golden section.

    Returns (lambda, gap).  Raises NoContraction when the smallest gap found
    is not below one.
    """
    _require_normalized(kern)
    hi = 2.0 / kern.r
    grid = np.geomspace(1e-4 / kern.r, hi, n_scan)
    gaps = np.array([kernel_contraction_gap(kern, lam) for lam in grid])
    best = int(np.argmin(gaps))
    left = grid[max(best - 1, 0)]
    right = grid[min(best + 1, n_scan - 1)]

    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    x1 = right - invphi * (right - left)
    x2 = left + invphi * (right - left)
    g1, g2 = kernel_contraction_gap(kern, x1), kernel_contraction_gap(kern, x2)
    while right - left > width:
        if g1 <= g2:
            right, x2, g2 = x2, x1, g1
            x1 = right - invphi * (right - left)
            g1 = kernel_contraction_gap(kern, x1)
        else:
            left, x1, g1 = x1, x2, g2
            x2 = left + invphi * (right - left)
            g2 = kernel_contraction_gap(kern, x2)
    candidates = [(gaps[best], grid[best]), (g1, x1), (g2, x2)]
    gap, lam = min(candidates)
    if gap >= 1.0 - GAP_MARGIN:
        raise NoContraction(f"smallest contraction gap is {gap:.6g}", float(gap))
    return float(lam), float(gap)


def sigma_rate(kern: Kernel, lam: float, tol: float = 1e-12) -> float:
    """Largest sigma with int |phi - r lam tail| exp(sigma a) da <= 1 - 1e-9."""
    gap = kernel_contraction_gap(kern, lam)
    if not gap < 1.0:
        raise GapNotContractive(f"gap {gap:.6g} at lambda={lam:.6g} is not below one")
    target = 1.0 - GAP_MARGIN
    lo = -np.log(gap) / kern.A
    hi = 10.0 * lo

    def excess(s):
        return weighted_contraction_integral(kern, lam, s) - target

    if excess(lo) > 0:
        return float(lo)
    if excess(hi) <= 0:
        return float(hi)
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if excess(mid) <= 0:
            lo = mid
        else:
            hi = mid
    return float(lo)


def lyapunov_V(kern: Kernel, x: History, sigma: float) -> float:
    """Weighted sup distance from x to its ergodic projection."""
    p = ergodic_projection(kern, x)
    return float(np.max(np.exp(-sigma * x.lags) * np.abs(x.values - p)))


def lyapunov_W_sup(x: History, sigma: float) -> float:
    """Weighted sup norm max_a exp(-sigma a) |x(-a)|."""
    return float(np.max(np.exp(-sigma * x.lags) * np.abs(x.values)))


def envelope_factor(mass: float, head: float, delta: float, A: float, t: float) -> float:
    """Growth factor ((L - c)/(1 - c))^(1 + t/h) with h = min(delta, A - delta)."""
    if head >= 1:
        raise BadDelta(f"kernel mass on [0, delta] is {head:.6g}, must be below one")
    step = min(delta, A - delta)
    if not step > 0:
        raise ValidationError("delta must lie strictly inside (0, A)")
    return ((mass - head) / (1.0 - head)) ** (1.0 + t / step)


def envelope_bounds(kern: Kernel, x0: History, delta: float, t: float) -> tuple[float, float]:
    """Lower and upper bounds for x(t) from the history's extremes."""
    if np.any(kern.phi < 0):
        raise ValidationError("envelope bounds need a nonnegative kernel")
    if kern.mass < 1.0 - 1e-12:
        raise ValidationError("envelope bounds need kernel mass at least one")
    factor = envelope_factor(kern.mass, kern.integral_to(delta), delta, kern.A, t)
    low, high = float(np.min(x0.values)), float(np.max(x0.values))
    return min(low, factor * low), max(high, factor * high)
