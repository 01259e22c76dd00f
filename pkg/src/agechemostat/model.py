"""Chemostat model data, its equilibrium, and the logarithmic state transform."""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .errors import NonPositiveInput, NonPositiveProfile, NoRoot, ValidationError
from .ide import Kernel, ergodic_projection
from .profiles import AgeProfile, History
from .quadrature import weighted_log_integral

RESIDUAL_TOL = 1e-10
BRACKET_LIMIT = 1e3


@dataclass(frozen=True)
class TriangularBirth:
    """Birth modulus gain*a on [0, A/2] and gain*(A - a) on (A/2, A]."""

    gain: float

    def sample(self, ages: np.ndarray, A: float) -> np.ndarray:
        return self.gain * np.where(ages <= 0.5 * A, ages, A - ages)


def _grid_size(A: float, h: float) -> int:
    n = int(round(A / h))
    if n < 4 or abs(n * h - A) > 1e-12 * max(1.0, A):
        raise ValidationError(f"grid step {h} must divide A={A} into at least 4 cells")
    return n


def _as_table(value, n: int, name: str):
    if np.isscalar(value):
        return float(value)
    arr = np.array(value, dtype=float)
    if arr.shape != (n + 1,):
        raise ValidationError(f"{name} table needs {n + 1} samples, got {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Everything that defines the age-structured chemostat.

    ``mu`` and ``p`` are constants or tables on the age grid; ``k`` is a
    ``TriangularBirth`` or a table.  ``D_star`` may be left unset and filled
    in with ``with_equilibrium``.  ``M_scale`` fixes the equilibrium profile
    f*(a) = M_scale * exp(-D* a - int_0^a mu).
    """

    A: float
    h: float
    mu: float | np.ndarray
    k: TriangularBirth | np.ndarray
    p: float | np.ndarray = 1.0
    D_min: float = 0.5
    D_max: float = 1.5
    D_star: float | None = None
    M_scale: float = 1.0

    def __post_init__(self):
        if not self.A > 0:
            raise ValidationError("A must be positive")
        n = _grid_size(self.A, self.h)
        object.__setattr__(self, "mu", _as_table(self.mu, n, "mu"))
        object.__setattr__(self, "p", _as_table(self.p, n, "p"))
        if not isinstance(self.k, TriangularBirth):
            object.__setattr__(self, "k", _as_table(self.k, n, "k"))
        elif n % 2:
            raise ValidationError("triangular birth modulus needs an even number of cells")
        if np.any(np.asarray(self.mu) < 0):
            raise ValidationError("mortality must be nonnegative")
        if np.any(self.k_values < 0) or not np.sum(self.k_values) > 0:
            raise ValidationError("birth modulus must be nonnegative with positive mass")
        if np.any(self.p_values < 0) or not np.sum(self.p_values) > 0:
            raise ValidationError("output weight must be nonnegative with positive mass")
        if not 0 < self.D_min < self.D_max:
            raise ValidationError("need 0 < D_min < D_max")
        if self.D_star is not None and not self.D_min < self.D_star < self.D_max:
            raise ValidationError(
                f"D*={self.D_star:.6g} must lie strictly inside [{self.D_min}, {self.D_max}]"
            )
        if not self.M_scale > 0:
            raise ValidationError("M_scale must be positive")

    @property
    def N(self) -> int:
        return int(round(self.A / self.h))

    @property
    def ages(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.h

    @property
    def mu_is_constant(self) -> bool:
        return np.isscalar(self.mu)

    @property
    def p_is_constant(self) -> bool:
        return np.isscalar(self.p)

    @cached_property
    def k_values(self) -> np.ndarray:
        if isinstance(self.k, TriangularBirth):
            return self.k.sample(self.ages, self.A)
        return np.asarray(self.k)

    @cached_property
    def p_values(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.p, dtype=float), (self.N + 1,))

    @cached_property
    def cumulative_mortality(self) -> np.ndarray:
        """int_0^a mu at the nodes: exact for constant mu, trapezoid otherwise."""
        if self.mu_is_constant:
            return self.mu * self.ages
        mu = np.asarray(self.mu)
        cells = 0.5 * self.h * (mu[:-1] + mu[1:])
        return np.concatenate([[0.0], np.cumsum(cells)])

    @cached_property
    def cell_mortality(self) -> np.ndarray:
        """int of mu over each cell [(j-1)h, jh], j = 1..N."""
        return np.diff(self.cumulative_mortality)

    def require_equilibrium(self) -> float:
        if self.D_star is None:
            raise ValidationError("equilibrium dilution has not been solved")
        return self.D_star

    def with_equilibrium(self) -> "ModelParams":
        return replace(self, D_star=solve_equilibrium_dilution(self))

    def with_setpoint(self, y_star: float) -> "ModelParams":
        return replace(self, M_scale=setpoint_scale(y_star, self))

    @cached_property
    def log_survival(self) -> np.ndarray:
        """-(D* a + int_0^a mu), the log of f*/M_scale."""
        return -(self.require_equilibrium() * self.ages + self.cumulative_mortality)

    @cached_property
    def f_star(self) -> np.ndarray:
        return self.M_scale * np.exp(self.log_survival)

    @cached_property
    def kernel(self) -> Kernel:
        """Normalized birth kernel as a delay-equation kernel."""
        return Kernel(self.h, self.k_values * np.exp(self.log_survival))

    @cached_property
    def y_star(self) -> float:
        """Output value at the equilibrium profile f*."""
        return self.M_scale * weighted_log_integral(self.p_values, self.log_survival, self.h)


@dataclass(frozen=True, eq=False)
class TransformedState:
    """Scalar log weight eta = ln Pi(f) and relative deviation psi."""

    eta: float
    psi: History

    def __post_init__(self):
        if np.any(self.psi.values <= -1):
            raise ValidationError("psi must exceed -1 everywhere")


def lotka_sharpe_residual(D: float, m: ModelParams) -> float:
    """int_0^A k(a) exp(-D a - int_0^a mu) da - 1; strictly decreasing in D."""
    log_s = -(D * m.ages + m.cumulative_mortality)
    return weighted_log_integral(m.k_values, log_s, m.h) - 1.0


def solve_equilibrium_dilution(m: ModelParams, tol: float = 1e-12) -> float:
    """Bisection for the unique root of the Lotka-Sharpe residual.

    The search starts on [D_min, D_max] and widens outward on the side where
    the root must lie, up to |D| = 1e3.
    """
    lo, hi = m.D_min, m.D_max
    r_lo, r_hi = lotka_sharpe_residual(lo, m), lotka_sharpe_residual(hi, m)
    step = hi - lo
    while r_lo < 0 and lo > -BRACKET_LIMIT:
        hi, r_hi = lo, r_lo
        lo = max(lo - step, -BRACKET_LIMIT)
        r_lo = lotka_sharpe_residual(lo, m)
        step *= 2
    while r_hi > 0 and hi < BRACKET_LIMIT:
        lo, r_lo = hi, r_hi
        hi = min(hi + step, BRACKET_LIMIT)
        r_hi = lotka_sharpe_residual(hi, m)
        step *= 2
    if r_lo < 0 or r_hi > 0:
        raise NoRoot(f"Lotka-Sharpe residual keeps one sign on [{lo:g}, {hi:g}]")
    if r_lo == 0:
        return float(lo)
    if r_hi == 0:
        return float(hi)
    while hi - lo > tol * max(1.0, abs(lo)):
        mid = 0.5 * (lo + hi)
        r_mid = lotka_sharpe_residual(mid, m)
        if r_mid == 0:
            return float(mid)
        if r_mid > 0:
            lo = mid
        else:
            hi = mid
    root = 0.5 * (lo + hi)
    if abs(lotka_sharpe_residual(root, m)) > RESIDUAL_TOL:
        raise NoRoot(f"bisection stalled at D={root:.15g}")
    return float(root)


def equilibrium_profile(m: ModelParams, M_scale: float | None = None) -> AgeProfile:
    """f*(a) = M exp(-D* a - int_0^a mu) on the grid."""
    scale = m.M_scale if M_scale is None else M_scale
    if not scale > 0:
        raise ValidationError("M_scale must be positive")
    return AgeProfile(m.h, scale * np.exp(m.log_survival))


def setpoint_scale(y_star: float, m: ModelParams) -> float:
    """The M for which the equilibrium profile produces output y_star."""
    if not y_star > 0:
        raise ValidationError("setpoint must be positive")
    return y_star / weighted_log_integral(m.p_values, m.log_survival, m.h)


def normalized_kernel(m: ModelParams) -> AgeProfile:
    """k(a) exp(-D* a - int_0^a mu); integrates to one at the equilibrium."""
    return AgeProfile(m.h, m.kernel.phi)


def kernel_mass(m: ModelParams) -> float:
    """int of the normalized kernel by the exponential-interpolation quadrature."""
    return weighted_log_integral(m.k_values, m.log_survival, m.h)


def pi_functional(f, m: ModelParams) -> float:
    """Ergodic weight Pi(f): the ratio f/f* projected with the normalized kernel.

    Equals one at f*, is linear in f, and stays between min f/f* and max f/f*.
    """
    values = np.asarray(getattr(f, "values", f), dtype=float)
    ratio = History(m.h, values / m.f_star)
    return ergodic_projection(m.kernel, ratio)


def triangular_birth_gain(mu_const: float, D_star: float, A: float = 2.0) -> float:
    """Gain that puts the triangular birth modulus in Lotka-Sharpe balance."""
    s = mu_const + D_star
    if not s > 0:
        raise ValidationError("mu + D* must be positive")
    return s**2 / (-np.expm1(-s * A / 2)) ** 2


def _linear_product_integral(u: np.ndarray, v: np.ndarray, h: float) -> float:
    """Exact integral of the product of two piecewise-linear interpolants."""
    cells = u[:-1] * v[:-1] / 3 + (u[:-1] * v[1:] + u[1:] * v[:-1]) / 6 + u[1:] * v[1:] / 3
    return float(h * np.sum(cells))


def initial_profile_slope(b0: float, c: float, theta: float, m: ModelParams) -> float:
    """The b1 that makes b0 - b1 a + c exp(-theta a) satisfy the renewal law."""
    if isinstance(m.k, TriangularBirth) and abs(m.A - 2.0) < 1e-12:
        g = m.k.gain
        return (g - 1) / g * b0 + c * np.expm1(-theta) ** 2 / theta**2 - c / g
    k = m.k_values
    ones = np.ones_like(k)
    mass = _linear_product_integral(k, ones, m.h)
    moment = _linear_product_integral(k, m.ages, m.h)
    decay = weighted_log_integral(k, -theta * m.ages, m.h)
    return (b0 * mass + c * decay - b0 - c) / moment


def family_initial_profile(b0: float, c: float, theta: float, m: ModelParams) -> AgeProfile:
    """f0(a) = b0 - b1 a + c exp(-theta a) with b1 from the renewal law."""
    if not (b0 > 0 and c > 0 and theta > 0):
        raise ValidationError("b0, c and theta must be positive")
    b1 = initial_profile_slope(b0, c, theta, m)
    a = m.ages
    values = b0 - b1 * a + c * np.exp(-theta * a)
    if np.min(values) <= 0:
        raise NonPositiveProfile(
            f"initial profile reaches {np.min(values):.6g} at a={a[np.argmin(values)]:.4g}"
        )
    return AgeProfile(m.h, values)


def to_transformed(f, m: ModelParams) -> TransformedState:
    """Split a positive profile into eta = ln Pi(f) and psi = f/(f* Pi) - 1."""
    values = np.asarray(getattr(f, "values", f), dtype=float)
    if np.any(~(values > 0)):
        raise NonPositiveInput("transform needs a strictly positive profile")
    pi = pi_functional(values, m)
    psi = values / (m.f_star * pi) - 1.0
    return TransformedState(float(np.log(pi)), History(m.h, psi))


def from_transformed(s: TransformedState, m: ModelParams) -> AgeProfile:
    """Rebuild f = (1 + psi) f* exp(eta)."""
    return AgeProfile(m.h, (1.0 + s.psi.values) * m.f_star * np.exp(s.eta))
