"""Closed-loop simulation along characteristics.

Each step computes the newborn density and the output from the current
profile, updates the dilution rate with the selected feedback law, and then
shifts the profile one grid cell along the characteristics with the exact
exponential decay factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import Diverged, NonPositiveOutput, ValidationError
from .model import ModelParams, pi_functional
from .profiles import AgeProfile
from .quadrature import output_integral, renewal_integral

KINDS = ("open_loop", "sampled_state", "sampled_output", "full_observer", "reduced_observer")
SAMPLED_KINDS = ("sampled_state", "sampled_output")
OBSERVER_KINDS = ("full_observer", "reduced_observer")
DIVERGENCE_LIMIT = 1e12


def saturate(x: float, m: ModelParams) -> float:
    return min(m.D_max, max(m.D_min, x))


def deadzone_q(x: float, m: ModelParams) -> float:
    """sat(D* + x) - D*: identity near zero, clipped to the dilution bounds."""
    d_star = m.require_equilibrium()
    return min(m.D_max - d_star, max(-(d_star - m.D_min), x))


def sector_constant(m: ModelParams) -> float:
    """The constant c in x q(x) >= c x^2 / (1 + |x|)."""
    d_star = m.require_equilibrium()
    return min(1.0, m.D_max - d_star, d_star - m.D_min)


@dataclass(frozen=True)
class ControllerSpec:
    """Feedback law and its tuning.

    ``D_hat`` is the controller's belief about the equilibrium dilution
    (defaults to the model's true value); ``y_star`` defaults to the output
    of the model's equilibrium profile.  ``z_init`` is the initial observer
    state: (z1, z2) for the full observer, (z,) for the reduced one.
    """

    kind: str = "sampled_output"
    l1: float = 2.0
    l2: float = 1.0
    gamma: float = 1.0
    T: float = 0.4
    D_hat: float | None = None
    y_star: float | None = None
    z_init: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown controller kind {self.kind!r}; choose from {KINDS}")
        if self.kind in SAMPLED_KINDS and not self.T > 0:
            raise ValidationError("sampling period T must be positive")
        if self.kind in OBSERVER_KINDS and not (self.l1 > 0 and self.l2 > 0 and self.gamma > 0):
            raise ValidationError("observer gains l1, l2, gamma must be positive")
        if self.y_star is not None and not self.y_star > 0:
            raise ValidationError("y_star must be positive")


@dataclass(frozen=True)
class ControllerState:
    z1: float = 0.0
    z2: float = 0.0
    D_held: float | None = None
    last_sample: float | None = None


def initial_controller_state(spec: ControllerSpec, m: ModelParams) -> ControllerState:
    if spec.kind == "full_observer":
        z1, z2 = spec.z_init if spec.z_init is not None else (0.0, _d_hat(spec, m))
        return ControllerState(z1=float(z1), z2=float(z2))
    if spec.kind == "reduced_observer":
        z = spec.z_init[0] if spec.z_init is not None else -spec.l2 * _d_hat(spec, m)
        return ControllerState(z1=float(z))
    return ControllerState()


def _d_hat(spec: ControllerSpec, m: ModelParams) -> float:
    return m.require_equilibrium() if spec.D_hat is None else spec.D_hat


def _y_star(spec: ControllerSpec, m: ModelParams) -> float:
    return m.y_star if spec.y_star is None else spec.y_star


def _rk4(rhs, state: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(state)
    k2 = rhs(state + 0.5 * h * k1)
    k3 = rhs(state + 0.5 * h * k2)
    k4 = rhs(state + h * k3)
    return state + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _is_sample_time(t: float, T: float) -> bool:
    ratio = t / T
    return abs(ratio - round(ratio)) < 1e-9


def control_action(
    spec: ControllerSpec,
    state: ControllerState,
    t: float,
    y: float,
    f0_node: float,
    m: ModelParams,
) -> tuple[float, ControllerState]:
    """Dilution rate applied on [t, t+h] and the controller state at t+h."""
    if not y > 0:
        raise NonPositiveOutput(f"output must be positive, got {y!r} at t={t:g}")
    log_err = float(np.log(y / _y_star(spec, m)))
    kind = spec.kind

    if kind == "open_loop":
        return _d_hat(spec, m), state

    if kind in SAMPLED_KINDS:
        if state.D_held is not None and not _is_sample_time(t, spec.T):
            return state.D_held, state
        if kind == "sampled_state":
            if not f0_node > 0:
                raise NonPositiveOutput("newborn density must be positive")
            measured = float(np.log(f0_node / m.M_scale))
        else:
            measured = log_err
        D = saturate(_d_hat(spec, m) + measured / spec.T, m)
        return D, replace(state, D_held=D, last_sample=t)

    l1, l2, gamma = spec.l1, spec.l2, spec.gamma
    if kind == "full_observer":
        D = saturate(state.z2 + gamma * log_err, m)

        def rhs(z):
            return np.array([z[1] - D - l1 * (z[0] - log_err), -l2 * (z[0] - log_err)])

        z1, z2 = _rk4(rhs, np.array([state.z1, state.z2]), m.h)
        return D, replace(state, z1=float(z1), z2=float(z2))

    # Reduced observer: the single state is carried in z1.
    D = saturate(-state.z1 / l2 + (gamma + l1 / l2) * log_err, m)

    def rhs(z):
        return np.array([-l1 / l2 * z[0] + l1**2 / l2 * log_err - l1 * D])

    (z,) = _rk4(rhs, np.array([state.z1]), m.h)
    return D, replace(state, z1=float(z))


def characteristic_step(f, D_i: float, m: ModelParams) -> np.ndarray:
    """Shift the profile one cell along characteristics; node 0 is left NaN.

    f_next(jh) = f((j-1)h) exp(-(D_i h + int_{(j-1)h}^{jh} mu)).
    """
    values = np.asarray(getattr(f, "values", f), dtype=float)
    nxt = np.empty_like(values)
    nxt[0] = np.nan
    nxt[1:] = values[:-1] * np.exp(-(D_i * m.h + m.cell_mortality))
    return nxt


@dataclass
class TrajectoryLog:
    """Per-step series of a simulation run.

    ``profiles[i]`` is the full age profile at ``t[i]`` with its newborn node
    filled in.  ``D[i]`` is the dilution applied on [t[i], t[i] + h].
    """

    kind: str
    h: float
    D_star: float
    D_hat: float | None
    t: np.ndarray
    D: np.ndarray
    newborn: np.ndarray
    y: np.ndarray
    pi: np.ndarray
    eta: np.ndarray
    sup_log_err: np.ndarray
    profiles: np.ndarray
    W: np.ndarray | None = None
    z1: np.ndarray | None = None
    z2: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.t.size

    @property
    def min_value(self) -> float:
        return float(np.min(self.profiles))


def simulate(
    m: ModelParams,
    spec: ControllerSpec,
    f0,
    t_end: float,
    clf: Callable[[ControllerState, np.ndarray], float] | None = None,
) -> TrajectoryLog:
    """Run the closed loop from ``f0`` until ``t_end``.

    ``clf``, when given, is evaluated on (controller state, profile) at every
    logged step and stored as ``W``.
    """
    d_star = m.require_equilibrium()
    h = m.h
    values = np.array(getattr(f0, "values", f0), dtype=float)
    if values.shape != (m.N + 1,):
        raise ValidationError("initial profile must live on the model grid")
    if np.any(~(values > 0)):
        raise ValidationError("initial profile must be strictly positive")
    if spec.kind in SAMPLED_KINDS:
        ratio = spec.T / h
        if abs(ratio - round(ratio)) > 1e-12 * max(1.0, ratio):
            raise ValidationError(f"grid step {h} must divide sampling period {spec.T}")
    n_steps = int(round(t_end / h))
    if n_steps < 0 or abs(n_steps * h - t_end) > 1e-9 * max(1.0, t_end):
        raise ValidationError("t_end must be a nonnegative multiple of the grid step")

    n = n_steps + 1
    t = np.arange(n) * h
    series = {name: np.empty(n) for name in ("D", "newborn", "y", "pi", "eta", "sup", "W", "z1", "z2")}
    profiles = np.empty((n, m.N + 1))
    state = initial_controller_state(spec, m)
    f_star = m.f_star

    for i in range(n):
        values[0] = renewal_integral(values, m)
        y = output_integral(values, m)
        if not np.all(np.isfinite(values)) or np.max(values) > DIVERGENCE_LIMIT:
            raise Diverged(f"profile left the representable range at t={t[i]:g}")
        pi = pi_functional(values, m)
        profiles[i] = values
        series["newborn"][i] = values[0]
        series["y"][i] = y
        series["pi"][i] = pi
        series["eta"][i] = np.log(pi)
        series["sup"][i] = np.max(np.abs(np.log(values / f_star)))
        series["z1"][i] = state.z1
        series["z2"][i] = state.z2
        if clf is not None:
            series["W"][i] = clf(state, values.copy())
        D, state = control_action(spec, state, float(t[i]), y, values[0], m)
        series["D"][i] = D
        if i + 1 < n:
            values = characteristic_step(values, D, m)

    observer = spec.kind in OBSERVER_KINDS
    return TrajectoryLog(
        kind=spec.kind,
        h=h,
        D_star=d_star,
        D_hat=spec.D_hat,
        t=t,
        D=series["D"],
        newborn=series["newborn"],
        y=series["y"],
        pi=series["pi"],
        eta=series["eta"],
        sup_log_err=series["sup"],
        profiles=profiles,
        W=series["W"] if clf is not None else None,
        z1=series["z1"] if observer else None,
        z2=series["z2"] if spec.kind == "full_observer" else None,
    )
