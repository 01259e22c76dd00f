"""Control Lyapunov functionals and explicit decay-rate constants.

The continuous-time constants follow the chain quadratic form -> observer
error rate -> kernel contraction rate -> functional weights -> decay rate L.
The sampled-data constants only need the sampling period, the dilution
bounds and the contraction rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DecayViolated, GainConditionFailed, NonPositiveProfile, ValidationError
from .ide import Kernel, find_contraction_lambda, ide_solve, compatible_history, sigma_rate
from .model import ModelParams, pi_functional
from .simulate import TrajectoryLog

MONOTONE_SLACK = 1e-9
SLOPE_SLACK = 1e-6


@dataclass(frozen=True)
class CertificateBundle:
    l1: float | None = None
    l2: float | None = None
    gamma: float | None = None
    p1: float | None = None
    p2: float | None = None
    K1: float | None = None
    K2: float | None = None
    K3: float | None = None
    K4: float | None = None
    lam: float | None = None
    gap: float | None = None
    sigma: float | None = None
    c: float | None = None
    mu_quad: float | None = None
    clf_M: float | None = None
    G_weight: float | None = None
    beta: float = 0.0
    mu_tilde: float | None = None
    R: float | None = None
    L_cont: float | None = None
    delta: float | None = None
    delta_tilde: float | None = None
    L_samp: float | None = None


def gain_conditions(l1: float, l2: float, p1: float, p2: float) -> list[str]:
    """Names of the violated gain inequalities (empty when the pair is valid)."""
    failed = []
    if not (2 + l1 * p1 - 2 * l2 * p2) ** 2 < 8 * l1 * p1 - 4 * l2 * p1**2:
        failed.append("(2 + l1 p1 - 2 l2 p2)^2 < 8 l1 p1 - 4 l2 p1^2")
    if not p1**2 < 4 * p2:
        failed.append("p1^2 < 4 p2")
    return failed


def _lyapunov_2x2(F: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Symmetric P with F^T P + P F = -Q."""
    identity = np.eye(2)
    system = np.kron(identity, F.T) + np.kron(F.T, identity)
    P = np.linalg.solve(system, -Q.reshape(-1, order="F")).reshape(2, 2, order="F")
    return 0.5 * (P + P.T)


def gain_quadratic_form(l1: float, l2: float, p1: float | None = None, p2: float | None = None):
    """Quadratic-form coefficients (p1, p2) for observer gains and the
    eigenvalue bounds K1..K4 of the forms

        A(e) = e1^2 - p1 e1 e2 + p2 e2^2
        B(e) = (2 l1 - l2 p1) e1^2 - (2 + l1 p1 - 2 p2 l2) e1 e2 + p1 e2^2.

    Without explicit p1, p2 they come from the Lyapunov equation of the
    observer error matrix with identity right-hand side.
    """
    if not (l1 > 0 and l2 > 0):
        raise ValidationError("observer gains must be positive")
    if p1 is None or p2 is None:
        F = np.array([[-l1, 1.0], [-l2, 0.0]])
        P = _lyapunov_2x2(F, np.eye(2))
        P = P / P[0, 0]
        p1, p2 = float(-2 * P[0, 1]), float(P[1, 1])
    failed = gain_conditions(l1, l2, p1, p2)
    if failed:
        raise GainConditionFailed("gain conditions violated: " + "; ".join(failed))
    form_a = np.array([[1.0, -p1 / 2], [-p1 / 2, p2]])
    cross = 2 + l1 * p1 - 2 * p2 * l2
    form_b = np.array([[2 * l1 - l2 * p1, -cross / 2], [-cross / 2, p1]])
    K1, K2 = np.linalg.eigvalsh(form_a)
    K3, K4 = np.linalg.eigvalsh(form_b)
    return p1, p2, float(K1), float(K2), float(K3), float(K4)


def decay_constants_sampled(T: float, sigma: float, m: ModelParams) -> tuple[float, float, float]:
    """(delta, delta_tilde, L) for the sample-and-hold law with period T."""
    if not (T > 0 and sigma > 0):
        raise ValidationError("T and sigma must be positive")
    d_star = m.require_equilibrium()
    delta = 0.5 * min((m.D_max - d_star) * T, (d_star - m.D_min) * T)
    delta_tilde = min(delta, sigma * T)
    return delta, delta_tilde, delta_tilde / (2 * T)


def contraction_data(m: ModelParams) -> tuple[float, float, float]:
    """(lambda, gap, sigma) for the model's normalized kernel."""
    kern = m.kernel.normalized()
    lam, gap = find_contraction_lambda(kern)
    return lam, gap, sigma_rate(kern, lam)


def decay_constants_continuous(
    l1: float,
    l2: float,
    gamma: float,
    kern: Kernel,
    m: ModelParams,
    beta: float = 0.0,
    margin: float = 2.0,
) -> CertificateBundle:
    """Constants of the full-observer functional and its decay rate L_cont.

    ``margin`` multiplies the strict lower bounds for the functional weights
    M and G.
    """
    if not gamma > 0:
        raise ValidationError("gamma must be positive")
    if beta < 0:
        raise ValidationError("beta must be nonnegative")
    d_star = m.require_equilibrium()
    p1, p2, K1, K2, K3, K4 = gain_quadratic_form(l1, l2)
    c = ((2 * l1 - p1 * l2) ** 2 + (2 * p2 * l2 - p1 * l1) ** 2) / (2 * K3)
    mu_quad = K3 / (4 * K2)
    lam, gap = find_contraction_lambda(kern)
    sigma = sigma_rate(kern, lam)
    A = kern.A
    growth = c * np.exp(2 * sigma * A)
    clf_M = margin * growth / sigma
    mu_tilde = min(mu_quad, (sigma * clf_M - growth) / (2 * clf_M))
    spread = max(m.D_max - d_star, d_star - m.D_min)
    R = 8.0 / gamma * spread
    edge = R * gamma * np.sqrt(2) * np.exp(sigma * A)
    G = margin * (R / (mu_tilde * np.sqrt(K1)) + edge / (mu_tilde * np.sqrt(clf_M)))
    bounds = min(1.0, m.D_max - d_star, d_star - m.D_min)
    L_cont = min(
        mu_tilde - R / (G * np.sqrt(K1)) - edge / (G * np.sqrt(clf_M)),
        min(2.0, gamma) * bounds,
    )
    return CertificateBundle(
        l1=l1, l2=l2, gamma=gamma, p1=p1, p2=p2, K1=K1, K2=K2, K3=K3, K4=K4,
        lam=lam, gap=gap, sigma=sigma, c=c, mu_quad=mu_quad, clf_M=float(clf_M),
        G_weight=float(G), beta=beta, mu_tilde=float(mu_tilde), R=R, L_cont=float(L_cont),
    )


def _ratio_and_pi(f, m: ModelParams):
    values = np.asarray(getattr(f, "values", f), dtype=float)
    if np.any(~(values > 0)):
        raise NonPositiveProfile("functional needs a strictly positive profile")
    return values / m.f_star, pi_functional(values, m)


def deviation_term(f, cert: CertificateBundle, m: ModelParams) -> float:
    """(M/2) (max_a e^{-sigma a}|f - Pi f*|/f* / min(Pi, min f/f*))^2."""
    ratio, pi = _ratio_and_pi(f, m)
    spread = np.max(np.exp(-cert.sigma * m.ages) * np.abs(ratio - pi))
    floor = min(pi, float(np.min(ratio)))
    return 0.5 * cert.clf_M * (spread / floor) ** 2


def deviation_term_transformed(psi, cert: CertificateBundle, ages) -> float:
    """The same term written in the relative deviation psi."""
    psi = np.asarray(getattr(psi, "values", psi), dtype=float)
    spread = np.max(np.exp(-cert.sigma * np.asarray(ages)) * np.abs(psi))
    return 0.5 * cert.clf_M * (spread / (1.0 + min(0.0, float(np.min(psi))))) ** 2


def observer_form(e1: float, e2: float, cert: CertificateBundle) -> float:
    return e1 * e1 - cert.p1 * e1 * e2 + cert.p2 * e2 * e2


def clf_Q_full(z, f, cert: CertificateBundle, m: ModelParams) -> float:
    z1, z2 = z
    _, pi = _ratio_and_pi(f, m)
    e1, e2 = z1 - np.log(pi), z2 - m.require_equilibrium()
    return float(observer_form(e1, e2, cert) + deviation_term(f, cert, m))


def _combine(eta: float, Q: float, cert: CertificateBundle) -> float:
    return float(eta * eta + cert.G_weight * np.sqrt(Q) + cert.beta * Q)


def clf_W_full(z, f, cert: CertificateBundle, m: ModelParams) -> float:
    """(ln Pi)^2 + G sqrt(Q) + beta Q for the full-observer loop."""
    _, pi = _ratio_and_pi(f, m)
    return _combine(float(np.log(pi)), clf_Q_full(z, f, cert, m), cert)


def clf_V_transformed(eta: float, e, psi, cert: CertificateBundle, ages) -> float:
    """The full-observer functional in (eta, observer error, psi) coordinates."""
    e1, e2 = e
    Q = observer_form(e1, e2, cert) + deviation_term_transformed(psi, cert, ages)
    return _combine(eta, Q, cert)


def clf_reduced(z: float, f, cert: CertificateBundle, m: ModelParams) -> tuple[float, float]:
    """(Q, W) for the reduced-order observer loop."""
    _, pi = _ratio_and_pi(f, m)
    eta = float(np.log(pi))
    offset = z - cert.l1 * eta + cert.l2 * m.require_equilibrium()
    Q = float(offset**2 + deviation_term(f, cert, m))
    return Q, _combine(eta, Q, cert)


def decay_envelope(w0: float, L: float, t):
    """Upper envelope w0 e^{max(0, w0-1)} e^{-L t/2} for phi' <= -L phi/(1+sqrt(phi))."""
    with np.errstate(over="ignore"):
        return w0 * np.exp(max(0.0, w0 - 1.0)) * np.exp(-0.5 * L * np.asarray(t))


@dataclass
class DecayReport:
    passed: bool
    steps: int
    worst_increase: float
    worst_slope_margin: float
    worst_envelope_margin: float
    failures: list = field(default_factory=list)

    def lines(self) -> list[str]:
        status = "PASS" if self.passed else "FAIL"
        out = [
            f"decay_check: {status} over {self.steps} steps",
            f"  largest one-step increase of W: {self.worst_increase:.3e}",
            f"  largest slope excess over -L W/(1+sqrt W): {self.worst_slope_margin:.3e}",
            f"  largest envelope excess: {self.worst_envelope_margin:.3e}",
        ]
        out += [f"  violation: {msg}" for msg in self.failures[:5]]
        return out


def decay_check(log: TrajectoryLog, cert: CertificateBundle, strict: bool = True) -> DecayReport:
    """Check monotonicity, slope bound and envelope of the logged functional."""
    if log.W is None:
        raise ValidationError("trajectory has no functional values")
    W, t = log.W, log.t
    L = cert.L_cont
    dt = np.diff(t)
    increase = W[1:] - W[:-1]
    slope = increase / dt
    slope_bound = -L * W[:-1] / (1 + np.sqrt(W[:-1])) + SLOPE_SLACK * (1 + W[:-1])
    envelope = decay_envelope(W[0], L, t - t[0])
    failures = []
    mono_bad = np.flatnonzero(increase > MONOTONE_SLACK)
    slope_bad = np.flatnonzero(slope > slope_bound)
    env_bad = np.flatnonzero(W > envelope * (1 + 1e-12) + MONOTONE_SLACK)
    for i in mono_bad:
        failures.append(f"step {i}: W increased by {increase[i]:.3e}")
    for i in slope_bad:
        failures.append(f"step {i}: slope exceeds bound by {slope[i] - slope_bound[i]:.3e}")
    for i in env_bad:
        failures.append(f"step {i}: W above envelope by {W[i] - envelope[i]:.3e}")
    report = DecayReport(
        passed=not failures,
        steps=int(W.size),
        worst_increase=float(np.max(increase, initial=-np.inf)),
        worst_slope_margin=float(np.max(slope - slope_bound, initial=-np.inf)),
        worst_envelope_margin=float(np.max(W - envelope)),
        failures=failures,
    )
    if strict and failures:
        bad = sorted(set(mono_bad) | set(slope_bad) | set(env_bad))
        first = int(bad[0])
        raise DecayViolated(failures[0], first, float(report.worst_slope_margin))
    return report


# Sampled-data envelope.  Its ergodic constants are fitted, not proven.


def fit_ergodic_constants(m: ModelParams, psi0, t_end: float = 40.0, inflate: float = 2.0):
    """Fit sup|x_t| <= M e^{-sigma t} sup|x_0| on the normalized-kernel delay
    equation started from ``psi0``; returns (M, sigma) made conservative by
    multiplying M and dividing sigma by ``inflate``."""
    kern = m.kernel.normalized()
    psi0 = np.asarray(getattr(psi0, "values", psi0), dtype=float)
    x0 = compatible_history(kern, psi0[1:])
    sol = ide_solve(kern, x0, t_end)
    sup0 = float(np.max(np.abs(x0.values)))
    if sup0 == 0:
        return inflate, 1.0
    window = np.array([np.max(np.abs(x.values)) for x in sol.histories()]) / sup0
    times = sol.times
    usable = window > 1e-10
    slope, intercept = np.polyfit(times[usable], np.log(window[usable]), 1)
    sigma_fit = max(-slope, 1e-6)
    # Lift the line so it dominates every sample before inflating.
    lift = float(np.max(np.log(window[usable]) + sigma_fit * times[usable]))
    return inflate * float(np.exp(max(lift, intercept, 0.0))), sigma_fit / inflate


def sampled_kappa(s: float, M_erg: float, delta: float, delta_tilde: float) -> float:
    """kappa(s) = e^{delta~/2} J((1+2M)s) + (1+2M)s with the fitted M."""

    def J(v):
        return v * (np.exp(delta_tilde) / delta * max(delta, v) + 2.0 / delta_tilde * np.exp(delta - 1.0)) * np.exp(v)

    scaled = (1.0 + 2.0 * M_erg) * s
    return float(np.exp(delta_tilde / 2.0) * J(scaled) + scaled)


def sampled_claim_check(log: TrajectoryLog, T: float, delta: float, m: ModelParams, tol: float = 0.0):
    """Per-sample contraction |eta+| <= |eta| - min(|eta|, 2 delta) + 2|v|.

    v is the measured log error minus eta.  A controller that assumes
    D_hat instead of D* acts like one with a shifted setpoint, so eta is
    measured from the shifted equilibrium.  Returns the largest excess of
    the left side over the right side.
    """
    stride = int(round(T / log.h))
    idx = np.arange(0, log.t.size, stride)
    offset = 0.0 if log.D_hat is None else (log.D_hat - log.D_star) * T
    eta = log.eta[idx] + offset
    if log.kind == "sampled_state":
        measured = np.log(log.newborn[idx] / m.M_scale)
    else:
        measured = np.log(log.y[idx] / m.y_star)
    v = measured + offset - eta
    lhs = np.abs(eta[1:])
    rhs = np.abs(eta[:-1]) - np.minimum(np.abs(eta[:-1]), 2 * delta) + 2 * np.abs(v[:-1])
    return float(np.max(lhs - rhs - tol, initial=-np.inf))


def full_observer_bound(s: float, cert: CertificateBundle, A: float) -> float:
    """rho(s) bounding the full-observer exponential estimate for initial size s.

    s = max|ln f0/f*| + |z1(0)| + |z2(0) - D*|.
    """
    b1 = s
    b2 = np.exp(2 * s) * np.expm1(2 * s)
    Q = 2 * cert.K2 * s * s + 0.5 * cert.clf_M * b2 * b2
    V = b1 * b1 + cert.G_weight * np.sqrt(Q) + cert.beta * Q
    with np.errstate(over="ignore"):
        return float(np.exp(cert.sigma * A) * (V + np.sqrt(V)) * np.exp(max(0.0, V - 1.0)))
