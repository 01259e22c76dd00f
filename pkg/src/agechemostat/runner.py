"""Run configured experiments and write their outputs."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .certificates import (
    clf_reduced,
    clf_W_full,
    contraction_data,
    decay_check,
    decay_constants_continuous,
    decay_constants_sampled,
    fit_ergodic_constants,
    sampled_kappa,
)
from .config import ExperimentConfig
from .model import ModelParams, pi_functional, to_transformed
from .simulate import OBSERVER_KINDS, SAMPLED_KINDS, TrajectoryLog, simulate

STEADY_FRACTION = 0.10
FLATNESS = 0.01
CONVERGENCE_BAND = 0.01


@dataclass
class RunResult:
    config: ExperimentConfig
    model: ModelParams
    log: TrajectoryLog
    summary: dict
    certificate: object | None = None


def _steady(series: np.ndarray, t: np.ndarray) -> dict:
    n_tail = max(1, int(np.ceil(STEADY_FRACTION * series.size)))
    window = series[-n_tail:]
    mean = float(np.mean(window))
    spread = float(np.max(window) - np.min(window))
    settled = spread < FLATNESS * abs(mean) if mean != 0 else spread == 0
    outside = np.flatnonzero(np.abs(series - mean) > CONVERGENCE_BAND * abs(mean))
    if outside.size == 0:
        t_conv = float(t[0])
    elif outside[-1] + 1 < t.size:
        t_conv = float(t[outside[-1] + 1])
    else:
        t_conv = None
    return {"steady": mean, "settled": bool(settled), "convergence_time": t_conv}


def summarize(log: TrajectoryLog, m: ModelParams) -> dict:
    """Steady-state estimates (mean of the final 10% of samples) and 1% settling times."""
    summary = {
        "kind": log.kind,
        "steps": len(log),
        "t_end": float(log.t[-1]),
        "D_star": log.D_star,
        "D_hat": log.D_hat,
        "y_star": m.y_star,
        "pi_initial": float(log.pi[0]),
        "min_profile_value": log.min_value,
    }
    for name in ("newborn", "y", "D"):
        for key, value in _steady(getattr(log, name), log.t).items():
            summary[f"{name}_{key}"] = value
    return summary


def _certificate(cfg: ExperimentConfig, m: ModelParams, kind: str):
    ctl = cfg.controller
    if kind in OBSERVER_KINDS:
        return decay_constants_continuous(ctl.l1, ctl.l2, ctl.gamma, m.kernel.normalized(), m)
    return None


def run_experiment(cfg: ExperimentConfig, kind: str | None = None, t_end: float | None = None) -> RunResult:
    """Simulate the configured loop; observer runs also log their functional."""
    m = cfg.build_model()
    spec = cfg.build_controller(kind)
    f0 = cfg.build_initial(m)
    t_end = cfg.numerics.t_end if t_end is None else t_end
    cert = None
    clf = None
    if spec.kind in OBSERVER_KINDS and cfg.outputs.log_clf:
        cert = _certificate(cfg, m, spec.kind)
        if spec.kind == "full_observer":
            def clf(state, f):
                return clf_W_full((state.z1, state.z2), f, cert, m)
        else:
            def clf(state, f):
                return clf_reduced(state.z1, f, cert, m)[1]
    log = simulate(m, spec, f0, t_end, clf=clf)
    summary = summarize(log, m)
    summary["pi_initial_direct"] = pi_functional(f0, m)
    return RunResult(cfg, m, log, summary, cert)


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def emit_trajectory_csv(log: TrajectoryLog, path) -> None:
    """Write one row per step with 12 significant digits and '\\n' line ends."""
    columns = [
        ("t", log.t), ("D", log.D), ("newborn", log.newborn), ("y", log.y),
        ("pi", log.pi), ("eta", log.eta), ("sup_log_err", log.sup_log_err),
    ]
    for name in ("W", "z1", "z2"):
        series = getattr(log, name)
        if series is not None:
            columns.append((name, series))
    header = ",".join(name for name, _ in columns)
    data = np.column_stack([series for _, series in columns])
    lines = [header] + [",".join(_fmt(v) for v in row) for row in data]
    with open(path, "w", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")


def emit_summary(summary: dict, path) -> None:
    lines = [f"{key} = {value}" for key, value in summary.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def certificate_report(cfg: ExperimentConfig, result: RunResult | None = None, kind: str | None = None) -> str:
    """Plain-text listing of the decay constants for the configured loop.

    Observer loops report the continuous chain and, when a logged run is
    supplied, the outcome of the decay check.  Sampled loops report the
    sampled constants.
    """
    m = result.model if result is not None else cfg.build_model()
    kind = kind or (result.log.kind if result is not None else cfg.controller.kind)
    lines = [f"certificate for {cfg.name} ({kind})", f"D_star = {_fmt(m.D_star)}"]
    if kind in OBSERVER_KINDS:
        cert = result.certificate if result is not None and result.certificate is not None else _certificate(cfg, m, kind)
        for name in ("lam", "gap", "sigma", "p1", "p2", "K1", "K2", "K3", "K4", "c", "mu_quad",
                     "clf_M", "G_weight", "beta", "mu_tilde", "R", "L_cont"):
            label = "lambda" if name == "lam" else name
            lines.append(f"{label} = {_fmt(float(getattr(cert, name)))}")
        if result is not None and result.log.W is not None:
            if kind == "reduced_observer":
                lines.append("note: reduced-order functional checked with the full-order constants")
            lines += decay_check(result.log, cert, strict=False).lines()
    else:
        lam, gap, sigma = contraction_data(m)
        lines += [f"lambda = {_fmt(lam)}", f"gap = {_fmt(gap)}", f"sigma = {_fmt(sigma)}"]
        if kind in SAMPLED_KINDS:
            delta, delta_tilde, L = decay_constants_sampled(cfg.controller.T, sigma, m)
            lines += [f"delta = {_fmt(delta)}", f"delta_tilde = {_fmt(delta_tilde)}", f"L_samp = {_fmt(L)}"]
            f0 = result.log.profiles[0] if result is not None else cfg.build_initial(m).values
            M_erg, sigma_erg = fit_ergodic_constants(m, to_transformed(f0, m).psi)
            s0 = float(np.max(np.abs(np.log(f0 / m.f_star))))
            lines += [
                "note: kappa uses ergodic constants fitted on the delay equation (empirical, not proven)",
                f"ergodic_M = {_fmt(M_erg)}",
                f"ergodic_sigma = {_fmt(sigma_erg)}",
                f"kappa = {_fmt(sampled_kappa(s0, M_erg, delta, delta_tilde))}",
            ]
    return "\n".join(lines) + "\n"
