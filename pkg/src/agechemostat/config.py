"""Experiment configuration: flat ``section.key = value`` files and presets."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigParseError, ConfigValidationError, ValidationError
from .model import ModelParams, TriangularBirth, family_initial_profile, triangular_birth_gain
from .profiles import AgeProfile
from .simulate import KINDS, ControllerSpec


@dataclass(frozen=True)
class ModelConfig:
    A: float = 2.0
    mu: float | str = 0.1
    kernel: str = "triangular"
    kernel_gain: float | None = None
    design_dilution: float | None = None
    p: float | str = 1.0
    D_min: float = 0.5
    D_max: float = 1.5


@dataclass(frozen=True)
class ControllerConfig:
    kind: str = "sampled_output"
    l1: float = 2.0
    l2: float = 1.0
    gamma: float = 1.0
    T: float = 0.4
    D_hat: float | None = None
    y_star: float | None = None
    z1_0: float | None = None
    z2_0: float | None = None


@dataclass(frozen=True)
class NumericsConfig:
    h: float = 0.04
    t_end: float = 20.0


@dataclass(frozen=True)
class InitConfig:
    b0: float = 0.2
    c: float = 0.8
    theta: float = 1.0
    profile: str | None = None


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "runs"
    log_clf: bool = True
    certify: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "custom"
    model: ModelConfig = field(default_factory=ModelConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    init: InitConfig = field(default_factory=InitConfig)
    outputs: OutputConfig = field(default_factory=OutputConfig)
    base_dir: str = "."

    def build_model(self) -> ModelParams:
        mc = self.model
        h = self.numerics.h
        n = _cells(mc.A, h)
        ages = np.arange(n + 1) * h
        mu = self._table_or_value(mc.mu, ages, "model.mu")
        p = self._table_or_value(mc.p, ages, "model.p")
        if mc.kernel == "triangular":
            gain = mc.kernel_gain
            if gain is None:
                if not np.isscalar(mu):
                    raise ConfigValidationError("triangular kernel without kernel_gain needs constant mu")
                design = mc.design_dilution
                if design is None:
                    design = 0.5 * (mc.D_min + mc.D_max)
                gain = triangular_birth_gain(mu, design, mc.A)
            k = TriangularBirth(gain)
        else:
            k = self._table(mc.kernel, ages, "model.kernel")
        try:
            return ModelParams(
                A=mc.A, h=h, mu=mu, k=k, p=p, D_min=mc.D_min, D_max=mc.D_max
            ).with_equilibrium()
        except ValidationError as exc:
            raise ConfigValidationError(str(exc)) from exc

    def build_controller(self, kind: str | None = None) -> ControllerSpec:
        cc = self.controller
        kind = kind or cc.kind
        z_init = None
        if kind == "full_observer" and (cc.z1_0 is not None or cc.z2_0 is not None):
            z_init = (cc.z1_0 or 0.0, cc.z2_0 if cc.z2_0 is not None else 0.0)
        elif kind == "reduced_observer" and cc.z1_0 is not None:
            z_init = (cc.z1_0,)
        try:
            return ControllerSpec(
                kind=kind, l1=cc.l1, l2=cc.l2, gamma=cc.gamma, T=cc.T,
                D_hat=cc.D_hat, y_star=cc.y_star, z_init=z_init,
            )
        except ValidationError as exc:
            raise ConfigValidationError(str(exc)) from exc

    def build_initial(self, m: ModelParams) -> AgeProfile:
        ic = self.init
        try:
            if ic.profile is not None:
                values = self._table(ic.profile, m.ages, "init.profile")
                if np.any(values <= 0):
                    raise ConfigValidationError("init.profile must be strictly positive")
                return AgeProfile(m.h, values)
            return family_initial_profile(ic.b0, ic.c, ic.theta, m)
        except ConfigValidationError:
            raise
        except ValidationError as exc:
            raise ConfigValidationError(f"init: {exc}") from exc

    def _path(self, name: str) -> Path:
        path = Path(name)
        return path if path.is_absolute() else Path(self.base_dir) / path

    def _table(self, name: str, ages: np.ndarray, key: str) -> np.ndarray:
        return load_table(self._path(name), ages, key)

    def _table_or_value(self, value, ages, key):
        if isinstance(value, str):
            return self._table(value, ages, key)
        return float(value)


def load_table(path: Path, ages: np.ndarray, key: str) -> np.ndarray:
    """Read ``a, value`` rows (or one value per grid node) and sample them on
    the grid by linear interpolation."""
    if not path.exists():
        raise ConfigValidationError(f"{key}: file {path} does not exist")
    rows = []
    for raw in path.read_text().splitlines():
        line = raw.split("#", 1)[0].replace(",", " ").strip()
        if line:
            try:
                rows.append([float(tok) for tok in line.split()])
            except ValueError as exc:
                raise ConfigValidationError(f"{key}: bad number in {path}: {raw!r}") from exc
    if not rows or len({len(r) for r in rows}) != 1 or len(rows[0]) not in (1, 2):
        raise ConfigValidationError(f"{key}: {path} must have one or two numeric columns")
    data = np.array(rows)
    if data.shape[1] == 1:
        if data.shape[0] != ages.size:
            raise ConfigValidationError(f"{key}: expected {ages.size} values, got {data.shape[0]}")
        return data[:, 0]
    a, v = data[:, 0], data[:, 1]
    if np.any(np.diff(a) <= 0) or a[0] > ages[0] + 1e-12 or a[-1] < ages[-1] - 1e-12:
        raise ConfigValidationError(f"{key}: ages in {path} must increase and cover [0, A]")
    return np.interp(ages, a, v)


def _cells(A: float, h: float) -> int:
    if not (A > 0 and h > 0):
        raise ConfigValidationError("model.A and numerics.h must be positive")
    n = round(A / h)
    if n < 4 or abs(n * h - A) > 1e-12 * max(1.0, A):
        raise ConfigValidationError(f"numerics.h={h} must divide model.A={A}")
    return n


PRESETS = {
    "fig2": {"init": {"b0": 0.2, "c": 0.8, "theta": 1.0}},
    "fig3": {"init": {"b0": 1.0, "c": 4.0, "theta": 1.0}},
    "fig4": {"init": {"b0": 0.2, "c": 0.8, "theta": 1.0}, "controller": {"D_hat": 0.7}},
}

_COMMON = {
    "model": {"A": 2.0, "mu": 0.1, "kernel": "triangular", "design_dilution": 1.0,
              "p": 1.0, "D_min": 0.5, "D_max": 1.5},
    "controller": {"kind": "sampled_output", "T": 0.4},
    "numerics": {"h": 0.04, "t_end": 20.0},
}

_SECTIONS = {
    "model": ModelConfig,
    "controller": ControllerConfig,
    "numerics": NumericsConfig,
    "init": InitConfig,
    "outputs": OutputConfig,
}


def preset(name: str) -> ExperimentConfig:
    """Configuration for one of the reference experiments."""
    if name not in PRESETS:
        raise ConfigValidationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    cfg = ExperimentConfig(name=name)
    for layer in (_COMMON, PRESETS[name]):
        cfg = _apply(cfg, layer)
    return cfg


def _apply(cfg: ExperimentConfig, layer: dict) -> ExperimentConfig:
    for section, values in layer.items():
        cfg = replace(cfg, **{section: replace(getattr(cfg, section), **values)})
    return cfg


def _convert(raw: str, target, line_no: int, key: str):
    text = raw.strip()
    if text.lower() in ("none", "null", ""):
        return None
    if target is bool:
        if text.lower() in ("true", "yes", "1", "on"):
            return True
        if text.lower() in ("false", "no", "0", "off"):
            return False
        raise ConfigParseError(f"{key}: expected a boolean, got {text!r}", line_no)
    if target is str:
        return text
    try:
        return float(text)
    except ValueError:
        if target == "number_or_path":
            return text
        raise ConfigParseError(f"{key}: expected a number, got {text!r}", line_no) from None


def _field_kind(cls, name):
    annotation = {f.name: f.type for f in fields(cls)}[name]
    if annotation == "bool":
        return bool
    if annotation in ("str", "str | None"):
        return str
    if "str" in annotation:
        return "number_or_path"
    return float


def parse_config_text(text: str, base_dir: str = ".") -> ExperimentConfig:
    """Parse ``section.key = value`` lines; ``preset = NAME`` seeds defaults."""
    entries: dict[str, dict] = {}
    preset_name = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError(f"expected 'key = value', got {raw.strip()!r}", line_no)
        key, value = (part.strip() for part in line.split("=", 1))
        if key in ("preset", "name"):
            if key == "preset":
                preset_name = value
            entries.setdefault("", {})[key] = value
            continue
        if "." not in key:
            raise ConfigParseError(f"key {key!r} needs a section prefix", line_no)
        section, name = key.split(".", 1)
        if section not in _SECTIONS:
            raise ConfigParseError(f"unknown section {section!r}", line_no)
        if name not in {f.name for f in fields(_SECTIONS[section])}:
            raise ConfigParseError(f"unknown key {key!r}", line_no)
        converted = _convert(value, _field_kind(_SECTIONS[section], name), line_no, key)
        entries.setdefault(section, {})[name] = converted

    cfg = preset(preset_name) if preset_name else ExperimentConfig()
    top = entries.pop("", {})
    cfg = _apply(cfg, entries)
    return replace(cfg, name=top.get("name", cfg.name), base_dir=base_dir)


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    """Check cross-field invariants; raises ConfigValidationError."""
    num, ctl = cfg.numerics, cfg.controller
    _cells(cfg.model.A, num.h)
    if not num.t_end >= 0:
        raise ConfigValidationError("numerics.t_end must be nonnegative")
    steps = num.t_end / num.h
    if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
        raise ConfigValidationError(f"numerics.h={num.h} must divide t_end={num.t_end}")
    if ctl.kind not in KINDS:
        raise ConfigValidationError(f"controller.kind must be one of {KINDS}")
    if not ctl.T > 0:
        raise ConfigValidationError("controller.T must be positive")
    ratio = ctl.T / num.h
    if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
        raise ConfigValidationError(f"numerics.h={num.h} must divide controller.T={ctl.T}")
    for key, value in (("model.mu", cfg.model.mu), ("model.p", cfg.model.p)):
        if isinstance(value, str) and not cfg._path(value).exists():
            raise ConfigValidationError(f"{key}: file {value} does not exist")
    for key, value in (("model.kernel", cfg.model.kernel), ("init.profile", cfg.init.profile)):
        if value not in (None, "triangular") and not cfg._path(value).exists():
            raise ConfigValidationError(f"{key}: file {value} does not exist")
    m = cfg.build_model()
    cfg.build_controller()
    cfg.build_initial(m)
    return cfg


def load_config(path) -> ExperimentConfig:
    """Read, parse and validate a configuration file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigValidationError(f"cannot read {path}: {exc}") from exc
    cfg = parse_config_text(text, base_dir=str(path.parent))
    if cfg.name == "custom":
        cfg = replace(cfg, name=path.stem)
    return validate(cfg)

