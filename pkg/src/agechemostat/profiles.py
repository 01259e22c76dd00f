"""Sampled functions on the uniform age grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

MIN_NODES = 4


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise ValidationError("samples must be one-dimensional")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class AgeProfile:
    """Values of a function of age at a = j*h, j = 0..N."""

    h: float
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values))
        if not self.h > 0:
            raise ValidationError(f"grid step must be positive, got {self.h}")
        if self.N < MIN_NODES:
            raise ValidationError(f"need at least {MIN_NODES} cells, got {self.N}")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("profile samples must be finite")

    @property
    def N(self) -> int:
        return self.values.size - 1

    @property
    def A(self) -> float:
        return self.N * self.h

    @property
    def ages(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.h

    def is_positive(self) -> bool:
        return bool(np.all(self.values > 0))


@dataclass(frozen=True, eq=False)
class History:
    """A segment x(-a), a in [0, A], stored lag-first: ``values[j] = x(-j*h)``.

    ``values[0]`` is the current value x(0); ``values[-1]`` is the oldest.
    Lag-first order matches age order, so a history built from an age
    profile needs no reversal.
    """

    h: float
    values: np.ndarray
    compatible: bool | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values))
        if not self.h > 0:
            raise ValidationError(f"grid step must be positive, got {self.h}")
        if self.values.size - 1 < MIN_NODES:
            raise ValidationError(f"need at least {MIN_NODES} cells")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("history samples must be finite")

    @property
    def N(self) -> int:
        return self.values.size - 1

    @property
    def A(self) -> float:
        return self.N * self.h

    @property
    def lags(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.h

    @property
    def current(self) -> float:
        return float(self.values[0])

    def chronological(self) -> np.ndarray:
        """Samples ordered from x(-A) up to x(0)."""
        return self.values[::-1].copy()

    @classmethod
    def from_chronological(cls, values, h: float, compatible: bool | None = None) -> "History":
        return cls(h, np.asarray(values, dtype=float)[::-1], compatible)
