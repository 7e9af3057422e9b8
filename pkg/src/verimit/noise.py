"""Time-dependent noise scheduling.

A schedule assigns every round index a scaling value s: either a constant
level, or a reflecting random walk on [s_lo, s_hi] that steps once per
``step_period`` rounds, started at the interval midpoint.  Scaling maps a
base model's error probabilities p to p * (2 - s), clamped to [0, 1], so
s = 1 reproduces the base rates and s = 0.8 means 1.2x base rates (low s =
high noise).
"""

from __future__ import annotations

import importlib.resources
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .sim import NoiseModel

KIND_RANDOM_WALK = "random-walk"
KIND_CONSTANT = "constant"

_WALK_STREAM = 0x57414C4B  # derived-stream tag for walk steps


@dataclass
class NoiseSchedule:
    kind: str = KIND_RANDOM_WALK
    s_lo: float = 0.8
    s_hi: float = 1.0
    step_period: int = 1000
    step_size: float = 0.01
    constant_level: float = 0.9
    seed: int = 0

    _steps: list[float] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        if self.kind not in (KIND_RANDOM_WALK, KIND_CONSTANT):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not self.s_lo < self.s_hi:
            raise ValueError("need s_lo < s_hi")
        if self.kind == KIND_CONSTANT and not self.s_lo <= self.constant_level <= self.s_hi:
            raise ValueError("constant level outside [s_lo, s_hi]")
        if self.step_period < 1:
            raise ValueError("step_period must be >= 1")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")

    def _extend_walk(self, upto_step: int) -> None:
        if not self._steps:
            self._steps.append((self.s_lo + self.s_hi) / 2.0)
        if upto_step < len(self._steps):
            return
        # each step's direction is derived from (seed, step index) alone, so
        # the series never depends on how it was queried
        first = len(self._steps)
        count = upto_step - first + 1
        rng = np.random.default_rng([self.seed, _WALK_STREAM])
        ups = rng.random(upto_step + 1)[first:] < 0.5
        for up in ups[:count]:
            move = self.step_size if up else -self.step_size
            s = self._steps[-1] + move
            # reflect at the interval boundaries
            if s > self.s_hi:
                s = 2.0 * self.s_hi - s
            if s < self.s_lo:
                s = 2.0 * self.s_lo - s
            self._steps.append(s)

    def s_at_round(self, i: int) -> float:
        """Scaling value for round ``i``; constant within each step period."""
        if i < 0:
            raise ValueError("round index must be non-negative")
        if self.kind == KIND_CONSTANT:
            return self.constant_level
        step = i // self.step_period
        self._extend_walk(step)
        return self._steps[step]

    def s_series(self, n_rounds: int, offset: int = 0) -> np.ndarray:
        """Per-round s values for rounds [offset, offset + n_rounds)."""
        if self.kind == KIND_CONSTANT:
            return np.full(n_rounds, self.constant_level)
        last = (offset + max(n_rounds - 1, 0)) // self.step_period
        self._extend_walk(last)
        idx = (np.arange(offset, offset + n_rounds)) // self.step_period
        return np.asarray(self._steps)[idx]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "s_lo": self.s_lo,
            "s_hi": self.s_hi,
            "step_period": self.step_period,
            "step_size": self.step_size,
            "constant_level": self.constant_level,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "NoiseSchedule":
        fields = {k: raw[k] for k in (
            "kind", "s_lo", "s_hi", "step_period", "step_size", "constant_level", "seed",
        ) if k in raw}
        return cls(**fields)


def s_at_round(schedule: NoiseSchedule, i: int) -> float:
    return schedule.s_at_round(i)


@dataclass(frozen=True)
class ScaledModel:
    base: NoiseModel
    s: float
    effective: NoiseModel

    def __post_init__(self) -> None:
        for v in self.effective.as_dict().values():
            if not 0.0 <= v <= 1.0:
                raise ValueError("effective probabilities escaped [0, 1]")


def scale_model(base: NoiseModel, s: float, s_lo: float = 0.8, s_hi: float = 1.0) -> ScaledModel:
    """Every error probability multiplied by (2 - s) and clamped to [0, 1]."""
    if not s_lo <= s <= s_hi:
        raise ValueError(f"scale {s} outside [{s_lo}, {s_hi}]")
    factor = 2.0 - s
    effective = NoiseModel(
        **{k: min(1.0, v * factor) for k, v in base.as_dict().items()}
    )
    return ScaledModel(base=base, s=s, effective=effective)


def default_base_model() -> NoiseModel:
    """The shipped base model, calibrated so the built-in CNOT pattern's
    mean test failure rate sits near 0.15 at s = 0.9."""
    ref = importlib.resources.files("verimit").joinpath("data/base_noise_model.json")
    with importlib.resources.as_file(ref) as path:
        return NoiseModel.from_json(path)


def default_coupling_path() -> Path:
    ref = importlib.resources.files("verimit").joinpath("data/heavy_hex_coupling.json")
    with importlib.resources.as_file(ref) as path:
        return Path(path)
