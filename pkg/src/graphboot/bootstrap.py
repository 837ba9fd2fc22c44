"""Exponential-moving-average target maintenance.

The target network is a slow-moving copy of the online network: after
every optimizer step, each target value moves toward its online
counterpart under a decay that follows a cosine schedule from t_base at
step 0 up to exactly 1.0 at the final step. No gradient ever flows
through the target side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class EmaSchedule:
    """Cosine-increasing decay schedule.

    decay(step) = 1 - (1 - t_base) * (cos(pi * step / total_steps) + 1) / 2
    """

    t_base: float = 0.99
    total_steps: int = 0
    current_step: int = 0

    def __post_init__(self):
        if not (0.0 <= self.t_base <= 1.0):
            raise ValueError(f"t_base={self.t_base} outside [0, 1]")
        if self.total_steps < 0 or self.current_step < 0:
            raise ValueError("steps must be non-negative")


def ema_decay_at(schedule: EmaSchedule) -> float:
    """Decay for the schedule's current step; 1.0 when total_steps == 0."""
    if schedule.total_steps == 0:
        return 1.0
    frac = schedule.current_step / schedule.total_steps
    return 1.0 - (1.0 - schedule.t_base) * (math.cos(math.pi * frac) + 1.0) / 2.0


def ema_update(target: list[np.ndarray], online: list[np.ndarray], decay: float) -> None:
    """In place: target <- decay * target + (1 - decay) * online.

    target and online are parallel lists of arrays (weights, biases,
    slopes, batchnorm affine parameters and running statistics). decay 1.0
    leaves the target bit-identical; decay 0.0 copies the online values
    bit-identically.
    """
    if not (0.0 <= decay <= 1.0):
        raise ValueError(f"decay={decay} outside [0, 1]")
    if len(target) != len(online):
        raise ValueError(f"{len(target)} target arrays vs {len(online)} online arrays")
    for t, o in zip(target, online):
        if t.shape != o.shape:
            raise ValueError(f"shape mismatch {t.shape} vs {o.shape}")
        if decay == 1.0:
            continue
        if decay == 0.0:
            t[:] = o
        else:
            t[:] = decay * t + (1.0 - decay) * o
