"""Cumulative noise schedules for deterministic diffusion trajectories."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Signal-retention curve alpha_bar[0..T].

    alpha_bar[t] is the fraction of clean-signal variance kept at timestep t:
    alpha_bar[0] = 1 (clean image), strictly decreasing in t, and
    alpha_bar[T] > 0 so the deepest timestep still carries usable signal.
    """

    alpha_bar: np.ndarray

    def __post_init__(self) -> None:
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        object.__setattr__(self, "alpha_bar", ab)
        if ab.ndim != 1 or ab.size < 2:
            raise ValueError("alpha_bar must be 1-D with length T+1, T >= 1")
        if not np.all(np.isfinite(ab)):
            raise ValueError("alpha_bar contains non-finite entries")
        if not (1.0 - 1e-4 < float(ab[0]) <= 1.0):
            raise ValueError(f"alpha_bar[0] must be 1.0 (clean image), got {ab[0]}")
        if float(ab[-1]) <= 0.0:
            raise ValueError(f"alpha_bar[T] must remain positive, got {ab[-1]}")
        if not np.all(np.diff(ab) < 0.0):
            raise ValueError("alpha_bar must be strictly decreasing")

    @property
    def T(self) -> int:
        return int(self.alpha_bar.size - 1)

    @classmethod
    def linear_beta(
        cls,
        T: int = 100,
        beta_start: float = 1e-4,
        beta_end: float = 0.02,
    ) -> "NoiseSchedule":
        """Linear per-step noise rates; alpha_bar[t] = prod_{s<=t}(1 - beta_s)."""
        if T < 1:
            raise ValueError("T must be >= 1")
        if not 0.0 < beta_start <= beta_end < 1.0:
            raise ValueError("need 0 < beta_start <= beta_end < 1")
        betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
        alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        return cls(alpha_bar)

    @classmethod
    def _unchecked(cls, alpha_bar: np.ndarray) -> "NoiseSchedule":
        # Bypasses monotonicity validation. Exists for algebraic edge-case
        # tests (e.g. a flat segment making one step an exact identity);
        # never used by library code.
        obj = object.__new__(cls)
        object.__setattr__(obj, "alpha_bar", np.asarray(alpha_bar, dtype=np.float64))
        return obj
