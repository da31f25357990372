"""Pre-drawn randomness shared by the sequential and speculative samplers.

All randomness for a run is drawn up front from a single seed: one uniform
and one Gaussian vector per step. Entry ``i`` (0-based) belongs to the step
from grid index ``i`` to ``i + 1`` and is read, never redrawn, every time a
speculation window revisits that step. This makes any run a deterministic
function of its seed regardless of how verification windows land.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class TapeError(ValueError):
    """The tape does not cover the requested run."""


@dataclass(frozen=True)
class RandomTape:
    """Frozen per-step randomness: ``uniforms`` (K,), ``normals`` (K, d)."""

    seed: int
    uniforms: np.ndarray
    normals: np.ndarray

    def __post_init__(self) -> None:
        uniforms = np.asarray(self.uniforms, dtype=np.float64)
        normals = np.asarray(self.normals, dtype=np.float64)
        if uniforms.ndim != 1 or normals.ndim != 2 or normals.shape[0] != uniforms.size:
            raise TapeError(
                f"inconsistent tape shapes: uniforms {uniforms.shape}, normals {normals.shape}"
            )
        for arr in (uniforms, normals):
            arr.flags.writeable = False
        object.__setattr__(self, "uniforms", uniforms)
        object.__setattr__(self, "normals", normals)

    @classmethod
    def draw(cls, seed: int, num_steps: int, dim: int) -> "RandomTape":
        if num_steps < 1 or dim < 1:
            raise TapeError(f"need num_steps >= 1 and dim >= 1, got {num_steps}, {dim}")
        rng = np.random.default_rng(seed)
        return cls(
            seed=int(seed),
            uniforms=rng.random(num_steps),
            normals=rng.standard_normal((num_steps, dim)),
        )

    @property
    def num_steps(self) -> int:
        return self.uniforms.size

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    def check_covers(self, num_steps: int, dim: int) -> None:
        if self.num_steps < num_steps:
            raise TapeError(f"tape has {self.num_steps} steps, run needs {num_steps}")
        if self.dim != dim:
            raise TapeError(f"tape dimension {self.dim} does not match run dimension {dim}")
