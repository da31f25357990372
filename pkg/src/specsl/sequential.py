"""Sequential Euler sampler for the localization process.

The reference sampler: starting from ``y_0 = 0``, each step moves to the
conditional target mean and adds fresh scaled noise,

    y_{i+1} = y_i + eta_i * m(t_i, y_i) + sigma_{i+1} * xi_{i+1},

consuming exactly one oracle evaluation per step. The speculative engine
must reproduce this chain in law, and bit-for-bit when its window length
is one, so the arithmetic here is deliberately written in the same order
as the engine's proposal construction.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .schedules import TimeGrid
from .tape import RandomTape


@dataclass(frozen=True)
class Trajectory:
    """States ``y_0 .. y_K`` on a grid; ``states[i]`` belongs to ``times[i]``."""

    grid: TimeGrid
    states: np.ndarray

    def __post_init__(self) -> None:
        states = np.asarray(self.states, dtype=np.float64)
        if states.ndim != 2 or states.shape[0] != self.grid.times.size:
            raise ValueError(
                f"states shape {states.shape} does not cover the grid "
                f"({self.grid.times.size} time points)"
            )
        states.flags.writeable = False
        object.__setattr__(self, "states", states)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]


def _record_sequential(oracle) -> None:
    record = getattr(oracle, "record_sequential_call", None)
    if record is not None:
        record()


def target_mean(oracle, grid: TimeGrid, i: int, y_i: np.ndarray) -> np.ndarray:
    """Conditional mean of ``y_{i+1}`` given ``y_i``: one oracle evaluation."""
    if not 0 <= i < grid.num_steps:
        raise IndexError(f"step index {i} outside [0, {grid.num_steps})")
    drift = oracle(float(grid.times[i]), y_i)
    _record_sequential(oracle)
    return y_i + grid.steps[i] * drift


def sample_sequential(
    oracle, grid: TimeGrid, tape: RandomTape, y0: np.ndarray | None = None
) -> Trajectory:
    """Run the Euler chain over the full grid using the tape's noise."""
    tape.check_covers(grid.num_steps, oracle.dim)
    states = np.empty((grid.num_steps + 1, oracle.dim))
    states[0] = 0.0 if y0 is None else np.asarray(y0, dtype=np.float64)
    y = states[0]
    for i in range(grid.num_steps):
        mean = target_mean(oracle, grid, i, y)
        y = mean + grid.noise_scales[i] * tape.normals[i]
        states[i + 1] = y
    return Trajectory(grid=grid, states=states)


class DenoisedOutput(NamedTuple):
    scaled: np.ndarray  # y_K / t_K, the raw localization output
    posterior: np.ndarray  # m(t_K, y_K), the oracle's final denoised guess


def denoised_output(oracle, traj: Trajectory) -> DenoisedOutput:
    """Both terminal readouts; callers pick the one they report."""
    t_end = float(traj.grid.times[-1])
    if t_end <= 0.0:
        raise ValueError(f"terminal time must be positive, got {t_end}")
    y_end = traj.terminal
    return DenoisedOutput(scaled=y_end / t_end, posterior=oracle(t_end, y_end))
