"""Speculative localization sampler.

The sequential chain in :mod:`specsl.sequential` needs one oracle call per
step, each waiting on the previous state. This engine breaks the dependency
with self-speculation: from the last committed state it extrapolates a whole
window of future steps using a single frozen drift evaluation, then checks
every speculated step against its true conditional in one batched oracle
round, committing the longest verified prefix.

Per outer iteration, for committed index ``a`` and window end
``b = min(K, a + theta)``:

1. one sequential oracle call gives the drift ``v = m(t_a, y_a)``;
2. proposal states follow ``yhat_{i+1} = yhat_i + eta_i * v + sigma_{i+1} * xi_{i+1}``
   reusing the run's pre-drawn noise tape;
3. one parallel oracle round evaluates ``m(t_i, yhat_i)`` for all window
   steps, giving each step's true conditional mean;
4. a reflection-coupled rejection step per index, driven by the same tape
   entries, either confirms the proposal or replaces it with a reflected
   exact sample; everything up to and including the first rejection is
   committed and the loop restarts there.

Because the proposal and true means coincide at the first window index, that
index always accepts and the committed index strictly increases. The output
chain is equal in law to the sequential sampler's, and bit-identical to it
when ``theta == 1``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .grs import grs_step
from .schedules import TimeGrid
from .sequential import Trajectory
from .tape import RandomTape
from .targets import CountingOracle, OracleStats, counted


@dataclass
class SpeculationWindow:
    """One speculation attempt over state indices ``(a, b]``.

    ``proposal_states[j]`` is the speculated state at index ``a + j``
    (``proposal_states[0]`` is the committed anchor), ``proposal_means[j]``
    and ``sigmas[j]`` describe the proposal Gaussian for index ``a + 1 + j``,
    and ``target_means`` is filled by the verification round.
    """

    a: int
    b: int
    proposal_states: np.ndarray
    proposal_means: np.ndarray
    sigmas: np.ndarray
    target_means: np.ndarray | None = None

    @property
    def width(self) -> int:
        return self.b - self.a


@dataclass(frozen=True)
class VerifierResult:
    """Per-index exact samples plus the first rejection, if any.

    ``samples[j]`` is the verified sample for state index ``a + 1 + j``.
    Entries beyond the first rejection are not valid commits: their window
    was built on a prefix that the rejection invalidated.
    """

    a: int
    b: int
    samples: np.ndarray
    accepted: np.ndarray
    first_reject: int | None

    @property
    def num_valid(self) -> int:
        return self.b - self.a if self.first_reject is None else self.first_reject - self.a


@dataclass
class RunStats:
    """Engine accounting for one run."""

    theta: int
    iterations: int
    advances: list[int]
    evals_by_offset: np.ndarray
    accepts_by_offset: np.ndarray
    oracle: OracleStats

    @property
    def total_steps(self) -> int:
        return int(sum(self.advances))


def default_theta(K: int, eta: float, beta: float, d: int) -> int:
    """Window length balancing sequential rounds against rejection risk.

    ``beta`` is the per-dimension trace of the target covariance and ``eta``
    an upper bound on the step sizes; the cube-root rule makes the number of
    fully-accepted windows and the number of rejection-triggered restarts
    scale at the same rate.
    """
    if K < 1:
        raise ValueError(f"need K >= 1, got {K}")
    if eta <= 0.0 or beta <= 0.0 or d < 1:
        raise ValueError(f"need eta > 0, beta > 0, d >= 1, got {eta}, {beta}, {d}")
    theta = int(round((K / (beta * eta * d)) ** (1.0 / 3.0)))
    return max(1, min(theta, K))


def build_proposals(
    oracle, grid: TimeGrid, a: int, theta: int, y_a: np.ndarray, tape: RandomTape
) -> SpeculationWindow:
    """Extrapolate a speculation window from ``y_a`` with one oracle call."""
    return _build_window(oracle, grid, a, theta, y_a, tape.normals)


def compute_target_means(
    oracle,
    grid: TimeGrid,
    window: SpeculationWindow,
    pool: ThreadPoolExecutor | None = None,
    n_chunks: int = 1,
) -> SpeculationWindow:
    """Fill in the true conditional means with one parallel oracle round.

    The round evaluates the drift at every window step's speculated state.
    When a pool is given the batch is split into contiguous row chunks and
    results are reassembled positionally; each row depends only on its own
    ``(t, state)`` pair, so the outcome is bit-identical for any chunking.
    """
    a, b = window.a, window.b
    t_vec = grid.times[a:b]
    states = window.proposal_states[:-1]
    if pool is None or n_chunks <= 1 or window.width < 2:
        drift = oracle(t_vec, states)
    else:
        splits = [s for s in np.array_split(np.arange(window.width), n_chunks) if s.size]
        futures = [pool.submit(oracle, t_vec[s], states[s]) for s in splits]
        drift = np.concatenate([f.result() for f in futures], axis=0)
    record = getattr(oracle, "record_parallel_round", None)
    if record is not None:
        record(window.width)
    window.target_means = states + grid.steps[a:b, None] * drift
    return window


def verify(window: SpeculationWindow, tape: RandomTape) -> VerifierResult:
    """Run the per-index rejection steps and locate the first rejection."""
    return _verify_window(window, tape.uniforms, tape.normals)


def _build_window(oracle, grid, a, theta, y_a, normals):
    if theta < 1:
        raise ValueError(f"window length must be >= 1, got {theta}")
    if not 0 <= a < grid.num_steps:
        raise IndexError(f"anchor {a} outside [0, {grid.num_steps})")
    b = min(grid.num_steps, a + theta)
    dim = y_a.shape[0]
    anchor_drift = oracle(float(grid.times[a]), y_a)
    record = getattr(oracle, "record_sequential_call", None)
    if record is not None:
        record()
    width = b - a
    states = np.empty((width + 1, dim))
    means = np.empty((width, dim))
    states[0] = y_a
    y = y_a
    for j in range(width):
        i = a + j
        mean = y + grid.steps[i] * anchor_drift
        y = mean + grid.noise_scales[i] * normals[i]
        means[j] = mean
        states[j + 1] = y
    return SpeculationWindow(
        a=a, b=b, proposal_states=states, proposal_means=means, sigmas=grid.noise_scales[a:b]
    )


def _verify_window(window, uniforms, normals):
    if window.target_means is None:
        raise ValueError("window has no target means; run compute_target_means first")
    a, b = window.a, window.b
    width = window.width
    samples = np.empty_like(window.proposal_means)
    accepted = np.empty(width, dtype=bool)
    first_reject = None
    for j in range(width):
        i = a + j  # tape entry i drives the step onto state index i + 1
        outcome = grs_step(
            float(uniforms[i]),
            normals[i],
            window.proposal_means[j],
            window.target_means[j],
            float(window.sigmas[j]),
        )
        samples[j] = outcome.sample
        accepted[j] = outcome.accepted
        if first_reject is None and not outcome.accepted:
            first_reject = a + 1 + j
    return VerifierResult(a=a, b=b, samples=samples, accepted=accepted, first_reject=first_reject)


def sample_asd(
    oracle,
    grid: TimeGrid,
    theta: int,
    tape: RandomTape,
    y0: np.ndarray | None = None,
    threads: int = 1,
    refresh_tape: bool = False,
) -> tuple[Trajectory, RunStats]:
    """Run the speculative sampler over the full grid.

    Returns the committed trajectory and the run's accounting. The default
    tape policy replays the same pre-drawn randomness whenever a window
    revisits a step; ``refresh_tape=True`` instead redraws the window's tape
    entries before every speculation attempt (both policies are exact, the
    replay policy is what makes ``theta == 1`` runs bit-identical to the
    sequential sampler).
    """
    if theta < 1:
        raise ValueError(f"window length must be >= 1, got {theta}")
    if threads < 1:
        raise ValueError(f"thread count must be >= 1, got {threads}")
    K = grid.num_steps
    tape.check_covers(K, oracle.dim)
    if not isinstance(oracle, CountingOracle):
        oracle = counted(oracle)

    uniforms = tape.uniforms
    normals = tape.normals
    refresh_rng = None
    if refresh_tape:
        uniforms = uniforms.copy()
        normals = normals.copy()
        refresh_rng = np.random.default_rng([tape.seed, 1])

    states = np.empty((K + 1, oracle.dim))
    states[0] = 0.0 if y0 is None else np.asarray(y0, dtype=np.float64)
    advances: list[int] = []
    evals_by_offset = np.zeros(theta, dtype=np.int64)
    accepts_by_offset = np.zeros(theta, dtype=np.int64)

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        a = 0
        while a < K:
            if refresh_rng is not None:
                hi = min(K, a + theta)
                uniforms[a:hi] = refresh_rng.random(hi - a)
                normals[a:hi] = refresh_rng.standard_normal((hi - a, oracle.dim))
            window = _build_window(oracle, grid, a, theta, states[a], normals)
            compute_target_means(oracle, grid, window, pool=pool, n_chunks=threads)
            result = _verify_window(window, uniforms, normals)
            advance = result.num_valid
            # The first window index always agrees with its target, so the
            # committed index must move every iteration.
            assert advance >= 1, "verifier rejected the anchor-adjacent index"
            width = window.width
            evals_by_offset[:width] += 1
            accepts_by_offset[:width] += result.accepted
            states[a + 1 : a + 1 + advance] = result.samples[:advance]
            advances.append(advance)
            a += advance
    finally:
        if pool is not None:
            pool.shutdown(wait=True)

    assert sum(advances) == K, "committed steps do not cover the grid"
    stats = RunStats(
        theta=theta,
        iterations=len(advances),
        advances=advances,
        evals_by_offset=evals_by_offset,
        accepts_by_offset=accepts_by_offset,
        oracle=oracle.stats.snapshot(),
    )
    return Trajectory(grid=grid, states=states), stats


def run_record(
    seed: int, grid: TimeGrid, theta: int, target_spec: dict, traj: Trajectory, stats: RunStats
) -> dict:
    """JSON-ready summary of one engine run."""
    t_end = float(grid.times[-1])
    return {
        "seed": int(seed),
        "K": int(grid.num_steps),
        "theta": int(theta),
        "d": int(traj.dim),
        "target": target_spec,
        "R": int(stats.iterations),
        "sequential_calls": int(stats.oracle.sequential_calls),
        "parallel_rounds": int(stats.oracle.parallel_rounds),
        "advances": [int(x) for x in stats.advances],
        "terminal": [float(x) for x in traj.terminal / t_end],
    }
