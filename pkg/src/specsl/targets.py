"""Mixture targets and their exact posterior-mean oracles.

The localization drift at time ``t`` and state ``y`` is the posterior mean of
a clean draw ``x`` given the observation ``y = t*x + sqrt(t)*xi``. For finite
mixtures of isotropic Gaussians (point masses allowed as zero-width
components) this mean is available in closed form, which makes exact
small-scale sampling possible with no learned model in the loop.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


class UnreliableEstimateError(RuntimeError):
    """Importance-sampling diagnostics indicate a worthless estimate."""


@dataclass(frozen=True)
class MixtureTarget:
    """Finite mixture of isotropic Gaussian components in R^d.

    ``stds[k] == 0`` makes component ``k`` a point mass at ``centers[k]``;
    mixed point/Gaussian components are allowed.
    """

    weights: np.ndarray
    centers: np.ndarray
    stds: np.ndarray

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights, dtype=np.float64)
        centers = np.atleast_2d(np.asarray(self.centers, dtype=np.float64))
        stds = np.asarray(self.stds, dtype=np.float64)
        if weights.ndim != 1 or weights.size == 0:
            raise ValueError("weights must be a nonempty 1-d array")
        if centers.shape[0] != weights.size or stds.shape != weights.shape:
            raise ValueError(
                f"inconsistent component counts: {weights.size} weights, "
                f"{centers.shape[0]} centers, {stds.size} stds"
            )
        if not np.isfinite(weights).all() or (weights <= 0.0).any():
            raise ValueError("weights must be positive and finite")
        if abs(float(weights.sum()) - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {float(weights.sum())!r}")
        if not np.isfinite(centers).all() or not np.isfinite(stds).all() or (stds < 0.0).any():
            raise ValueError("centers must be finite and stds finite and nonnegative")
        for arr in (weights, centers, stds):
            arr.flags.writeable = False
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "stds", stds)

    @classmethod
    def points(cls, weights, centers) -> "MixtureTarget":
        centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
        return cls(weights=np.asarray(weights), centers=centers, stds=np.zeros(centers.shape[0]))

    @classmethod
    def gaussians(cls, weights, centers, stds) -> "MixtureTarget":
        return cls(weights=np.asarray(weights), centers=np.asarray(centers), stds=np.asarray(stds))

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    @property
    def num_components(self) -> int:
        return self.weights.size

    def mean(self) -> np.ndarray:
        return self.weights @ self.centers

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``n`` points: component indices first, then component noise."""
        idx = rng.choice(self.num_components, size=n, p=self.weights)
        out = self.centers[idx].copy()
        noisy = self.stds[idx] > 0.0
        if noisy.any():
            out[noisy] += self.stds[idx][noisy, None] * rng.standard_normal((int(noisy.sum()), self.dim))
        return out


def covariance_trace(target: MixtureTarget) -> float:
    """Trace of the mixture covariance, sum of within- and between-component parts."""
    d = target.dim
    within = float(target.weights @ (d * target.stds**2))
    second_moment = float(target.weights @ np.sum(target.centers**2, axis=1))
    mean = target.mean()
    return within + second_moment - float(mean @ mean)


def posterior_mean(target: MixtureTarget, t, y: np.ndarray) -> np.ndarray:
    """Posterior mean of a clean draw given observation ``y = t*x + sqrt(t)*xi``.

    ``y`` may be a single state ``(d,)`` or a batch ``(n, d)``; ``t`` may be a
    scalar or, for batched ``y``, a per-row vector ``(n,)``. At ``t == 0`` the
    observation is uninformative and the prior mean is returned.

    The batch path is row-local: every output row is a function of its own
    ``(t, y)`` pair only, so results are bit-identical under any partitioning
    of the batch.
    """
    y = np.asarray(y, dtype=np.float64)
    if np.isnan(y).any():
        raise ValueError("NaN in observation")
    single = y.ndim == 1
    pts = y[None, :] if single else y
    if pts.ndim != 2 or pts.shape[1] != target.dim:
        raise ValueError(f"observation shape {y.shape} does not match dim {target.dim}")

    t_arr = np.asarray(t, dtype=np.float64)
    if np.isnan(t_arr).any() or (t_arr < 0.0).any():
        raise ValueError(f"time must be nonnegative, got {t}")
    if t_arr.ndim == 0:
        if float(t_arr) == 0.0:
            out = np.broadcast_to(target.mean(), pts.shape).copy()
            return out[0] if single else out
        t_col = np.full((pts.shape[0], 1), float(t_arr))
    else:
        if t_arr.shape != (pts.shape[0],):
            raise ValueError(f"time vector shape {t_arr.shape} does not match batch {pts.shape}")
        if (t_arr == 0.0).any():
            # Mixed zero/positive times fall back to per-row evaluation.
            rows = [posterior_mean(target, float(ti), row) for ti, row in zip(t_arr, pts)]
            return np.stack(rows)
        t_col = t_arr[:, None]

    var = t_col**2 * target.stds**2 + t_col  # (n, k) observation variance per component
    resid = pts[:, None, :] - t_col[:, :, None] * target.centers[None, :, :]
    # Inputs far outside the observation law (e.g. denormal t with large y)
    # underflow every component weight; that case ends in the RuntimeError
    # below, so the intermediate overflow is expected rather than a defect.
    with np.errstate(over="ignore", divide="ignore"):
        log_post = (
            np.log(target.weights)[None, :]
            - 0.5 * target.dim * np.log(var)
            - 0.5 * np.sum(resid * resid, axis=-1) / var
        )
    row_max = log_post.max(axis=1, keepdims=True)
    if not np.isfinite(row_max).all():
        raise RuntimeError("posterior weights degenerate: no component has finite log-weight")
    post = np.exp(log_post - row_max)
    post /= post.sum(axis=1, keepdims=True)
    # Component posterior means; the form below is exact for stds == 0 as well.
    s2 = (target.stds**2)[None, :, None]
    denom = 1.0 + (target.stds**2)[None, :] * t_col
    comp_means = (target.centers[None, :, :] + s2 * pts[:, None, :]) / denom[:, :, None]
    out = np.einsum("nk,nkd->nd", post, comp_means)
    return out[0] if single else out


class McEstimate(NamedTuple):
    mean: np.ndarray
    se: np.ndarray
    ess: float


def monte_carlo_posterior_mean(
    target: MixtureTarget, t: float, y: np.ndarray, n: int, seed: int
) -> McEstimate:
    """Self-normalized importance-sampling check of :func:`posterior_mean`.

    Draws ``n`` prior samples, weights them by the Gaussian observation
    likelihood in log space, and returns the weighted mean with a
    delta-method standard error per coordinate. Raises
    :class:`UnreliableEstimateError` when the effective sample size drops
    below 10.
    """
    if n < 1000:
        raise ValueError(f"need at least 1000 draws for a usable check, got {n}")
    if t <= 0.0:
        raise ValueError(f"time must be positive, got {t}")
    y = np.asarray(y, dtype=np.float64)
    rng = np.random.default_rng(seed)
    draws = target.sample(rng, n)
    resid = y[None, :] - t * draws
    log_w = -0.5 * np.einsum("nd,nd->n", resid, resid) / t
    log_w -= log_w.max()
    w = np.exp(log_w)
    w /= w.sum()
    ess = 1.0 / float(w @ w)
    if ess < 10.0:
        raise UnreliableEstimateError(
            f"effective sample size {ess:.2f} < 10 at t={t}, n={n}; "
            "the proposal barely overlaps the posterior"
        )
    mean = w @ draws
    se = np.sqrt(np.einsum("n,nd->d", w**2, (draws - mean) ** 2))
    return McEstimate(mean=mean, se=se, ess=ess)


@dataclass
class OracleStats:
    """Call accounting for a mean oracle; all updates are lock-protected."""

    sequential_calls: int = 0
    parallel_rounds: int = 0
    total_evals: int = 0

    def snapshot(self) -> "OracleStats":
        return OracleStats(self.sequential_calls, self.parallel_rounds, self.total_evals)


class PosteriorMeanOracle:
    """Exact mean oracle for a mixture target, callable on states or batches."""

    def __init__(self, target: MixtureTarget):
        self.target = target
        self.dim = target.dim

    def __call__(self, t, y: np.ndarray) -> np.ndarray:
        return posterior_mean(self.target, t, y)


class CountingOracle:
    """Pass-through wrapper that meters sequential calls and parallel rounds.

    Evaluation results are returned unchanged; callers are responsible for
    recording once per logical event (one sequential call, or one round of
    ``n_evals`` simultaneous evaluations).
    """

    def __init__(self, oracle):
        self._oracle = oracle
        self.dim = oracle.dim
        self.stats = OracleStats()
        self._lock = threading.Lock()

    def __call__(self, t, y: np.ndarray) -> np.ndarray:
        return self._oracle(t, y)

    def record_sequential_call(self) -> None:
        with self._lock:
            self.stats.sequential_calls += 1
            self.stats.total_evals += 1

    def record_parallel_round(self, n_evals: int) -> None:
        with self._lock:
            self.stats.parallel_rounds += 1
            self.stats.total_evals += n_evals


def counted(oracle) -> CountingOracle:
    """Wrap ``oracle`` with call accounting; see :class:`CountingOracle`."""
    if isinstance(oracle, CountingOracle):
        return oracle
    return CountingOracle(oracle)
