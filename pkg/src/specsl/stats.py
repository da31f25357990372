"""Statistical checks: energy-distance tests, exchangeability, scaling fits.

The workhorse is a two-sample energy-distance permutation test. For a
pooled sample split into groups A (size n) and B (size m) the statistic is

    E = 2/(nm) sum ||a - b|| - 1/n^2 sum ||a - a'|| - 1/m^2 sum ||b - b'||,

nonnegative, and zero exactly when the two samples coincide as multisets.
Permutation p-values are computed by relabeling the pool; all block sums for
all permutations reduce to one distance-matrix / label-matrix product, which
keeps thousands of permutations tractable at pool sizes in the tens of
thousands.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .targets import MixtureTarget

_MIN_SIDE = 100


@dataclass(frozen=True)
class TwoSampleReport:
    statistic: float
    p_value: float
    n_a: int
    n_b: int
    method: str


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r_squared: float
    points: tuple[tuple[float, float], ...]


def _as_batch(sample) -> np.ndarray:
    arr = np.asarray(sample, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or not np.isfinite(arr).all():
        raise ValueError("samples must be finite vectors of shape (n,) or (n, d)")
    return arr


def _pairwise_distances(pool: np.ndarray) -> np.ndarray:
    """Float32 distance matrix via the Gram identity; fast and compact.

    Squared distances are assembled as ||a||^2 + ||b||^2 - 2<a, b> with a
    single float32 matrix product. Cancellation noise (relative ~1e-6) is
    negligible against the O(1) distances that dominate energy sums.
    """
    p32 = np.ascontiguousarray(pool, dtype=np.float32)
    sq = np.einsum("nd,nd->n", p32, p32)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (p32 @ p32.T)
    np.maximum(d2, 0.0, out=d2)
    np.sqrt(d2, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


def _energy_from_block_sums(s_aa, s_ab, s_bb, n, m):
    return 2.0 * s_ab / (n * m) - s_aa / (n * n) - s_bb / (m * m)


def _cross_distance_sum(a: np.ndarray, b: np.ndarray, chunk: int = 256) -> float:
    """Float64 sum of all cross distances by direct differencing.

    Differencing before squaring avoids the Gram-identity cancellation, so
    coincident points contribute exactly zero. Chunked over rows of ``a`` to
    bound the (chunk, m, d) intermediate.
    """
    total = 0.0
    for start in range(0, a.shape[0], chunk):
        diff = a[start : start + chunk, None, :] - b[None, :, :]
        total += float(np.sqrt(np.einsum("imd,imd->im", diff, diff)).sum())
    return total


def energy_statistic(sample_a, sample_b) -> float:
    """Energy distance statistic alone, in float64, without a permutation test."""
    a = _as_batch(sample_a)
    b = _as_batch(sample_b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    n, m = a.shape[0], b.shape[0]
    s_aa = _cross_distance_sum(a, a)
    s_bb = _cross_distance_sum(b, b)
    s_ab = _cross_distance_sum(a, b)
    return max(_energy_from_block_sums(s_aa, s_ab, s_bb, n, m), 0.0)


def energy_test(sample_a, sample_b, n_perm: int = 500, seed: int = 0) -> TwoSampleReport:
    """Two-sample energy-distance permutation test.

    The observed statistic is ranked against ``n_perm`` label permutations of
    the pooled sample; the p-value uses the add-one estimator
    ``(1 + #{perm >= observed}) / (1 + n_perm)`` and is therefore exactly
    valid under the null. Both samples must have at least 100 points.
    """
    a = _as_batch(sample_a)
    b = _as_batch(sample_b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    n, m = a.shape[0], b.shape[0]
    if n < _MIN_SIDE or m < _MIN_SIDE:
        raise ValueError(f"need at least {_MIN_SIDE} points per sample, got {n} and {m}")
    if n_perm < 1:
        raise ValueError(f"need at least one permutation, got {n_perm}")

    pool = np.vstack([a, b])
    total = n + m
    dist = _pairwise_distances(pool)
    total_sum = float(dist.sum(dtype=np.float64))

    rng = np.random.default_rng(seed)
    labels = np.zeros((total, n_perm + 1), dtype=np.float32)
    labels[:n, 0] = 1.0
    for p in range(1, n_perm + 1):
        labels[rng.permutation(total)[:n], p] = 1.0

    # One GEMM gives sum_j dist[i, j] * label[j, p] for every permutation.
    row_sums = dist @ labels
    s_aa = np.einsum("ip,ip->p", labels, row_sums, dtype=np.float64)
    col_totals = row_sums.sum(axis=0, dtype=np.float64)
    s_ab = col_totals - s_aa
    s_bb = total_sum - 2.0 * s_ab - s_aa
    stats = _energy_from_block_sums(s_aa, s_ab, s_bb, n, m)

    observed = stats[0]
    p_value = float((1 + int((stats[1:] >= observed).sum())) / (1 + n_perm))
    # Report the statistic from float64 block sums so tiny values are exact.
    statistic = energy_statistic(a, b) if total <= 4000 else max(float(observed), 0.0)
    return TwoSampleReport(statistic=statistic, p_value=p_value, n_a=n, n_b=m, method="energy-permutation")


def ks_per_dim_test(sample_a, sample_b) -> TwoSampleReport:
    """Per-coordinate two-sample Kolmogorov-Smirnov with Bonferroni combination."""
    from scipy.stats import ks_2samp

    a = _as_batch(sample_a)
    b = _as_batch(sample_b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    stats = []
    p_values = []
    for j in range(a.shape[1]):
        res = ks_2samp(a[:, j], b[:, j])
        stats.append(float(res.statistic))
        p_values.append(float(res.pvalue))
    combined = min(1.0, a.shape[1] * min(p_values))
    return TwoSampleReport(
        statistic=max(stats), p_value=combined, n_a=a.shape[0], n_b=b.shape[0], method="ks-per-dim"
    )


def sample_increment_blocks(
    target: MixtureTarget,
    t_start: float,
    eta: float,
    m: int,
    n: int,
    rng: np.random.Generator,
    double_variance_at: int | None = None,
) -> np.ndarray:
    """Draw ``n`` tuples of ``m`` consecutive observation-process increments.

    The observation path is ``y_t = t * x + W_t`` for a fresh target draw
    ``x`` and Brownian ``W``; increments are taken over the equally spaced
    times ``t_start + k * eta``. ``double_variance_at=k`` doubles the
    Brownian variance of increment ``k`` (0-based), deliberately breaking the
    equal-step structure for control experiments. Returns shape (n, m, d).
    """
    if m < 2:
        raise ValueError(f"need at least two increments, got m={m}")
    if eta <= 0.0 or t_start < 0.0:
        raise ValueError(f"need eta > 0 and t_start >= 0, got {eta}, {t_start}")
    x = target.sample(rng, n)
    d = target.dim
    scales = np.full(m, np.sqrt(eta))
    if double_variance_at is not None:
        if not 0 <= double_variance_at < m:
            raise ValueError(f"violation index {double_variance_at} outside [0, {m})")
        scales[double_variance_at] *= np.sqrt(2.0)
    w_increments = scales[None, :, None] * rng.standard_normal((n, m, d))
    times = t_start + eta * np.arange(m + 1)
    w_start = np.sqrt(times[0]) * rng.standard_normal((n, d)) if times[0] > 0 else np.zeros((n, d))
    w_paths = w_start[:, None, :] + np.concatenate(
        [np.zeros((n, 1, d)), np.cumsum(w_increments, axis=1)], axis=1
    )
    y = times[None, :, None] * x[:, None, :] + w_paths
    return np.diff(y, axis=1)


def exchangeability_test(
    target: MixtureTarget,
    t_start: float,
    eta,
    m: int,
    n_samples: int,
    seed: int,
    perm: tuple[int, ...] | None = None,
    n_perm: int = 500,
    double_variance_at: int | None = None,
) -> TwoSampleReport:
    """Test that equally spaced observation increments are exchangeable.

    Two independent batches of increment tuples are drawn; the second has its
    blocks reordered by ``perm`` (default: full reversal). Both are compared
    as vectors in R^(m*d) with the energy permutation test. Under equal step
    sizes the tuple law is exchangeable, so any reordering leaves it
    unchanged and the test holds at its nominal level.

    ``eta`` may be a scalar or a sequence of per-increment step sizes; a
    sequence must be constant, otherwise the exchangeability premise fails
    and a ``ValueError`` is raised.
    """
    eta_arr = np.atleast_1d(np.asarray(eta, dtype=np.float64))
    if eta_arr.size > 1 and not np.all(eta_arr == eta_arr[0]):
        raise ValueError(f"increments must be equally spaced, got steps {eta_arr.tolist()}")
    eta_val = float(eta_arr[0])
    if perm is None:
        perm = tuple(range(m - 1, -1, -1))
    if sorted(perm) != list(range(m)):
        raise ValueError(f"perm {perm} is not a permutation of range({m})")
    if tuple(perm) == tuple(range(m)):
        raise ValueError("identity permutation tests nothing; move at least one block")

    rng = np.random.default_rng(seed)
    blocks_a = sample_increment_blocks(
        target, t_start, eta_val, m, n_samples, rng, double_variance_at
    )
    blocks_b = sample_increment_blocks(
        target, t_start, eta_val, m, n_samples, rng, double_variance_at
    )
    flat_a = blocks_a.reshape(n_samples, -1)
    flat_b = blocks_b[:, list(perm), :].reshape(n_samples, -1)
    return energy_test(flat_a, flat_b, n_perm=n_perm, seed=rng.integers(2**63))


def fit_scaling(points) -> SlopeFit:
    """Least-squares slope of log(mean rounds) against log(step count).

    ``points`` is a sequence of ``(K, mean_R)`` pairs, at least five, with the
    K values spanning at least 1.5 decades. The fit is done on centered
    logarithms, which makes the slope invariant to rescaling either axis.
    """
    pts = [(float(k), float(r)) for k, r in points]
    if len(pts) < 5:
        raise ValueError(f"need at least 5 points for a slope fit, got {len(pts)}")
    ks = np.array([p[0] for p in pts])
    rs = np.array([p[1] for p in pts])
    if (ks <= 0).any() or (rs <= 0).any():
        raise ValueError("scaling points must be positive")
    if np.log10(ks.max() / ks.min()) < 1.5:
        raise ValueError("K values must span at least 1.5 decades")
    x = np.log(ks)
    y = np.log(rs)
    xc = x - x.mean()
    yc = y - y.mean()
    slope = float((xc @ yc) / (xc @ xc))
    intercept = float(y.mean() - slope * x.mean())
    residual = yc - slope * xc
    ss_res = float(residual @ residual)
    ss_tot = float(yc @ yc)
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return SlopeFit(
        slope=slope,
        intercept=intercept,
        r_squared=r_squared,
        points=tuple((float(a), float(b)) for a, b in zip(x, y)),
    )
