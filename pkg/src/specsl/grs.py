"""Gaussian reflection-coupled rejection step.

Given a shared standard Gaussian draw ``xi`` and a shared uniform ``u``, the
step turns a proposal ``proposal_mean + sigma * xi`` into an exact sample
from ``N(target_mean, sigma^2 I)``: accepted draws keep the proposal,
rejected draws are reflected across the hyperplane orthogonal to the mean
discrepancy. Unconditionally over accept/reject the output has the target
law, and the rejection probability equals the total variation distance
between the two Gaussians.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Mean discrepancies below this multiple of sigma are treated as zero; the
# densities are then identical and the acceptance test would be 0 <= 0 up to
# roundoff, so accepting outright avoids a sign flip on noise-level inputs.
_NEGLIGIBLE_REL_DISCREPANCY = 1e-14


@dataclass(frozen=True)
class GrsOutcome:
    """Exact sample from the target Gaussian plus the accept/reject flag."""

    sample: np.ndarray
    accepted: bool


def grs_step(
    u: float,
    xi: np.ndarray,
    proposal_mean: np.ndarray,
    target_mean: np.ndarray,
    sigma: float,
) -> GrsOutcome:
    """Accept or reflect one shared-noise proposal; see module docstring.

    ``u`` must lie in [0, 1) and ``xi`` must be the same standard normal
    vector that produced the proposal sample ``proposal_mean + sigma * xi``.
    """
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if not 0.0 <= u < 1.0:
        raise ValueError(f"uniform draw must be in [0, 1), got {u}")
    xi = np.asarray(xi, dtype=np.float64)
    proposal_mean = np.asarray(proposal_mean, dtype=np.float64)
    target_mean = np.asarray(target_mean, dtype=np.float64)

    v = proposal_mean - target_mean
    v_sq = float(v @ v)
    v_norm = math.sqrt(v_sq)
    if v_norm < _NEGLIGIBLE_REL_DISCREPANCY * sigma:
        return GrsOutcome(sample=proposal_mean + sigma * xi, accepted=True)

    # log of the density ratio N(xi + v/sigma; 0, I) / N(xi; 0, I)
    v_dot_xi = float(v @ xi)
    log_ratio = -(2.0 * v_dot_xi / sigma + v_sq / (sigma * sigma)) / 2.0
    log_u = math.log(u) if u > 0.0 else -math.inf
    if log_u <= min(0.0, log_ratio):
        return GrsOutcome(sample=proposal_mean + sigma * xi, accepted=True)
    reflected = xi - (2.0 * v_dot_xi / v_sq) * v
    return GrsOutcome(sample=target_mean + sigma * reflected, accepted=False)


def gaussian_tv(mean_a: np.ndarray, mean_b: np.ndarray, sigma: float) -> float:
    """Total variation distance between two isotropic Gaussians of equal scale."""
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    diff = np.asarray(mean_a, dtype=np.float64) - np.asarray(mean_b, dtype=np.float64)
    z = math.sqrt(float(diff @ diff)) / (2.0 * sigma)
    return math.erf(z / math.sqrt(2.0))
