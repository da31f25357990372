"""Noising schedules and the change of time/scale into localization coordinates.

A forward noising process is described by a drift multiplier ``h`` and a
diffusion rate ``u``::

    dx_t = h(t) x_t dt + sqrt(u(t)) dW_t,   t in [0, T].

Running this process backwards from noise is equivalent, after a deterministic
change of time and scale, to running the unit-diffusion localization process

    dy_t = m(t, y_t) dt + dB_t,   y_0 = 0,

whose time-t state has the same law as ``t * x + sqrt(t) * xi`` for a draw
``x`` from the data distribution. The bridge between the two clocks is the
cumulative half-log signal-to-noise map

    alpha(t) = 0.5 * log(1 + int_0^t u(tau) exp(-2 int_0^tau h(s) ds) dtau)

together with the scale factor ``r(t) = exp(alpha(t) + int_0^t h)``. A
localization time ``t`` corresponds to the noising time ``T - alpha^{-1}(s(t))``
with ``s(t) = 0.5 * log(1 + 1/t)``, at state scale
``gamma(t) = t * exp(s(t)) / r(alpha^{-1}(s(t)))``.

All integrals are evaluated with adaptive Simpson quadrature; the inverse of
``alpha`` is found by monotone bisection seeded from a cached grid.
"""
from __future__ import annotations

import math
import re
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .numerics import adaptive_simpson, bisect_increasing

_VALIDATION_POINTS = 257


class InvalidScheduleError(ValueError):
    """The schedule's rate functions violate their domain requirements."""


class HorizonError(ValueError):
    """The requested localization time lies beyond the schedule's horizon."""


@dataclass(frozen=True)
class DdpmSchedule:
    """Forward noising schedule: drift multiplier ``h``, diffusion rate ``u``, horizon ``T``.

    Both rate functions must be continuous on ``[0, T]`` with ``u > 0``;
    this is spot-checked on a grid at construction time by the factory
    functions rather than proven.
    """

    h: Callable[[float], float]
    u: Callable[[float], float]
    T: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.T) and self.T > 0):
            raise InvalidScheduleError(f"horizon must be positive and finite, got {self.T}")


def _validate_rates(schedule: DdpmSchedule) -> DdpmSchedule:
    for t in np.linspace(0.0, schedule.T, _VALIDATION_POINTS):
        ut = schedule.u(float(t))
        ht = schedule.h(float(t))
        if not (math.isfinite(ut) and ut > 0.0):
            raise InvalidScheduleError(f"diffusion rate must be positive and finite, got u({t}) = {ut}")
        if not math.isfinite(ht):
            raise InvalidScheduleError(f"drift multiplier must be finite, got h({t}) = {ht}")
    return schedule


def make_vp_schedule(u: Callable[[float], float], T: float = 1.0) -> DdpmSchedule:
    """Variance-preserving schedule: drift locked to ``h = -u/2``."""
    return _validate_rates(DdpmSchedule(h=lambda t: -0.5 * u(t), u=u, T=T))


def make_ve_schedule(u: Callable[[float], float], T: float = 1.0) -> DdpmSchedule:
    """Variance-exploding schedule: zero drift, pure noise injection."""
    return _validate_rates(DdpmSchedule(h=lambda t: 0.0, u=u, T=T))


def ou_schedule(T: float = 1.0) -> DdpmSchedule:
    """Unit-rate mean-reverting schedule: ``u = 2`` and ``h = -1``."""
    return _validate_rates(DdpmSchedule(h=lambda t: -1.0, u=lambda t: 2.0, T=T))


_LIN_RE = re.compile(r"^lin\(([^,]+),([^)]+)\)$")


def parse_schedule_spec(spec: str, T: float) -> DdpmSchedule:
    """Build a schedule from a config string.

    Accepted forms: ``"ou"``; ``"vp:<u>"`` and ``"ve:<u>"`` where ``<u>`` is
    either a positive constant (``"vp:2"``) or ``"lin(a,b)"`` for the linear
    rate ``u(t) = a + b*t``.
    """
    spec = spec.strip()
    if spec == "ou":
        return ou_schedule(T)
    kind, sep, u_spec = spec.partition(":")
    if not sep or kind not in ("vp", "ve"):
        raise InvalidScheduleError(f"unknown schedule spec {spec!r}")
    try:
        m = _LIN_RE.match(u_spec.strip())
        if m:
            a, b = float(m.group(1)), float(m.group(2))
            u = lambda t, a=a, b=b: a + b * t
        else:
            c = float(u_spec)
            u = lambda t, c=c: c
    except ValueError as exc:
        raise InvalidScheduleError(f"bad rate in schedule spec {spec!r}: {exc}") from exc
    factory = make_vp_schedule if kind == "vp" else make_ve_schedule
    return factory(u, T)


def _signal_integrand(schedule: DdpmSchedule, inner_tol: float) -> Callable[[float], float]:
    def f(tau: float) -> float:
        drift_log = adaptive_simpson(schedule.h, 0.0, tau, inner_tol) if tau > 0.0 else 0.0
        return schedule.u(tau) * math.exp(-2.0 * drift_log)

    return f


def _coarse_integral(f: Callable[[float], float], a: float, b: float, panels: int = 64) -> float:
    # Composite Simpson scale estimate; used only to convert the caller's
    # tolerance on the log-scale result into an absolute tolerance on the
    # raw integral, which can be exponentially large in t.
    xs = np.linspace(a, b, 2 * panels + 1)
    ys = np.array([f(float(x)) for x in xs])
    h = (b - a) / (2 * panels)
    return float(h / 3.0 * (ys[0] + ys[-1] + 4.0 * ys[1:-1:2].sum() + 2.0 * ys[2:-2:2].sum()))


def compute_alpha(schedule: DdpmSchedule, t: float, tol: float = 1e-10) -> float:
    """Cumulative half-log signal-to-noise at time ``t``, by nested quadrature.

    The returned value is accurate to an absolute error of ``tol``. The outer
    integral's tolerance is rescaled by a coarse estimate of its magnitude
    because an error of ``eps`` on the inner log-drift integral perturbs the
    result by about ``eps``, while the outer integral itself may be
    exponentially large in ``t``.
    """
    if not 0.0 <= t <= schedule.T:
        raise ValueError(f"time {t} outside schedule domain [0, {schedule.T}]")
    if t == 0.0:
        return 0.0
    inner_tol = 0.25 * tol
    integrand = _signal_integrand(schedule, inner_tol)
    scale = 1.0 + abs(_coarse_integral(integrand, 0.0, t))
    integral = adaptive_simpson(integrand, 0.0, t, tol * scale)
    return 0.5 * math.log1p(integral)


def compute_r(schedule: DdpmSchedule, t: float, tol: float = 1e-10) -> float:
    """Scale factor linking noising states to localization states at time ``t``."""
    half = 0.5 * tol
    drift_log = adaptive_simpson(schedule.h, 0.0, t, half) if t > 0.0 else 0.0
    return math.exp(compute_alpha(schedule, t, half) + drift_log)


class ReparamMap:
    """Cached evaluator for the time/scale change of a fixed schedule.

    Construction integrates the schedule once over a uniform grid; afterwards
    ``alpha``, ``r``, ``alpha_inverse``, ``gamma`` and ``zeta`` are cheap, each
    costing at most a short local quadrature plus a bisection.
    """

    def __init__(self, schedule: DdpmSchedule, tol: float = 1e-10, grid_size: int = 1024):
        self.schedule = schedule
        self.tol = tol
        self._knots = np.linspace(0.0, schedule.T, grid_size + 1)
        seg_tol = min(1e-13, tol / (4.0 * grid_size))

        drift_cum = np.zeros(grid_size + 1)
        for k in range(grid_size):
            a, b = float(self._knots[k]), float(self._knots[k + 1])
            drift_cum[k + 1] = drift_cum[k] + adaptive_simpson(schedule.h, a, b, seg_tol)
        self._drift_cum = drift_cum
        self._local_tol = seg_tol

        signal_cum = np.zeros(grid_size + 1)
        for k in range(grid_size):
            a, b = float(self._knots[k]), float(self._knots[k + 1])
            coarse = abs(self._coarse_segment(a, b))
            signal_cum[k + 1] = signal_cum[k] + adaptive_simpson(
                self._integrand, a, b, max(seg_tol, 1e-12 * (coarse + 1.0))
            )
        self._signal_cum = signal_cum
        self._alpha_knots = 0.5 * np.log1p(signal_cum)

    def _drift_log(self, t: float) -> float:
        k = int(np.searchsorted(self._knots, t, side="right")) - 1
        k = min(max(k, 0), len(self._knots) - 2)
        base = float(self._knots[k])
        local = adaptive_simpson(self.schedule.h, base, t, self._local_tol) if t > base else 0.0
        return float(self._drift_cum[k]) + local

    def _integrand(self, tau: float) -> float:
        return self.schedule.u(tau) * math.exp(-2.0 * self._drift_log(tau))

    def _coarse_segment(self, a: float, b: float) -> float:
        fa, fm, fb = self._integrand(a), self._integrand(0.5 * (a + b)), self._integrand(b)
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def alpha(self, t: float) -> float:
        if not 0.0 <= t <= self.schedule.T:
            raise ValueError(f"time {t} outside schedule domain [0, {self.schedule.T}]")
        k = int(np.searchsorted(self._knots, t, side="right")) - 1
        k = min(max(k, 0), len(self._knots) - 2)
        base = float(self._knots[k])
        cum = float(self._signal_cum[k])
        if t > base:
            local_tol = max(self._local_tol, 1e-12 * (1.0 + abs(self._coarse_segment(base, t))))
            cum += adaptive_simpson(self._integrand, base, t, local_tol)
        return 0.5 * math.log1p(cum)

    def r(self, t: float) -> float:
        return math.exp(self.alpha(t) + self._drift_log(t))

    @property
    def alpha_max(self) -> float:
        return float(self._alpha_knots[-1])

    def alpha_inverse(self, s: float, tol: float = 1e-10) -> float:
        """Invert the time change by bisection, seeded from the cached grid."""
        if s < -tol or s > self.alpha_max + tol:
            raise HorizonError(
                f"value {s} outside the reachable range [0, {self.alpha_max:.6g}]"
            )
        s = min(max(s, 0.0), self.alpha_max)
        idx = int(np.searchsorted(self._alpha_knots, s, side="left"))
        idx = min(max(idx, 1), len(self._knots) - 1)
        lo, hi = float(self._knots[idx - 1]), float(self._knots[idx])
        return bisect_increasing(self.alpha, s, lo, hi, tol)

    def gamma(self, t_sl: float) -> float:
        gamma, _ = sl_time_of_ddpm(self, t_sl)
        return gamma

    def zeta(self, t_sl: float) -> float:
        _, zeta = sl_time_of_ddpm(self, t_sl)
        return zeta


def sl_time_of_ddpm(reparam: ReparamMap, t_sl: float) -> tuple[float, float]:
    """Map a localization time to ``(scale, noising time)``.

    The localization state at time ``t_sl``, divided by the returned scale,
    has the law of the backward noising process at the returned time. Raises
    :class:`HorizonError` when ``t_sl`` is too small for the schedule's
    horizon, i.e. ``s(t_sl) > alpha(T)``.
    """
    if t_sl <= 0.0:
        raise HorizonError(f"localization time must be positive, got {t_sl}")
    s = 0.5 * math.log1p(1.0 / t_sl)
    if s > reparam.alpha_max + 1e-12:
        raise HorizonError(
            f"s({t_sl:.6g}) = {s:.6g} exceeds alpha(T) = {reparam.alpha_max:.6g}; "
            "the schedule horizon is too short for this localization time"
        )
    t_ddpm = reparam.alpha_inverse(s)
    gamma = t_sl * math.exp(s) / reparam.r(t_ddpm)
    zeta = reparam.schedule.T - t_ddpm
    return gamma, zeta


def euler_forward_step(
    schedule: DdpmSchedule, x: np.ndarray, t: float, dt: float, noise: np.ndarray
) -> np.ndarray:
    """One Euler step of the forward noising process; test-data generator."""
    if dt <= 0.0:
        raise ValueError(f"step must be positive, got {dt}")
    x = np.asarray(x, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if not (np.isfinite(x).all() and np.isfinite(noise).all()):
        raise ValueError("non-finite state or noise")
    return x + schedule.h(t) * x * dt + math.sqrt(schedule.u(t) * dt) * noise


@dataclass(frozen=True)
class TimeGrid:
    """Discretization 0 <= t_0 < t_1 < ... < t_K with per-step noise scales.

    ``noise_scales[i]`` multiplies the fresh Gaussian for the step from
    ``times[i]`` to ``times[i+1]``; for localization grids it equals
    ``sqrt(times[i+1] - times[i])`` exactly, which the factory constructors
    enforce.
    """

    times: np.ndarray
    noise_scales: np.ndarray
    steps: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=np.float64)
        scales = np.asarray(self.noise_scales, dtype=np.float64)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("grid needs at least two time points")
        if not np.isfinite(times).all() or times[0] < 0.0:
            raise ValueError("grid times must be finite and start at a nonnegative time")
        steps = np.diff(times)
        if not (steps > 0.0).all():
            raise ValueError("grid times must be strictly increasing")
        if scales.shape != steps.shape or not (scales > 0.0).all():
            raise ValueError("need one positive noise scale per step")
        for arr in (times, scales, steps):
            arr.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "noise_scales", scales)
        object.__setattr__(self, "steps", steps)

    @property
    def num_steps(self) -> int:
        return self.times.size - 1

    @property
    def max_step(self) -> float:
        return float(self.steps.max())

    @classmethod
    def sl_uniform(cls, T: float, K: int) -> "TimeGrid":
        """Uniform localization grid on [0, T] with K steps."""
        if K < 1 or T <= 0.0:
            raise ValueError(f"need K >= 1 and T > 0, got K={K}, T={T}")
        times = np.linspace(0.0, T, K + 1)
        return cls(times=times, noise_scales=np.sqrt(np.diff(times)))

    @classmethod
    def sl_geometric(cls, T: float, K: int, ratio: float) -> "TimeGrid":
        """Geometric localization grid: consecutive steps scale by ``ratio``."""
        if K < 1 or T <= 0.0:
            raise ValueError(f"need K >= 1 and T > 0, got K={K}, T={T}")
        if ratio <= 0.0 or ratio == 1.0:
            raise ValueError(f"ratio must be positive and != 1, got {ratio}")
        i = np.arange(K + 1, dtype=np.float64)
        times = T * (ratio**i - 1.0) / (ratio**K - 1.0)
        return cls(times=times, noise_scales=np.sqrt(np.diff(times)))
