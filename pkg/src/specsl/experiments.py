"""Experiment harness: configs, workers, verdicts, and result files.

Each experiment loads a default configuration whose thresholds encode the
project's acceptance bars, optionally overlaid by a JSON config file and CLI
flags, and writes two artifacts into the output directory: a results JSON
with the verdict and summary statistics, and a CSV of per-seed (or per-check)
rows. Result files are a pure function of the configuration: worker pools
only change wall-clock time, never bytes, because every task owns an explicit
seed and results are gathered positionally. Fields that cannot influence the
data (thread count, output directory) are excluded from the config echo.
"""
from __future__ import annotations

import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import default_theta, run_record, sample_asd
from .grs import gaussian_tv, grs_step
from .schedules import ReparamMap, TimeGrid, parse_schedule_spec, sl_time_of_ddpm
from .sequential import sample_sequential
from .stats import (
    _MIN_SIDE,
    energy_test,
    exchangeability_test,
    fit_scaling,
    sample_increment_blocks,
)
from .tape import RandomTape
from .targets import MixtureTarget, PosteriorMeanOracle, covariance_trace

SCHEMA = "specsl-config/1"

EXPERIMENTS = ("verify-grs", "correctness", "exchangeability", "scaling", "speedup", "reparam")

# Sequential-arm tapes must be independent of the speculative arm's.
_SEQ_ARM_OFFSET = 2**32

# Exit codes shared with the CLI (argparse owns 2 for usage errors).
EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_OUTPUT = 4


class ConfigError(ValueError):
    """The configuration violates the schema or an experiment's requirements."""


# --------------------------------------------------------------------------
# targets


def standard_target(family: str, d: int) -> MixtureTarget:
    """The three benchmark families at dimension ``d``."""
    e1 = np.zeros(d)
    e1[0] = 1.0
    if family == "two-point":
        return MixtureTarget.points([0.5, 0.5], np.stack([e1, -e1]))
    if family == "gaussian":
        return MixtureTarget.gaussians([1.0], np.zeros((1, d)), [1.0])
    if family == "mixture3":
        centers = np.zeros((3, d))
        centers[0, 0] = 2.0
        centers[1, 0] = -1.5
        centers[2, 0] = 0.0
        if d > 1:
            centers[1, 1] = 1.0
            centers[2, 1] = -2.0
        return MixtureTarget.gaussians([0.5, 0.3, 0.2], centers, [0.7, 0.5, 0.9])
    raise ConfigError(f"unknown target family {family!r}")


def target_to_spec(target: MixtureTarget) -> dict:
    spec = {
        "type": "points" if (target.stds == 0.0).all() else "gaussians",
        "weights": [float(w) for w in target.weights],
        "centers": [[float(c) for c in row] for row in target.centers],
    }
    if spec["type"] == "gaussians":
        spec["stds"] = [float(s) for s in target.stds]
    return spec


def target_from_spec(spec: dict) -> MixtureTarget:
    try:
        kind = spec["type"]
        if kind == "points":
            return MixtureTarget.points(spec["weights"], spec["centers"])
        if kind == "gaussians":
            return MixtureTarget.gaussians(spec["weights"], spec["centers"], spec["stds"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad target spec: {exc}") from exc
    raise ConfigError(f"unknown target type {spec.get('type')!r}")


# --------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    """One experiment's full parameterization; unknown fields are rejected.

    Only a subset of fields is meaningful per experiment; the rest keep their
    ``None`` defaults and are dropped from the serialized form.
    """

    experiment: str
    schema: str = SCHEMA
    seed: int = 0
    seeds: list[int] | None = None
    thread_count: int = 1
    out_dir: str = "results"
    dump_traj: bool = False

    # engine / sampling
    T: float | None = None
    K: int | None = None
    k_values: list[int] | None = None
    theta: int | None = None
    theta_eta_ref: float | None = None
    grid: dict = field(default_factory=lambda: {"kind": "uniform"})
    targets: dict | None = None

    # statistics
    n_samples: int | None = None
    n_perm: int = 500
    control_n_perm: int = 2000
    p_floor: float = 0.01
    control_p_ceiling: float = 0.001
    se_mult: float = 4.0

    # verify-grs
    sigma: float | None = None
    v_multipliers: list[float] | None = None
    dims: list[int] | None = None
    n_draws: int | None = None
    ks_level: float | None = None

    # exchangeability
    m_blocks: int | None = None
    eta: float | None = None
    t_start: float | None = None

    # scaling / speedup
    slope_range: list[float] | None = None
    r2_floor: float | None = None
    speedup_floor: float | None = None

    # reparam
    schedules: list[dict] | None = None
    tol: float | None = None
    roundtrip_tol: float | None = None

    def __post_init__(self) -> None:
        if self.schema != SCHEMA:
            raise ConfigError(f"unsupported config schema {self.schema!r}, expected {SCHEMA!r}")
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.thread_count < 1:
            raise ConfigError(f"thread_count must be >= 1, got {self.thread_count}")
        for name in ("K", "n_samples", "n_perm", "control_n_perm", "n_draws", "m_blocks"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.seeds is not None and len(self.seeds) == 0:
            raise ConfigError("seeds must be nonempty when given")
        if self.theta is not None and self.theta < 1:
            raise ConfigError(f"theta must be >= 1, got {self.theta}")

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError(f"config must be a JSON object, got {type(data).__name__}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "experiment" not in data:
            raise ConfigError("config is missing the 'experiment' field")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def echo(self) -> dict:
        """Config as recorded in result files: execution-only fields removed."""
        out = self.to_dict()
        out.pop("thread_count", None)
        out.pop("out_dir", None)
        return out


def _family_specs(dims: list[int]) -> dict:
    out = {}
    for family in ("two-point", "gaussian", "mixture3"):
        for d in dims:
            out[f"{family}-d{d}"] = target_to_spec(standard_target(family, d))
    return out


def default_config(experiment: str, out_dir: str = "results") -> ExperimentConfig:
    """Defaults whose thresholds encode the acceptance bars for each experiment."""
    if experiment == "verify-grs":
        return ExperimentConfig(
            experiment=experiment,
            out_dir=out_dir,
            sigma=1.0,
            v_multipliers=[0.0, 1.0, 2.0, 3.0],
            dims=[1, 4],
            n_draws=200_000,
            ks_level=0.001,
        )
    if experiment == "correctness":
        return ExperimentConfig(
            experiment=experiment,
            out_dir=out_dir,
            T=20.0,
            K=200,
            seeds=list(range(4000)),
            targets=_family_specs([1, 2]),
        )
    if experiment == "exchangeability":
        return ExperimentConfig(
            experiment=experiment,
            out_dir=out_dir,
            targets=_family_specs([1]),
            m_blocks=4,
            eta=0.5,
            t_start=1.0,
            n_samples=4000,
        )
    if experiment == "scaling":
        return ExperimentConfig(
            experiment=experiment,
            out_dir=out_dir,
            T=20.0,
            k_values=[128, 256, 512, 1024, 2048, 4096, 8192],
            seeds=list(range(50)),
            theta_eta_ref=1.0,
            targets={"mixture3-d2": target_to_spec(standard_target("mixture3", 2))},
            slope_range=[0.55, 0.80],
            r2_floor=0.98,
        )
    if experiment == "speedup":
        return ExperimentConfig(
            experiment=experiment,
            out_dir=out_dir,
            T=20.0,
            K=8192,
            seeds=list(range(50)),
            theta_eta_ref=1.0,
            targets={"mixture3-d2": target_to_spec(standard_target("mixture3", 2))},
            speedup_floor=2.0,
        )
    if experiment == "reparam":
        return ExperimentConfig(
            experiment=experiment,
            out_dir=out_dir,
            schedules=[
                {"name": "ou", "T": 3.0, "check_times": [0.1, 0.5, 1.0, 2.0]},
                {"name": "ve:1", "T": 5.0, "check_times": [0.5, 1.0, 2.0, 3.0]},
            ],
            tol=1e-9,
            roundtrip_tol=1e-8,
        )
    raise ConfigError(f"unknown experiment {experiment!r}; choose from {EXPERIMENTS}")


def load_config(path: str | Path, experiment: str | None = None) -> ExperimentConfig:
    """Load a JSON config file, overlaying it onto the experiment's defaults."""
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if experiment is not None:
        declared = data.get("experiment", experiment)
        if declared != experiment:
            raise ConfigError(
                f"config is for experiment {declared!r} but {experiment!r} was requested"
            )
        base = default_config(experiment).to_dict()
        base.update(data)
        base["experiment"] = experiment
        return ExperimentConfig.from_dict(base)
    return ExperimentConfig.from_dict(data)


# --------------------------------------------------------------------------
# serialization


def format_float(value: float) -> str:
    return f"{value:.17g}"


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(float(value))
    return str(value)


def write_csv(path: Path, fieldnames: list[str], rows: list[dict]) -> None:
    lines = [",".join(fieldnames)]
    for row in rows:
        lines.append(",".join(_format_cell(row.get(name)) for name in fieldnames))
    path.write_text("\n".join(lines) + "\n", newline="\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n", newline="\n")


def write_trajectory_csv(path: Path, traj) -> None:
    """Dump a trajectory as (step, t, y_0..y_{d-1}) rows."""
    d = traj.dim
    names = ["step", "t"] + [f"y_{j}" for j in range(d)]
    rows = []
    for i, t in enumerate(traj.grid.times):
        row = {"step": i, "t": float(t)}
        for j in range(d):
            row[f"y_{j}"] = float(traj.states[i, j])
        rows.append(row)
    write_csv(path, names, rows)


@dataclass(frozen=True)
class ExperimentResult:
    experiment: str
    passed: bool
    summary: dict
    json_path: Path
    csv_path: Path


# --------------------------------------------------------------------------
# worker pool


def _pmap(fn, items: list, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    chunksize = max(1, len(items) // (threads * 8))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))


def _build_grid(grid_spec: dict, T: float, K: int) -> TimeGrid:
    kind = grid_spec.get("kind", "uniform")
    if kind == "uniform":
        return TimeGrid.sl_uniform(T, K)
    if kind == "geometric":
        return TimeGrid.sl_geometric(T, K, float(grid_spec["ratio"]))
    raise ConfigError(f"unknown grid kind {kind!r}")


def _engine_theta(cfg: ExperimentConfig, K: int, grid: TimeGrid, target: MixtureTarget) -> int:
    if cfg.theta is not None:
        return cfg.theta
    d = target.dim
    beta = covariance_trace(target) / d
    eta = cfg.theta_eta_ref if cfg.theta_eta_ref is not None else grid.max_step
    return default_theta(K, eta, beta, d)


def _asd_task(args: tuple) -> dict:
    spec, grid_spec, T, K, theta, seed = args
    target = target_from_spec(spec)
    oracle = PosteriorMeanOracle(target)
    grid = _build_grid(grid_spec, T, K)
    tape = RandomTape.draw(seed, K, target.dim)
    traj, stats = sample_asd(oracle, grid, theta, tape)
    mid = K // 2
    return {
        "seed": seed,
        "R": stats.iterations,
        "sequential_calls": stats.oracle.sequential_calls,
        "parallel_rounds": stats.oracle.parallel_rounds,
        "min_advance": int(min(stats.advances)),
        "advances": [int(a) for a in stats.advances],
        "terminal": (traj.states[-1] / float(grid.times[-1])).tolist(),
        "mid": (traj.states[mid] / float(grid.times[mid])).tolist(),
    }


def _seq_task(args: tuple) -> dict:
    spec, grid_spec, T, K, seed = args
    target = target_from_spec(spec)
    oracle = PosteriorMeanOracle(target)
    grid = _build_grid(grid_spec, T, K)
    tape = RandomTape.draw(seed, K, target.dim)
    traj = sample_sequential(oracle, grid, tape)
    mid = K // 2
    return {
        "seed": seed,
        "R": K,
        "sequential_calls": K,
        "parallel_rounds": 0,
        "min_advance": 1,
        "terminal": (traj.states[-1] / float(grid.times[-1])).tolist(),
        "mid": (traj.states[mid] / float(grid.times[mid])).tolist(),
    }


# --------------------------------------------------------------------------
# experiments


def _run_verify_grs(cfg: ExperimentConfig) -> tuple[dict, list[dict], list[str]]:
    sigma = float(cfg.sigma)
    n = int(cfg.n_draws)
    cells = [(d, mult) for d in cfg.dims for mult in cfg.v_multipliers]
    total_ks_tests = sum(d for d, _ in cells)
    ks_each = float(cfg.ks_level) / total_ks_tests

    from scipy.stats import kstest

    rows = []
    all_pass = True
    for idx, (d, mult) in enumerate(cells):
        rng = np.random.default_rng([cfg.seed, idx])
        uniforms = rng.random(n)
        noises = rng.standard_normal((n, d))
        target_mean = np.zeros(d)
        proposal_mean = target_mean.copy()
        proposal_mean[0] += mult * sigma

        samples = np.empty((n, d))
        accepted = np.empty(n, dtype=bool)
        for i in range(n):
            out = grs_step(float(uniforms[i]), noises[i], proposal_mean, target_mean, sigma)
            samples[i] = out.sample
            accepted[i] = out.accepted

        expected = gaussian_tv(proposal_mean, target_mean, sigma)
        reject_rate = 1.0 - float(accepted.mean())
        rate_se = math.sqrt(expected * (1.0 - expected) / n)
        if expected == 0.0:
            rate_ok = reject_rate == 0.0
        else:
            rate_ok = abs(reject_rate - expected) <= cfg.se_mult * rate_se

        ks_p = min(
            float(kstest(samples[:, j], "norm", args=(0.0, sigma)).pvalue) for j in range(d)
        )
        ks_ok = ks_p >= ks_each

        mean_err = np.abs(samples.mean(axis=0))
        mean_ok = bool((mean_err <= cfg.se_mult * sigma / math.sqrt(n)).all())
        cov = np.cov(samples.T).reshape(d, d)
        cov_err = np.abs(cov - sigma**2 * np.eye(d))
        cov_se = sigma**2 * (np.sqrt(2.0) * np.eye(d) + (1.0 - np.eye(d))) / math.sqrt(n)
        cov_ok = bool((cov_err <= cfg.se_mult * cov_se).all())

        cell_pass = bool(rate_ok and ks_ok and mean_ok and cov_ok)
        all_pass = all_pass and cell_pass
        rows.append(
            {
                "d": d,
                "v_over_sigma": mult,
                "sigma": sigma,
                "n_draws": n,
                "reject_rate": reject_rate,
                "expected_rate": expected,
                "rate_se": rate_se,
                "ks_min_p": ks_p,
                "rate_ok": rate_ok,
                "ks_ok": ks_ok,
                "mean_ok": mean_ok,
                "cov_ok": cov_ok,
                "pass": cell_pass,
            }
        )

    summary = {
        "cells": len(cells),
        "ks_level_each": ks_each,
        "pass": all_pass,
    }
    fieldnames = [
        "d", "v_over_sigma", "sigma", "n_draws", "reject_rate", "expected_rate",
        "rate_se", "ks_min_p", "rate_ok", "ks_ok", "mean_ok", "cov_ok", "pass",
    ]
    return summary, rows, fieldnames


def _two_sample_checks(cfg, arr_a: np.ndarray, arr_b: np.ndarray, seed: int) -> dict:
    report = energy_test(arr_a, arr_b, n_perm=cfg.n_perm, seed=seed)
    n_a, n_b = arr_a.shape[0], arr_b.shape[0]
    mean_diff = arr_a.mean(axis=0) - arr_b.mean(axis=0)
    var_a = arr_a.var(axis=0, ddof=1)
    var_b = arr_b.var(axis=0, ddof=1)
    mean_se = np.sqrt(var_a / n_a + var_b / n_b)
    var_se = np.sqrt(2.0 * var_a**2 / (n_a - 1) + 2.0 * var_b**2 / (n_b - 1))
    mean_z = float(np.max(np.abs(mean_diff) / mean_se))
    var_z = float(np.max(np.abs(var_a - var_b) / var_se))
    return {
        "p_value": report.p_value,
        "statistic": report.statistic,
        "max_mean_z": mean_z,
        "max_var_z": var_z,
        "mean_ok": bool(mean_z <= cfg.se_mult),
        "var_ok": bool(var_z <= cfg.se_mult),
    }


def _run_correctness(cfg: ExperimentConfig) -> tuple[dict, list[dict], list[str]]:
    # energy_test needs _MIN_SIDE points per arm; reject up front, not mid-run
    if len(cfg.seeds) < _MIN_SIDE:
        raise ConfigError(
            f"correctness needs at least {_MIN_SIDE} seeds per arm for the "
            f"two-sample tests, got {len(cfg.seeds)}"
        )
    K = int(cfg.K)
    T = float(cfg.T)
    rows = []
    per_config = {}
    all_pass = True
    dump_dir = Path(cfg.out_dir)

    for idx, (name, spec) in enumerate(sorted(cfg.targets.items())):
        target = target_from_spec(spec)
        grid = _build_grid(cfg.grid, T, K)
        theta = _engine_theta(cfg, K, grid, target)

        asd_tasks = [(spec, cfg.grid, T, K, theta, int(s)) for s in cfg.seeds]
        seq_tasks = [(spec, cfg.grid, T, K, int(s) + _SEQ_ARM_OFFSET) for s in cfg.seeds]
        asd_rows = _pmap(_asd_task, asd_tasks, cfg.thread_count)
        seq_rows = _pmap(_seq_task, seq_tasks, cfg.thread_count)

        term_a = np.array([r["terminal"] for r in asd_rows])
        term_b = np.array([r["terminal"] for r in seq_rows])
        mid_a = np.array([r["mid"] for r in asd_rows])
        mid_b = np.array([r["mid"] for r in seq_rows])

        seed_term = np.random.default_rng([cfg.seed, 101, idx]).integers(2**63)
        seed_mid = np.random.default_rng([cfg.seed, 102, idx]).integers(2**63)
        terminal = _two_sample_checks(cfg, term_a, term_b, int(seed_term))
        mid = _two_sample_checks(cfg, mid_a, mid_b, int(seed_mid))

        max_r = max(r["R"] for r in asd_rows)
        min_adv = min(r["min_advance"] for r in asd_rows)
        engine_ok = bool(max_r <= K and min_adv >= 1)
        config_pass = bool(
            terminal["p_value"] > cfg.p_floor
            and mid["p_value"] > cfg.p_floor
            and terminal["mean_ok"]
            and terminal["var_ok"]
            and engine_ok
        )
        all_pass = all_pass and config_pass

        per_config[name] = {
            "K": K,
            "theta": theta,
            "terminal": terminal,
            "mid": mid,
            "max_R": max_r,
            "min_advance": min_adv,
            "engine_ok": engine_ok,
            "pass": config_pass,
        }

        d = target.dim
        for arm, arm_rows in (("asd", asd_rows), ("seq", seq_rows)):
            for r in arm_rows:
                row = {
                    "target": name,
                    "arm": arm,
                    "seed": r["seed"],
                    "R": r["R"],
                    "sequential_calls": r["sequential_calls"],
                    "parallel_rounds": r["parallel_rounds"],
                    "min_advance": r["min_advance"],
                }
                for j in range(d):
                    row[f"terminal_{j}"] = r["terminal"][j]
                    row[f"mid_{j}"] = r["mid"][j]
                rows.append(row)

        if cfg.dump_traj:
            target_oracle = PosteriorMeanOracle(target)
            tape = RandomTape.draw(int(cfg.seeds[0]), K, target.dim)
            traj, _ = sample_asd(target_oracle, grid, theta, tape)
            write_trajectory_csv(dump_dir / f"traj-asd-{name}.csv", traj)
            seq_traj = sample_sequential(target_oracle, grid, tape)
            write_trajectory_csv(dump_dir / f"traj-seq-{name}.csv", seq_traj)

    summary = {"configs": per_config, "pass": all_pass}
    max_d = max(len(spec["centers"][0]) for spec in cfg.targets.values())
    fieldnames = [
        "target", "arm", "seed", "R", "sequential_calls", "parallel_rounds", "min_advance",
    ]
    for j in range(max_d):
        fieldnames.append(f"terminal_{j}")
        fieldnames.append(f"mid_{j}")
    return summary, rows, fieldnames


def _run_exchangeability(cfg: ExperimentConfig) -> tuple[dict, list[dict], list[str]]:
    if int(cfg.n_samples) < _MIN_SIDE:
        raise ConfigError(
            f"exchangeability needs n_samples >= {_MIN_SIDE} for the "
            f"permutation tests, got {cfg.n_samples}"
        )
    m = int(cfg.m_blocks)
    perms = {
        "transpose-12": tuple([1, 0] + list(range(2, m))),
        "reversal": tuple(range(m - 1, -1, -1)),
    }
    rows = []
    per_test = {}
    all_pass = True

    for t_idx, (name, spec) in enumerate(sorted(cfg.targets.items())):
        target = target_from_spec(spec)
        for p_idx, (perm_name, perm) in enumerate(sorted(perms.items())):
            seed = int(np.random.default_rng([cfg.seed, 201, t_idx, p_idx]).integers(2**63))
            report = exchangeability_test(
                target, cfg.t_start, cfg.eta, m, int(cfg.n_samples), seed,
                perm=perm, n_perm=cfg.n_perm,
            )
            ok = bool(report.p_value > cfg.p_floor)
            all_pass = all_pass and ok
            per_test[f"{name}/{perm_name}"] = {"p_value": report.p_value, "pass": ok}
            rows.append(
                {
                    "target": name,
                    "permutation": perm_name,
                    "role": "null",
                    "n_samples": cfg.n_samples,
                    "n_perm": cfg.n_perm,
                    "statistic": report.statistic,
                    "p_value": report.p_value,
                    "pass": ok,
                }
            )

        # Block-mean sanity: every increment averages eta * prior mean.
        rng = np.random.default_rng([cfg.seed, 202, t_idx])
        blocks = sample_increment_blocks(
            target, cfg.t_start, float(cfg.eta), m, int(cfg.n_samples), rng
        )
        expected = float(cfg.eta) * target.mean()
        block_means = blocks.mean(axis=0)
        block_se = blocks.std(axis=0, ddof=1) / math.sqrt(int(cfg.n_samples))
        mean_z = float(np.max(np.abs(block_means - expected[None, :]) / block_se))
        mean_ok = bool(mean_z <= cfg.se_mult)
        all_pass = all_pass and mean_ok
        per_test[f"{name}/increment-means"] = {"max_z": mean_z, "pass": mean_ok}

    # Control: deliberately inhomogeneous increments must be caught hard.
    control_target = target_from_spec(sorted(cfg.targets.items())[0][1])
    control_seed = int(np.random.default_rng([cfg.seed, 203]).integers(2**63))
    control = exchangeability_test(
        control_target, cfg.t_start, cfg.eta, m, int(cfg.n_samples), control_seed,
        perm=perms["reversal"], n_perm=cfg.control_n_perm, double_variance_at=1,
    )
    control_ok = bool(control.p_value < cfg.control_p_ceiling)
    all_pass = all_pass and control_ok
    per_test["control/doubled-variance"] = {"p_value": control.p_value, "pass": control_ok}
    rows.append(
        {
            "target": sorted(cfg.targets)[0],
            "permutation": "reversal",
            "role": "control",
            "n_samples": cfg.n_samples,
            "n_perm": cfg.control_n_perm,
            "statistic": control.statistic,
            "p_value": control.p_value,
            "pass": control_ok,
        }
    )

    summary = {"tests": per_test, "pass": all_pass}
    fieldnames = [
        "target", "permutation", "role", "n_samples", "n_perm", "statistic", "p_value", "pass",
    ]
    return summary, rows, fieldnames


def _scaling_rows(cfg: ExperimentConfig, k_values: list[int]) -> tuple[list[dict], dict]:
    (_, spec), = sorted(cfg.targets.items())
    target = target_from_spec(spec)
    tasks = []
    thetas = {}
    for K in k_values:
        grid = _build_grid(cfg.grid, float(cfg.T), K)
        theta = _engine_theta(cfg, K, grid, target)
        thetas[K] = theta
        for s in cfg.seeds:
            tasks.append((spec, cfg.grid, float(cfg.T), K, theta, int(s)))
    results = _pmap(_asd_task, tasks, cfg.thread_count)
    rows = []
    for task, res in zip(tasks, results):
        _, _, _, K, theta, seed = task
        rows.append(
            {
                "K": K,
                "theta": theta,
                "seed": seed,
                "R": res["R"],
                "sequential_calls": res["sequential_calls"],
                "parallel_rounds": res["parallel_rounds"],
                "advances": res["advances"],
                "terminal": res["terminal"],
            }
        )
    return rows, thetas


def _run_scaling(cfg: ExperimentConfig) -> tuple[dict, list[dict], list[str]]:
    k_values = [int(k) for k in cfg.k_values]
    # Fail before spending compute: the fit needs 5+ K values over 1.5 decades.
    if len(k_values) < 5 or min(k_values) < 1:
        raise ConfigError("scaling needs at least five positive k_values")
    if math.log10(max(k_values) / min(k_values)) < 1.5:
        raise ConfigError("k_values must span at least 1.5 decades for a stable fit")
    rows, thetas = _scaling_rows(cfg, k_values)
    mean_r = {}
    for K in k_values:
        rs = [r["R"] for r in rows if r["K"] == K]
        mean_r[K] = float(np.mean(rs))
    fit = fit_scaling([(K, mean_r[K]) for K in k_values])
    lo, hi = cfg.slope_range
    slope_ok = bool(lo <= fit.slope <= hi)
    r2_ok = bool(fit.r_squared >= cfg.r2_floor)
    summary = {
        "per_k": {
            str(K): {"theta": thetas[K], "mean_R": mean_r[K], "mean_speedup": K / (2.0 * mean_r[K])}
            for K in k_values
        },
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "slope_range": [lo, hi],
        "r2_floor": cfg.r2_floor,
        "pass": bool(slope_ok and r2_ok),
    }
    csv_rows = [
        {k: row[k] for k in ("K", "theta", "seed", "R", "sequential_calls", "parallel_rounds")}
        for row in rows
    ]
    fieldnames = ["K", "theta", "seed", "R", "sequential_calls", "parallel_rounds"]
    return summary, csv_rows, fieldnames


def _run_speedup(cfg: ExperimentConfig) -> tuple[dict, list[dict], list[str]]:
    K = int(cfg.K)
    rows, thetas = _scaling_rows(cfg, [K])
    theta = thetas[K]
    (_, spec), = sorted(cfg.targets.items())
    speedups = [K / (2.0 * row["R"]) for row in rows]
    mean_speedup = float(np.mean(speedups))
    records = []
    for row in rows:
        records.append(
            {
                "seed": row["seed"],
                "K": K,
                "theta": theta,
                "d": len(spec["centers"][0]),
                "target": spec,
                "R": row["R"],
                "sequential_calls": row["sequential_calls"],
                "parallel_rounds": row["parallel_rounds"],
                "advances": row["advances"],
                "terminal": row["terminal"],
            }
        )
    summary = {
        "K": K,
        "theta": theta,
        "mean_R": float(np.mean([r["R"] for r in rows])),
        "mean_speedup": mean_speedup,
        "speedup_floor": cfg.speedup_floor,
        "runs": records,
        "pass": bool(mean_speedup >= cfg.speedup_floor),
    }
    csv_rows = []
    for row, speedup in zip(rows, speedups):
        csv_rows.append(
            {
                "K": K,
                "theta": theta,
                "seed": row["seed"],
                "R": row["R"],
                "sequential_calls": row["sequential_calls"],
                "parallel_rounds": row["parallel_rounds"],
                "speedup": speedup,
            }
        )
    fieldnames = ["K", "theta", "seed", "R", "sequential_calls", "parallel_rounds", "speedup"]
    return summary, csv_rows, fieldnames


def _reparam_closed_forms(name: str):
    if name == "ou":
        return (lambda t: t), (lambda t: 1.0)
    if name == "ve:1":
        return (lambda t: 0.5 * math.log1p(t)), (lambda t: math.sqrt(1.0 + t))
    return None, None


def _run_reparam(cfg: ExperimentConfig) -> tuple[dict, list[dict], list[str]]:
    rows = []
    per_schedule = {}
    all_pass = True
    tol = float(cfg.tol)
    rt_tol = float(cfg.roundtrip_tol)

    for entry in cfg.schedules:
        name = entry["name"]
        T = float(entry["T"])
        schedule = parse_schedule_spec(name, T)
        reparam = ReparamMap(schedule)
        alpha_exact, r_exact = _reparam_closed_forms(name)
        max_err = 0.0

        for t in entry["check_times"]:
            t = float(t)
            if alpha_exact is None:
                continue
            for kind, got, want in (
                ("alpha", reparam.alpha(t), alpha_exact(t)),
                ("r", reparam.r(t), r_exact(t)),
            ):
                err = abs(got - want)
                max_err = max(max_err, err)
                rows.append(
                    {
                        "schedule": name,
                        "check": kind,
                        "t": t,
                        "value": got,
                        "expected": want,
                        "abs_error": err,
                    }
                )

        rng = np.random.default_rng([cfg.seed, 301])
        rt_err = 0.0
        for t in rng.uniform(1e-3, T, size=50):
            t = float(t)
            back = reparam.alpha_inverse(reparam.alpha(t))
            rt_err = max(rt_err, abs(back - t))
        rows.append(
            {
                "schedule": name,
                "check": "alpha-roundtrip",
                "t": math.nan,
                "value": rt_err,
                "expected": 0.0,
                "abs_error": rt_err,
            }
        )

        extra = {}
        if name == "ou":
            gamma1, zeta1 = sl_time_of_ddpm(reparam, 1.0)
            for kind, got, want in (
                ("gamma(1)", gamma1, math.sqrt(2.0)),
                ("zeta(1)", zeta1, T - 0.5 * math.log(2.0)),
                ("zeta(1/(e^2-1))", sl_time_of_ddpm(reparam, 1.0 / (math.e**2 - 1.0))[1], T - 1.0),
            ):
                err = abs(got - want)
                max_err = max(max_err, err)
                extra[kind] = err
                rows.append(
                    {
                        "schedule": name,
                        "check": kind,
                        "t": math.nan,
                        "value": got,
                        "expected": want,
                        "abs_error": err,
                    }
                )

        sched_pass = bool(max_err <= tol and rt_err <= rt_tol)
        all_pass = all_pass and sched_pass
        per_schedule[name] = {
            "max_closed_form_error": max_err,
            "roundtrip_error": rt_err,
            "pass": sched_pass,
            **extra,
        }

    summary = {"schedules": per_schedule, "tol": tol, "roundtrip_tol": rt_tol, "pass": all_pass}
    fieldnames = ["schedule", "check", "t", "value", "expected", "abs_error"]
    return summary, rows, fieldnames


_RUNNERS = {
    "verify-grs": _run_verify_grs,
    "correctness": _run_correctness,
    "exchangeability": _run_exchangeability,
    "scaling": _run_scaling,
    "speedup": _run_speedup,
    "reparam": _run_reparam,
}

_REQUIRED_FIELDS = {
    "verify-grs": ("sigma", "v_multipliers", "dims", "n_draws", "ks_level"),
    "correctness": ("T", "K", "seeds", "targets"),
    "exchangeability": ("targets", "m_blocks", "eta", "t_start", "n_samples"),
    "scaling": ("T", "k_values", "seeds", "targets", "slope_range", "r2_floor"),
    "speedup": ("T", "K", "seeds", "targets", "speedup_floor"),
    "reparam": ("schedules", "tol", "roundtrip_tol"),
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run one experiment end to end and write its result files.

    Raises :class:`ConfigError` for configuration problems and ``OSError``
    when the output directory cannot be written.
    """
    for field_name in _REQUIRED_FIELDS[cfg.experiment]:
        if getattr(cfg, field_name) is None:
            raise ConfigError(f"{cfg.experiment} requires config field {field_name!r}")

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    probe = out_dir / ".write-probe"
    probe.write_text("")
    probe.unlink()

    summary, rows, fieldnames = _RUNNERS[cfg.experiment](cfg)
    payload = {
        "experiment": cfg.experiment,
        "config": cfg.echo(),
        **summary,
    }
    json_path = out_dir / f"{cfg.experiment}.json"
    csv_path = out_dir / f"{cfg.experiment}.csv"
    write_json(json_path, payload)
    write_csv(csv_path, fieldnames, rows)
    return ExperimentResult(
        experiment=cfg.experiment,
        passed=bool(summary["pass"]),
        summary=payload,
        json_path=json_path,
        csv_path=csv_path,
    )


# --------------------------------------------------------------------------
# summarize


def summarize(paths: list[str | Path]) -> tuple[int, str]:
    """Digest result files; returns (exit code, printable report)."""
    if not paths:
        return EXIT_USAGE, "no input files given"
    lines = []
    worst = EXIT_OK
    for raw in paths:
        path = Path(raw)
        try:
            text = path.read_text()
        except OSError as exc:
            return EXIT_CONFIG, f"cannot read {path}: {exc}"
        if path.suffix == ".json":
            try:
                payload = json.loads(text)
            except json.JSONDecodeError as exc:
                return EXIT_CONFIG, f"{path}: not valid JSON: {exc}"
            if "experiment" not in payload or "pass" not in payload:
                return EXIT_CONFIG, f"{path}: not a recognized result file"
            verdict = "PASS" if payload["pass"] else "FAIL"
            detail = ""
            if "slope" in payload:
                detail = f" slope={payload['slope']:.3f} r2={payload['r_squared']:.4f}"
            elif "mean_speedup" in payload:
                detail = f" mean_speedup={payload['mean_speedup']:.2f}"
            lines.append(f"{payload['experiment']:<16} {verdict}{detail}  ({path})")
            if not payload["pass"]:
                worst = max(worst, EXIT_FAILED)
        elif path.suffix == ".csv":
            header, *data = text.splitlines()
            columns = header.split(",")
            if {"K", "seed", "R"} <= set(columns):
                k_i, r_i = columns.index("K"), columns.index("R")
                per_k: dict[int, list[float]] = {}
                for line in data:
                    cells = line.split(",")
                    per_k.setdefault(int(cells[k_i]), []).append(float(cells[r_i]))
                if len(per_k) >= 5:
                    fit = fit_scaling([(k, float(np.mean(v))) for k, v in sorted(per_k.items())])
                    lines.append(
                        f"{'scaling-fit':<16} slope={fit.slope:.4f} r2={fit.r_squared:.5f}  ({path})"
                    )
                else:
                    mean_r = {k: float(np.mean(v)) for k, v in sorted(per_k.items())}
                    lines.append(f"{'runs':<16} per-K mean R {mean_r}  ({path})")
            else:
                lines.append(f"{'csv':<16} {len(data)} rows, columns: {header}  ({path})")
        else:
            return EXIT_CONFIG, f"{path}: unsupported file type"
    return worst, "\n".join(lines)
