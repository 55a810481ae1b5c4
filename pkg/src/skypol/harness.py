"""Sensitivity-study harness: config, trial sweeps, error metrics, CSV export.

A sweep draws sky conditions and a feasible truth attitude per trial,
renders the given image set, optionally corrupts it with measurement noise
or hands the estimator perturbed atmosphere parameters, runs the swarm
estimator, and records per-angle errors.  Trials are independent and seeded
by hashing (master seed, trial index), so results are reproducible and can
be computed in parallel without changing a single byte of output.
"""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .geometry import Attitude, draw_feasible_attitude, wrap_yaw_diff
from .imager import CameraModel, NoiseSpec, RenderContext, add_noise
from .skymodel import AtmosphericFunctions, HosekCoefficients, SkyParams
from .sso import SsoConfig, estimate_attitude

log = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "TrialResult",
    "MetricsRow",
    "parse_config",
    "parse_config_text",
    "format_config",
    "run_trial",
    "run_sweep",
    "compute_metrics",
    "aggregate_mae",
    "export",
    "read_trials_csv",
]

MODES = ("clean", "noise", "model-error", "custom")

TRIALS_HEADER = (
    "trial,seed,h_s,T,rho,lambda,psi_true,alpha_true,beta_true,"
    "psi_est,alpha_est,beta_est,err_psi,err_alpha,err_beta,wall_ms"
)
METRICS_HEADER = "h_s_bin,angle,mae,rmse,maxe"


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep: mode, parameter ranges, raster scale, swarm settings, seed."""

    mode: str = "clean"
    trials_per_bin: int = 30
    hs_grid: tuple = (0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0)
    t_min: float = 3.0
    t_max: float = 7.0
    rho_min: float = 0.1
    rho_max: float = 0.4
    lambda_min: float = 320.0
    lambda_max: float = 720.0
    noise_level: float = 0.05
    noise_as_stddev: bool = False
    perturbation: float = 0.05
    scale: int = 16
    seed: int = 0
    population: int = 200
    iterations: int = 1000
    pf: float = 0.7
    aop_weight: float = 1.5
    fov: float = 107.95

    def validate(self) -> "ExperimentConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode {self.mode!r} not one of {MODES}")
        if self.trials_per_bin < 1:
            raise ConfigError("trials_per_bin must be >= 1")
        if len(self.hs_grid) == 0:
            raise ConfigError("hs_grid must not be empty")
        for hs in self.hs_grid:
            if not 0.0 <= hs <= 90.0:
                raise ConfigError(f"solar altitude {hs} outside [0, 90]")
        if not 1.0 <= self.t_min <= self.t_max <= 10.0:
            raise ConfigError(f"turbidity range [{self.t_min}, {self.t_max}] invalid")
        if not 0.0 <= self.rho_min <= self.rho_max <= 1.0:
            raise ConfigError(f"albedo range [{self.rho_min}, {self.rho_max}] invalid")
        if not 320.0 <= self.lambda_min <= self.lambda_max <= 720.0:
            raise ConfigError(
                f"wavelength range [{self.lambda_min}, {self.lambda_max}] invalid"
            )
        if self.noise_level < 0.0:
            raise ConfigError("noise_level must be >= 0")
        if self.perturbation < 0.0:
            raise ConfigError("perturbation must be >= 0")
        if self.mode == "model-error" and self.perturbation > 0.2:
            raise ConfigError("perturbation above 20% can leave the valid parameter space")
        if self.scale < 1:
            raise ConfigError("scale must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        camera = self.camera()
        if camera.rows < 8 or camera.cols < 8:
            raise ConfigError(f"scale {self.scale} shrinks the raster below 8x8")
        SsoConfig(
            population=self.population,
            iterations=self.iterations,
            pf=self.pf,
            aop_weight=self.aop_weight,
            fov=self.fov,
        )
        return self

    def camera(self) -> CameraModel:
        return CameraModel(fov=self.fov).scaled(self.scale)

    def sso(self, seed: int) -> SsoConfig:
        return SsoConfig(
            population=self.population,
            iterations=self.iterations,
            pf=self.pf,
            aop_weight=self.aop_weight,
            fov=self.fov,
            seed=seed,
        )


_BOOL_WORDS = {"true": True, "false": False, "yes": True, "no": False, "1": True, "0": False}


def _parse_value(name: str, raw: str, kind):
    if kind is bool:
        word = raw.strip().lower()
        if word not in _BOOL_WORDS:
            raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
        return _BOOL_WORDS[word]
    if kind is int:
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{name}: expected an integer, got {raw!r}") from exc
    if kind is float:
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"{name}: expected a number, got {raw!r}") from exc
    if kind is tuple:
        try:
            return tuple(float(tok) for tok in raw.replace(",", " ").split())
        except ValueError as exc:
            raise ConfigError(f"{name}: expected numbers, got {raw!r}") from exc
    return raw.strip()


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse the flat ``key = value`` config format (# starts a comment).

    Keys mirror :class:`ExperimentConfig` field names; unknown keys are
    errors so a typo cannot silently change an experiment.
    """
    known = {f.name: f.type for f in fields(ExperimentConfig)}
    kinds = {
        "mode": str,
        "trials_per_bin": int,
        "hs_grid": tuple,
        "t_min": float,
        "t_max": float,
        "rho_min": float,
        "rho_max": float,
        "lambda_min": float,
        "lambda_max": float,
        "noise_level": float,
        "noise_as_stddev": bool,
        "perturbation": float,
        "scale": int,
        "seed": int,
        "population": int,
        "iterations": int,
        "pf": float,
        "aop_weight": float,
        "fov": float,
    }
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw, kinds[key])
    return ExperimentConfig(**values).validate()


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text())


def format_config(cfg: ExperimentConfig) -> str:
    """Inverse of :func:`parse_config_text` (useful for writing templates)."""
    lines = []
    for f in fields(ExperimentConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ", ".join(f"{v:g}" for v in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class TrialResult:
    """One estimation trial: truth, estimate, wrapped errors, conditions."""

    trial: int
    seed: int
    h_s: float
    turbidity: float
    albedo: float
    wavelength: float
    truth: Attitude
    estimate: Attitude
    err_yaw: float  # cyclic, in [0, 180]
    err_pitch: float  # signed
    err_roll: float  # signed
    wall_ms: float


def _derived_seed(master: int, *path: int) -> int:
    """Stable 64-bit child seed for (master, index...) lineages."""
    ss = np.random.SeedSequence([int(master), *[int(p) for p in path]])
    return int(ss.generate_state(1, np.uint64)[0])


def run_trial(cfg: ExperimentConfig, index: int, h_s: float) -> TrialResult:
    """Run one trial of the sweep; pure function of (cfg, index, h_s)."""
    t0 = time.perf_counter()
    trial_seed = _derived_seed(cfg.seed, index)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, index, 0])))

    turbidity = float(rng.uniform(cfg.t_min, cfg.t_max))
    albedo = float(rng.uniform(cfg.rho_min, cfg.rho_max))
    wavelength = float(rng.uniform(cfg.lambda_min, cfg.lambda_max))
    sun_azimuth = float(rng.uniform(-180.0, 180.0))
    truth = draw_feasible_attitude(rng, cfg.fov)

    params = SkyParams(
        sun_zenith=90.0 - h_s,
        sun_azimuth=sun_azimuth,
        turbidity=turbidity,
        albedo=albedo,
        wavelength=wavelength,
    )
    camera = cfg.camera()
    af = AtmosphericFunctions.default()
    truth_ctx = RenderContext(camera, params)
    given = truth_ctx.render(truth)

    if cfg.mode in ("noise", "custom") and cfg.noise_level > 0.0:
        given = add_noise(
            given,
            NoiseSpec(
                level=cfg.noise_level,
                as_stddev=cfg.noise_as_stddev,
                seed=_derived_seed(cfg.seed, index, 1),
            ),
        )

    est_params = params
    if cfg.mode in ("model-error", "custom") and cfg.perturbation > 0.0:
        sign_rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence([cfg.seed, index, 2]))
        )
        sign_t = 1.0 if sign_rng.uniform() < 0.5 else -1.0
        sign_rho = 1.0 if sign_rng.uniform() < 0.5 else -1.0
        est_params = replace(
            params,
            turbidity=turbidity * (1.0 + sign_t * cfg.perturbation),
            albedo=albedo * (1.0 + sign_rho * cfg.perturbation),
        )

    estimate = estimate_attitude(
        given,
        est_params,
        cfg.sso(seed=_derived_seed(cfg.seed, index, 3)),
        camera,
        af,
        HosekCoefficients.for_conditions(est_params.turbidity, est_params.albedo),
    )
    wall_ms = (time.perf_counter() - t0) * 1000.0
    return TrialResult(
        trial=index,
        seed=trial_seed,
        h_s=h_s,
        turbidity=turbidity,
        albedo=albedo,
        wavelength=wavelength,
        truth=truth,
        estimate=estimate,
        err_yaw=wrap_yaw_diff(estimate.yaw - truth.yaw),
        err_pitch=estimate.pitch - truth.pitch,
        err_roll=estimate.roll - truth.roll,
        wall_ms=wall_ms,
    )


def _trial_args(cfg: ExperimentConfig):
    index = 0
    for h_s in cfg.hs_grid:
        for _ in range(cfg.trials_per_bin):
            yield index, h_s
            index += 1


def _worker(args) -> TrialResult:
    cfg, index, h_s = args
    return run_trial(cfg, index, h_s)


def run_sweep(cfg: ExperimentConfig, jobs: int = 1) -> list[TrialResult]:
    """All trials of a sweep, in trial-index order.

    ``jobs > 1`` distributes trials over processes; outputs are identical to
    a serial run because every trial is seeded independently.
    """
    cfg.validate()
    tasks = [(cfg, index, h_s) for index, h_s in _trial_args(cfg)]
    if jobs <= 1:
        results = []
        for task in tasks:
            results.append(_worker(task))
            log.info(
                "trial %d/%d (h_s=%g) done in %.1fs",
                results[-1].trial + 1,
                len(tasks),
                results[-1].h_s,
                results[-1].wall_ms / 1000.0,
            )
        return results
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        results = list(pool.map(_worker, tasks))
    return sorted(results, key=lambda r: r.trial)


@dataclass(frozen=True)
class MetricsRow:
    h_s: float
    angle: str  # psi | alpha | beta
    mae: float
    rmse: float
    maxe: float


def _angle_errors(result: TrialResult) -> dict:
    return {"psi": result.err_yaw, "alpha": result.err_pitch, "beta": result.err_roll}


def compute_metrics(results: list[TrialResult]) -> list[MetricsRow]:
    """Per-angle MAE / RMSE / MaxE for every solar-altitude bin present."""
    rows = []
    bins = sorted({r.h_s for r in results})
    for h_s in bins:
        sample = [r for r in results if r.h_s == h_s]
        if not sample:
            log.warning("solar-altitude bin %g has no trials; omitted", h_s)
            continue
        for angle in ("psi", "alpha", "beta"):
            errs = np.array([abs(_angle_errors(r)[angle]) for r in sample])
            rows.append(
                MetricsRow(
                    h_s=h_s,
                    angle=angle,
                    mae=float(errs.mean()),
                    rmse=float(np.sqrt((errs**2).mean())),
                    maxe=float(errs.max()),
                )
            )
    return rows


def aggregate_mae(results: list[TrialResult]) -> dict:
    """Pooled per-angle MAE over every trial (all bins together)."""
    out = {}
    for angle in ("psi", "alpha", "beta"):
        out[angle] = float(np.mean([abs(_angle_errors(r)[angle]) for r in results]))
    return out


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def export(
    results: list[TrialResult],
    metrics: list[MetricsRow],
    out_dir,
    timing: bool = False,
) -> tuple[Path, Path]:
    """Write ``trials.csv`` and ``metrics.csv`` under ``out_dir``.

    Fixed headers, six fractional digits, no locale formatting.  The
    wall-clock column is zeroed unless ``timing`` is requested, so default
    sweep outputs are byte-reproducible run to run.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trials_path = out_dir / "trials.csv"
    metrics_path = out_dir / "metrics.csv"
    try:
        with open(trials_path, "w", newline="") as fh:
            fh.write(TRIALS_HEADER + "\n")
            for r in results:
                wall = r.wall_ms if timing else 0.0
                cells = [
                    str(r.trial),
                    str(r.seed),
                    _fmt(r.h_s),
                    _fmt(r.turbidity),
                    _fmt(r.albedo),
                    _fmt(r.wavelength),
                    _fmt(r.truth.yaw),
                    _fmt(r.truth.pitch),
                    _fmt(r.truth.roll),
                    _fmt(r.estimate.yaw),
                    _fmt(r.estimate.pitch),
                    _fmt(r.estimate.roll),
                    _fmt(r.err_yaw),
                    _fmt(r.err_pitch),
                    _fmt(r.err_roll),
                    _fmt(wall),
                ]
                fh.write(",".join(cells) + "\n")
        with open(metrics_path, "w", newline="") as fh:
            fh.write(METRICS_HEADER + "\n")
            for m in metrics:
                fh.write(
                    ",".join(
                        [_fmt(m.h_s), m.angle, _fmt(m.mae), _fmt(m.rmse), _fmt(m.maxe)]
                    )
                    + "\n"
                )
    except OSError as exc:
        raise OSError(f"writing results under {out_dir}: {exc}") from exc
    return trials_path, metrics_path


def read_trials_csv(path) -> list[TrialResult]:
    """Parse a trials.csv back into :class:`TrialResult` records."""
    results = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            results.append(
                TrialResult(
                    trial=int(row["trial"]),
                    seed=int(row["seed"]),
                    h_s=float(row["h_s"]),
                    turbidity=float(row["T"]),
                    albedo=float(row["rho"]),
                    wavelength=float(row["lambda"]),
                    truth=Attitude(
                        float(row["psi_true"]),
                        float(row["alpha_true"]),
                        float(row["beta_true"]),
                    ),
                    estimate=Attitude(
                        float(row["psi_est"]),
                        float(row["alpha_est"]),
                        float(row["beta_est"]),
                    ),
                    err_yaw=float(row["err_psi"]),
                    err_pitch=float(row["err_alpha"]),
                    err_roll=float(row["err_beta"]),
                    wall_ms=float(row["wall_ms"]),
                )
            )
    return results
