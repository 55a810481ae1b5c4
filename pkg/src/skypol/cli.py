"""Command-line interface: render sky maps, estimate attitudes, run sweeps.

Exit codes: 0 on success, 1 on validation/usage errors, 2 on runtime
failures (including selftest check failures).
"""

from __future__ import annotations

import argparse
import logging
import sys
import tempfile
from pathlib import Path

import numpy as np

from .errors import SkypolError
from .geometry import Attitude
from .harness import compute_metrics, export, parse_config, run_sweep
from .imager import CameraModel, load_image_set, render, save_image_set
from .skymodel import SkyParams
from .sso import SsoConfig, estimate_attitude

log = logging.getLogger("skypol")


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on usage errors, per the CLI contract."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_sky_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sun-zenith", type=float, default=45.0, help="solar zenith angle, deg")
    p.add_argument("--sun-azimuth", type=float, default=0.0, help="solar azimuth, deg from north")
    p.add_argument("--turbidity", type=float, default=4.0)
    p.add_argument("--albedo", type=float, default=0.1)
    p.add_argument("--wavelength", type=float, default=450.0, help="nm")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="skypol", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_render = sub.add_parser("render", help="render AOP/DOP/LI sky maps to PFM/PGM")
    _add_sky_flags(p_render)
    p_render.add_argument("--yaw", type=float, default=0.0)
    p_render.add_argument("--pitch", type=float, default=0.0)
    p_render.add_argument("--roll", type=float, default=0.0)
    p_render.add_argument("--fov", type=float, default=107.95)
    p_render.add_argument("--scale", type=int, default=16, help="raster shrink divisor")
    p_render.add_argument("--out", default="sky", help="output file stem")
    p_render.add_argument("--quiet", action="store_true")

    p_est = sub.add_parser("estimate", help="estimate the attitude behind saved images")
    p_est.add_argument("--given", required=True, help="image stem written by render")
    _add_sky_flags(p_est)
    p_est.add_argument("--fov", type=float, default=107.95)
    p_est.add_argument("--population", type=int, default=200)
    p_est.add_argument("--iterations", type=int, default=1000)
    p_est.add_argument("--pf", type=float, default=0.7)
    p_est.add_argument("--aop-weight", type=float, default=1.5)
    p_est.add_argument("--seed", type=int, default=0)
    p_est.add_argument("--quiet", action="store_true")

    p_sweep = sub.add_parser("sweep", help="run a sensitivity sweep from a config file")
    p_sweep.add_argument("--config", required=True, help="key = value config file")
    p_sweep.add_argument("--out", default="out", help="output directory for CSVs")
    p_sweep.add_argument("--seed", type=int, default=None, help="override the master seed")
    p_sweep.add_argument("--mode", default=None, choices=["clean", "noise", "model-error", "custom"])
    p_sweep.add_argument("--scale", type=int, default=None, help="override the raster divisor")
    p_sweep.add_argument("--jobs", type=int, default=1, help="parallel trial workers")
    p_sweep.add_argument("--timing", action="store_true", help="write real wall times to trials.csv")
    p_sweep.add_argument("--quiet", action="store_true")

    p_self = sub.add_parser("selftest", help="run the built-in property checks")
    p_self.add_argument("--quiet", action="store_true")
    return parser


def _cmd_render(args) -> int:
    params = SkyParams(
        sun_zenith=args.sun_zenith,
        sun_azimuth=args.sun_azimuth,
        turbidity=args.turbidity,
        albedo=args.albedo,
        wavelength=args.wavelength,
    )
    camera = CameraModel(fov=args.fov).scaled(args.scale)
    attitude = Attitude(args.yaw, args.pitch, args.roll).require_feasible(camera.fov)
    img = render(attitude, params, camera)
    paths = save_image_set(args.out, img)
    for path in paths:
        log.info("wrote %s", path)
    print("\n".join(str(p) for p in paths))
    return 0


def _cmd_estimate(args) -> int:
    given = load_image_set(args.given)
    params = SkyParams(
        sun_zenith=args.sun_zenith,
        sun_azimuth=args.sun_azimuth,
        turbidity=args.turbidity,
        albedo=args.albedo,
        wavelength=args.wavelength,
    )
    camera = CameraModel(fov=args.fov, rows=given.rows, cols=given.cols)
    cfg = SsoConfig(
        population=args.population,
        iterations=args.iterations,
        pf=args.pf,
        aop_weight=args.aop_weight,
        fov=args.fov,
        seed=args.seed,
    )
    attitude = estimate_attitude(given, params, cfg, camera)
    print(f"yaw={attitude.yaw:.6f} pitch={attitude.pitch:.6f} roll={attitude.roll:.6f}")
    return 0


def _cmd_sweep(args) -> int:
    from dataclasses import replace

    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.mode is not None:
        cfg = replace(cfg, mode=args.mode)
    if args.scale is not None:
        cfg = replace(cfg, scale=args.scale)
    cfg.validate()
    results = run_sweep(cfg, jobs=args.jobs)
    metrics = compute_metrics(results)
    trials_path, metrics_path = export(results, metrics, args.out, timing=args.timing)
    total_s = sum(r.wall_ms for r in results) / 1000.0
    log.info("%d trials, %.1f s total estimator time", len(results), total_s)
    print(trials_path)
    print(metrics_path)
    return 0


def _selftest_checks():
    from . import geometry, harness, imager, skymodel, sso

    rng = np.random.default_rng(1234)

    def wrap_suite():
        grid = np.linspace(-180.0, 180.0, 3601)
        v1 = geometry.xi1(grid)
        ok = v1.min() >= 0.0 and v1.max() <= 90.0 and np.allclose(v1, geometry.xi1(-grid))
        grid2 = np.linspace(-360.0, 360.0, 7201)
        v2 = geometry.xi2(grid2)
        return ok and v2.min() >= 0.0 and v2.max() <= 180.0 and np.allclose(v2, geometry.xi2(-grid2))

    def round_trip():
        worst = 0.0
        for _ in range(1000):
            d = geometry.SkyDirection(float(rng.uniform(0, 179.9)), float(rng.uniform(-180, 180)))
            back = geometry.complex_to_sky(geometry.sky_to_complex(d))
            worst = max(
                worst,
                abs(back.zenith - d.zenith),
                float(geometry.xi2(back.azimuth - d.azimuth)) if d.zenith > 1e-9 else 0.0,
            )
        return worst < 1e-10

    def rotations():
        for _ in range(200):
            a = geometry.Attitude(
                float(rng.uniform(-180, 180)),
                float(rng.uniform(-36, 36)),
                float(rng.uniform(-36, 36)),
            )
            r = geometry.attitude_to_rotation(a)
            if not np.allclose(r @ r.T, np.eye(3), atol=1e-12):
                return False
            if abs(np.linalg.det(r) - 1.0) > 1e-12:
                return False
        return True

    def orthogonality():
        worst = 0.0
        for _ in range(10000):
            d = geometry.SkyDirection(float(rng.uniform(0, 89.9)), float(rng.uniform(-180, 180)))
            e = skymodel.evector(d, float(rng.uniform(-180, 180)))
            worst = max(worst, abs(float(np.dot(e, geometry.sky_to_unit(d)))))
        return worst < 1e-12

    def neutral_zeros():
        for _ in range(100):
            p = skymodel.SkyParams(
                sun_zenith=float(rng.uniform(0, 90)),
                sun_azimuth=float(rng.uniform(-180, 180)),
                turbidity=float(rng.uniform(3, 7)),
                albedo=float(rng.uniform(0.1, 0.4)),
                wavelength=float(rng.uniform(320, 720)),
            )
            pts = skymodel.place_neutral_points(p)
            af = skymodel.AtmosphericFunctions.default()
            for zeta in pts.all_four():
                d = geometry.complex_to_sky(zeta)
                gamma = geometry.angular_separation(d, geometry.SkyDirection(p.sun_zenith, 0.0))
                if skymodel.dop(zeta, d, gamma, p, af, points=pts) >= 1e-12:
                    return False
            for _ in range(100):
                zeta = complex(rng.uniform(-2, 2), rng.uniform(-2, 2))
                if min(abs(zeta - z) for z in pts.all_four()) > 1e-6:
                    if abs(skymodel.berry_w(zeta, pts)) == 0.0:
                        return False
        return True

    def weights():
        pop = sso.Population(np.zeros((5, 3)), 3)
        pop.fitness = np.array([-5.0, -1.0, -3.0, -2.0, -4.0])
        sso.assign_weights(pop)
        return (
            pop.weights.max() == 1.0
            and pop.weights.min() == 0.0
            and np.all((pop.weights >= 0) & (pop.weights <= 1))
        )

    def metric_inequalities():
        for _ in range(50):
            errs = rng.normal(size=12)
            mae = np.abs(errs).mean()
            rmse = np.sqrt((errs**2).mean())
            if not (np.abs(errs).max() + 1e-15 >= rmse >= mae - 1e-15):
                return False
        return True

    def pfm_round_trip():
        arr = rng.normal(size=(9, 7)).astype(np.float32).astype(float)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "x.pfm"
            imager.write_pfm(path, arr)
            back = imager.read_pfm(path)
        return np.array_equal(back, arr)

    return [
        ("wrap-functions", wrap_suite),
        ("projection-round-trip", round_trip),
        ("rotation-orthonormality", rotations),
        ("evector-orthogonality", orthogonality),
        ("neutral-point-zeros", neutral_zeros),
        ("weight-normalization", weights),
        ("metric-inequalities", metric_inequalities),
        ("pfm-round-trip", pfm_round_trip),
    ]


def _cmd_selftest(args) -> int:
    failures = 0
    for name, check in _selftest_checks():
        try:
            ok = check()
        except Exception as exc:  # a crashing check is a failing check
            ok = False
            log.error("%s raised %r", name, exc)
        print(f"{'PASS' if ok else 'FAIL'} {name}")
        failures += 0 if ok else 1
    return 0 if failures == 0 else 2


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING if getattr(args, "quiet", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    commands = {
        "render": _cmd_render,
        "estimate": _cmd_estimate,
        "sweep": _cmd_sweep,
        "selftest": _cmd_selftest,
    }
    try:
        return commands[args.command](args)
    except (SkypolError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
