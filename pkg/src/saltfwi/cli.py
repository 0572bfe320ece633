"""Command-line entry point: ``saltfwi <command> ...``.

Failures print one line ``saltfwi: error code=<exit> kind=<kind>: <message>``
to stderr and exit with 2 (usage/parameters), 3 (format), 4 (numerical) or
5 (I/O).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path


from . import io
from .acquisition import RickerWavelet, SurveyGeometry, line_positions
from .errors import ConfigurationError, InvalidParameterError, SaltFWIError
from .grid import (GridGeometry, ProbabilityCube, SaltMask, SedimentProfile, VelocityModel,
                   interior_mask)
from .inversion import InversionConfig, invert
from .metrics import model_metrics
from .prior import DEFAULT_SALT_VELOCITY, BlendParams, init_model
from .propagation import PropagatorConfig, rtm_migrate, simulate_survey
from .synthgen import PredictorFidelity, SaltBody, SaltScenarioSpec, make_scenario, pseudo_dl_predict
from .workflow import run_workflow

EXIT_USAGE = 2
EXIT_IO = 5


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _fail(code: int, kind: str, message: str) -> int:
    message = " ".join(str(message).split())
    print(f"saltfwi: error code={code} kind={kind}: {message}", file=sys.stderr)
    return code


# -- config readers ---------------------------------------------------------

def scenario_from_config(c: io.Config) -> SaltScenarioSpec:
    geom = GridGeometry([int(d) for d in c.floats("dims")], c.float("spacing"))
    profile = SedimentProfile(c.floats("profile_depths"), c.floats("profile_velocities"))
    ndim = geom.ndim
    bodies = []
    for row in c.points("bodies", []):
        if len(row) not in (2 * ndim, 2 * ndim + 1):
            raise ConfigurationError(f"{c.name}: each body needs {ndim} center, {ndim} semi-axis values "
                                     "and an optional rotation")
        rot = row[2 * ndim] if len(row) > 2 * ndim else 0.0
        bodies.append(SaltBody(tuple(row[:ndim]), tuple(row[ndim:2 * ndim]), rot))
    return SaltScenarioSpec(
        geometry=geom, profile=profile, salt_bodies=bodies,
        inclusion_count=c.int("inclusion_count", 0),
        inclusion_radius=(c.float("inclusion_radius_min", 20.0), c.float("inclusion_radius_max", 40.0)),
        inclusion_velocity=c.float("inclusion_velocity", 2500.0),
        v_salt=c.float("v_salt", DEFAULT_SALT_VELOCITY), rng_seed=c.int("seed", 0))


def _positions(c: io.Config, kind: str):
    if kind in c:
        return c.points(kind)
    start, stop = c.floats(f"{kind}_start"), c.floats(f"{kind}_stop")
    return line_positions(start, stop, c.int(f"{kind}_count"))


def acquisition_from_config(c: io.Config, geom: GridGeometry):
    nt, dt = c.int("nt"), c.float("dt")
    w = RickerWavelet(c.float("peak_frequency"), dt, nt, c.float("delay", None))
    cfg = PropagatorConfig(nt, dt, c.int("sponge_width", 20), c.float("sponge_strength", 0.2),
                           c.float("cfl_factor", 0.45))
    survey_geom = SurveyGeometry(_positions(c, "sources"), _positions(c, "receivers"), geom)
    return survey_geom, w, cfg


def _axis_index(name: str, ndim: int) -> int:
    names = ("x", "z") if ndim == 2 else ("x", "y", "z")
    if name not in names:
        raise InvalidParameterError(f"axis must be one of {names}, got {name!r}")
    return names.index(name)


def _blend_params(profile_path, v_salt, bounds):
    if profile_path is None:
        raise ConfigurationError("a sediment profile is required to build the prior")
    return BlendParams(io.read_profile(profile_path), v_salt, bounds)


def _inversion_config(args) -> InversionConfig:
    return InversionConfig(lam=args.lam, epsilon=args.epsilon, max_iters=args.max_iters, step0=args.step0,
                           grad_smooth_radius=args.smooth_radius, model_bounds=(args.vmin, args.vmax))


# -- commands --------------------------------------------------------------

def cmd_synth(args):
    spec = scenario_from_config(io.Config.load(args.spec))
    truth, mask, profile = make_scenario(spec)
    out = io.ensure_dir(args.out_dir)
    io.write_grid(out / "truth.grid", truth)
    io.write_grid(out / "mask.grid", mask)
    io.write_profile(out / "profile.txt", profile)
    print(f"truth={out / 'truth.grid'} mask={out / 'mask.grid'} profile={out / 'profile.txt'} "
          f"salt_fraction={mask.fraction:.6f}")


def cmd_predict(args):
    mask = io.read_grid(args.mask, SaltMask)
    cube = pseudo_dl_predict(mask, PredictorFidelity(args.blur, args.noise, args.seed))
    io.write_grid(args.out, cube)
    print(f"prob={args.out}")


def cmd_forward(args):
    model = io.read_grid(args.model, VelocityModel)
    survey_geom, w, cfg = acquisition_from_config(io.Config.load(args.survey), model.geometry)
    survey = simulate_survey(model, w, survey_geom, cfg, workers=args.workers)
    io.write_survey(args.out_dir, survey, w, cfg)
    print(f"data={args.out_dir} shots={survey_geom.n_shots} receivers={survey_geom.n_receivers}")


def cmd_init(args):
    cube = io.read_grid(args.prob, ProbabilityCube)
    params = BlendParams(io.read_profile(args.profile), args.vsalt)
    io.write_grid(args.out, init_model(cube, params))
    print(f"model={args.out}")


def cmd_invert(args):
    start = io.read_grid(args.start, VelocityModel)
    survey, w, cfg = io.read_survey(args.data)
    start = VelocityModel(survey.geometry.geometry, start.values)
    config = _inversion_config(args)
    cube, params = None, None
    if args.prob is not None:
        cube = ProbabilityCube(start.geometry, io.read_grid(args.prob, ProbabilityCube).values)
        params = _blend_params(args.profile, args.vsalt, config.model_bounds)
    out = io.ensure_dir(args.out_dir)

    def snapshot(rec):
        io.write_grid(out / f"model_iter_{rec.k}.grid", rec.model)

    history = invert(config, start, survey, cube, params, w, cfg, callback=snapshot)
    io.history_report(history, out / "history.csv")
    io.write_grid(out / "final_model.grid", history.final_model)
    print(f"history={out / 'history.csv'} iterations={len(history.records) - 1} "
          f"stop_reason={history.stop_reason} phi_prime={history.records[-1].phi_prime:.17g}")


def cmd_migrate(args):
    model = io.read_grid(args.model, VelocityModel)
    survey, w, cfg = io.read_survey(args.data)
    model = VelocityModel(survey.geometry.geometry, model.values)
    image = rtm_migrate(model, survey, w, cfg)
    io.write_grid(args.out, image)
    print(f"image={args.out}")


def workflow_from_config(c: io.Config):
    survey, w, cfg = io.read_survey(c.path("data"))
    geom = survey.geometry.geometry
    bounds = (c.float("v_min", 1000.0), c.float("v_max", 5000.0))
    params = BlendParams(io.read_profile(c.path("profile")), c.float("v_salt", DEFAULT_SALT_VELOCITY), bounds)
    if "prob0" not in c:
        raise ConfigurationError(f"{c.name}: missing key 'prob0' (initial probability cube)")
    p0 = ProbabilityCube(geom, io.read_grid(c.path("prob0"), ProbabilityCube).values)
    config = InversionConfig(lam=c.float("lambda", 0.0), epsilon=c.float("epsilon"),
                             max_iters=c.int("max_iters", 10), step0=c.float("step0", 50.0),
                             grad_smooth_radius=c.int("grad_smooth_radius", 1), model_bounds=bounds)
    truth = c.path("truth", None)
    truth = VelocityModel(geom, io.read_grid(truth, VelocityModel).values) if truth else None
    truth_mask = c.path("truth_mask", None)
    truth_mask = SaltMask(geom, io.read_grid(truth_mask, SaltMask).values) if truth_mask else None
    return dict(observed=survey, p0=p0, params=params, w=w, cfg_prop=cfg, config=config,
                outer_iters=c.int("outer_iters", 1), refresh_source=c.path("refresh_dir", None),
                out_dir=c.path("out_dir"), truth=truth, truth_mask=truth_mask,
                outer_epsilon=c.float("outer_epsilon", None))


WORKFLOW_COLUMNS = ("k", "phi_prime", "data_misfit", "reg_term", "inner_iters", "stop_reason",
                    "binarization_gap", "rmse", "interior_rmse", "salt_rmse", "prob_source")


def write_workflow_report(report, path):
    lines = [",".join(WORKFLOW_COLUMNS)]
    for r in report.records:
        cells = []
        for name in WORKFLOW_COLUMNS:
            value = getattr(r, name)
            if isinstance(value, float):
                value = format(value, ".17g")
            cells.append("" if value is None else str(value))
        lines.append(",".join(cells))
    lines.append(f"converged,{str(report.converged).lower()}")
    Path(path).write_text("\n".join(lines) + "\n")


def cmd_workflow(args):
    kwargs = workflow_from_config(io.Config.load(args.config))
    report = run_workflow(**kwargs)
    out = io.ensure_dir(kwargs["out_dir"])
    io.write_grid(out / "start_model.grid", report.start_model)
    io.write_grid(out / "final_model.grid", report.final_model)
    write_workflow_report(report, out / "workflow.csv")
    print(f"report={out / 'workflow.csv'} outer_iterations={len(report.records)} converged={report.converged}")


def cmd_metrics(args):
    model = io.read_grid(args.model, VelocityModel)
    truth = io.read_grid(args.truth, VelocityModel)
    mask = io.read_grid(args.mask, SaltMask) if args.mask else None
    cube = io.read_grid(args.prob, ProbabilityCube) if args.prob else None
    if cube is not None and mask is None:
        raise ConfigurationError("--prob needs --mask to compute the mask IoU")
    interior = interior_mask(model.geometry, args.interior_width) if args.interior_width else None
    values = model_metrics(model, truth, mask, cube, interior)
    for key, value in values.items():
        print(f"{key}={value:.17g}")
    # sources and receivers are snapped to the nearest cell, never interpolated
    values["position_snapping"] = "nearest-cell"
    print("position_snapping=nearest-cell")
    if args.json:
        Path(args.json).write_text(json.dumps(values, indent=2) + "\n")


def cmd_render(args):
    obj = io.read_grid(args.grid)
    axis = _axis_index(args.axis, obj.geometry.ndim) if args.axis else None
    index = args.index
    if axis is not None and index is None:
        raise InvalidParameterError("--axis needs --index")
    pixels = io.render(obj, args.out, axis, index)
    print(f"image={args.out} rows={pixels.shape[0]} cols={pixels.shape[1]}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="saltfwi", description="Probability-guided FWI toolkit for synthetic salt models.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="build a synthetic salt scenario")
    p.add_argument("--spec", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("predict", help="pseudo-DL probability cube from a mask")
    p.add_argument("--mask", required=True)
    p.add_argument("--blur", type=float, default=0.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("forward", help="model observed shot gathers")
    p.add_argument("--model", required=True)
    p.add_argument("--survey", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("init", help="blended starting model from a probability cube")
    p.add_argument("--prob", required=True)
    p.add_argument("--profile", required=True)
    p.add_argument("--vsalt", type=float, default=DEFAULT_SALT_VELOCITY)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("invert", help="regularized FWI from a starting model")
    p.add_argument("--start", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--prob")
    p.add_argument("--profile")
    p.add_argument("--vsalt", type=float, default=DEFAULT_SALT_VELOCITY)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--max-iters", type=int, default=10)
    p.add_argument("--step0", type=float, default=50.0)
    p.add_argument("--smooth-radius", type=int, default=1)
    p.add_argument("--vmin", type=float, default=1000.0)
    p.add_argument("--vmax", type=float, default=5000.0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("migrate", help="reverse-time migration image")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_migrate)

    p = sub.add_parser("workflow", help="full probability-guided loop from a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_workflow)

    p = sub.add_parser("metrics", help="model error against a ground truth")
    p.add_argument("--model", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--mask")
    p.add_argument("--prob")
    p.add_argument("--interior-width", type=int, default=0)
    p.add_argument("--json")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("render", help="8-bit PGM section of a grid")
    p.add_argument("--grid", required=True)
    p.add_argument("--axis", choices=("x", "y", "z"))
    p.add_argument("--index", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        return _fail(EXIT_USAGE, "usage", exc)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except SaltFWIError as exc:
        return _fail(exc.exit_code, exc.code, exc)
    except OSError as exc:
        return _fail(EXIT_IO, "io", exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
