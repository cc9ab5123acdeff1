"""Command-line entry point: ``cosharp <command> ...``.

Commands
--------
run        parameter sweep from a config file or preset
reference  CoShaRP vs SSC on one mixed-shape phantom
simulate   draw a phantom and write its (noisy) measurements
solve      recover coefficients from a measurement CSV
form       turn a coefficient CSV into an image
project    apply one projection / prox to a vector (debugging)
dump       write the projector as ``row col weight`` triplets
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, CoSharpError
from .experiments import (ExperimentConfig, add_noise, build_problem, run_reference_case,
                          run_sweep, trial_seed)
from .formation import form_image
from .io import read_vector_csv, write_csv, write_json, write_pgm, write_vector_csv
from .prox import project_ksimplex, project_l1_ball, prox_conj_misfit
from .shapes import random_phantom
from .solver import default_config, solve_operator

log = logging.getLogger("cosharp")


def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("cosharp.presets").iterdir()
                  if p.name.endswith(".json"))


def load_config(path=None, preset=None, **overrides) -> ExperimentConfig:
    if (path is None) == (preset is None):
        raise ConfigError("give exactly one of a config file or --preset")
    if preset is not None:
        res = resources.files("cosharp.presets") / f"{preset}.json"
        if not res.is_file():
            raise ConfigError(f"unknown preset {preset!r}; available: {', '.join(preset_names())}")
        d = json.loads(res.read_text())
    else:
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    for key, val in overrides.items():
        if val is not None:
            d[key] = val
    return ExperimentConfig.from_dict(d)


def _config_args(p: argparse.ArgumentParser, optional=False):
    p.add_argument("config", nargs="?" if optional else None, help="experiment config JSON")
    p.add_argument("--preset", help="use a bundled config instead of a file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", dest="output_dir")
    p.add_argument("--trials", type=int)
    p.add_argument("--noise", type=float, help="noise level in percent of ||y||")
    p.add_argument("--mode", choices=("cosharp", "ssc"))
    p.add_argument("--max-iter", dest="max_iter", type=int)


def _cfg_from(args) -> ExperimentConfig:
    over = {k: getattr(args, k, None) for k in ("seed", "output_dir", "trials", "noise", "mode", "max_iter")}
    return load_config(args.config, args.preset, **over)


def cmd_run(args):
    cfg = _cfg_from(args)
    report = run_sweep(cfg)
    for row in report.rows:
        print(f"{report.variable or 'point'}={row.value}\t{row.successes}/{row.trials}\t"
              f"rate={row.success_rate:.3f}")
    print(f"wrote {cfg.output_dir}")


def cmd_reference(args):
    if args.config is None and args.preset is None:
        args.preset = "reference"
    cfg = _cfg_from(args)
    bundle = run_reference_case(cfg)
    for mode in ("cosharp", "ssc"):
        print(f"{mode}\trel_error={bundle.rel_error(mode):.3e}\t"
              f"coef_distance={bundle.coefficient_distance(mode):.3e}")
    print(f"wrote {cfg.output_dir}")


def cmd_simulate(args):
    cfg = _cfg_from(args)
    problem = build_problem(cfg)
    s = trial_seed(cfg.seed, 0)
    ph = random_phantom(problem.dictionary, None if cfg.counts else cfg.K, rng_seed=[s, 0],
                        counts=cfg.counts)
    y = add_noise(problem.projector.apply(ph.x), cfg.noise, rng_seed=[s, 1])
    out = Path(cfg.output_dir)
    write_vector_csv(out / "y.csv", y, "y")
    write_vector_csv(out / "z_true.csv", ph.z, "z")
    write_vector_csv(out / "x_true.csv", ph.x, "x")
    write_pgm(out / "phantom.pgm", ph.x.reshape(problem.grid.shape))
    print(f"wrote {out} (m={y.size}, p={problem.dictionary.p}, K={ph.K})")


def cmd_solve(args):
    cfg = _cfg_from(args)
    problem = build_problem(cfg)
    y = read_vector_csv(args.measurements)
    K = args.K if args.K is not None else cfg.K
    sc = default_config(problem.dictionary.p, problem.opnorm, K=K, mode=cfg.mode,
                        max_iter=cfg.max_iter, tol=cfg.tol)
    res = solve_operator(problem.sensing, y, sc)
    out = Path(cfg.output_dir)
    write_vector_csv(out / "z.csv", res.z, "z")
    write_csv(out / "trace.csv", ["iteration", "residual"], enumerate(res.trace))
    print(f"{res.termination} after {res.n_iter} iterations, residual {res.residual:.3e}")


def cmd_form(args):
    cfg = _cfg_from(args)
    problem = build_problem(cfg)
    y = read_vector_csv(args.measurements)
    z = read_vector_csv(args.coefficients)
    K = args.K if args.K is not None else cfg.K
    res = form_image(z, problem.projector, problem.dictionary, y, K)
    out = Path(cfg.output_dir)
    write_vector_csv(out / "image.csv", res.image, "x")
    write_pgm(out / "image.pgm", res.image.reshape(problem.grid.shape))
    write_csv(out / "accepted.csv", ["order", "column"], enumerate(res.accepted))
    print(f"accepted {res.n_accepted}/{K} shapes, residual {res.residual:.3e}")


def cmd_project(args):
    x = read_vector_csv(args.input)
    if args.op == "ksimplex":
        out = project_ksimplex(x, args.K)
    elif args.op == "l1":
        out = project_l1_ball(x, args.K)
    else:
        if args.y is None:
            raise ConfigError("--y is required for the conj operator")
        out = prox_conj_misfit(x, args.step, read_vector_csv(args.y))
    if args.output:
        write_vector_csv(args.output, out, args.op)
    else:
        np.savetxt(sys.stdout, out, fmt="%.17g")


def cmd_dump(args):
    cfg = _cfg_from(args)
    problem = build_problem(cfg)
    problem.projector.write_triplets(args.output)
    write_json(Path(args.output).with_suffix(".json"),
               {"grid": problem.grid.to_dict(), "geometry": problem.geometry.to_dict(),
                "shape": list(problem.projector.shape)})
    print(f"wrote {problem.projector.nnz} entries to {args.output}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cosharp", description=__doc__.split("\n")[0])
    parser.add_argument("--quiet", action="store_true", help="only log warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a sweep")
    _config_args(p, optional=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("reference", help="CoShaRP vs SSC on one phantom")
    _config_args(p, optional=True)
    p.set_defaults(func=cmd_reference)

    p = sub.add_parser("simulate", help="write measurements of a random phantom")
    _config_args(p, optional=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("solve", help="solve for coefficients")
    _config_args(p, optional=True)
    p.add_argument("--measurements", required=True, help="CSV of y")
    p.add_argument("--K", type=int)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("form", help="form an image from coefficients")
    _config_args(p, optional=True)
    p.add_argument("--measurements", required=True)
    p.add_argument("--coefficients", required=True)
    p.add_argument("--K", type=int)
    p.set_defaults(func=cmd_form)

    p = sub.add_parser("project", help="apply a projection to a vector")
    p.add_argument("op", choices=("ksimplex", "l1", "conj"))
    p.add_argument("--input", required=True)
    p.add_argument("--output")
    p.add_argument("--K", type=float, default=1.0)
    p.add_argument("--step", type=float, default=1.0)
    p.add_argument("--y")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("dump", help="write the projector as text triplets")
    _config_args(p, optional=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_dump)

    sub.add_parser("presets", help="list bundled configs").set_defaults(
        func=lambda a: print("\n".join(preset_names())))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CoSharpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
