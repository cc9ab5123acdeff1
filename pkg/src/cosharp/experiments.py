"""Config-driven phantom experiments: sweeps, success rates and the reference case.

A run is a pure function of its :class:`ExperimentConfig` (seed included).
Every CSV, PGM and JSON file it writes is reproducible bit for bit, except
``timing.csv`` which records wall-clock times.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .exceptions import CoSharpError, ConfigError
from .formation import form_image
from .geometry import FanBeamGeometry, ImageGrid, build_fan_projector, operator_norm
from .io import write_csv, write_json, write_pgm
from .shapes import (ShapeSpec, build_dictionary, default_lattice, disc_radius_for_pixels,
                     random_phantom)
from .solver import default_config, sensing_matrix, solve_operator

log = logging.getLogger(__name__)

SWEEP_VARIABLES = ("K", "noise", "rotations", "disc_pixels", "n_detectors")


def add_noise(y, level_percent, rng_seed=None) -> np.ndarray:
    """Add i.i.d. Gaussian noise rescaled to ``||n|| = level/100 * ||y||``.

    With ``y = 0`` the added noise has norm zero, so ``y`` comes back unchanged.
    """
    y = np.asarray(y, dtype=float)
    if level_percent < 0:
        raise ValueError("noise level must be non-negative")
    if level_percent == 0:
        return y.copy()
    n = np.random.default_rng(rng_seed).standard_normal(y.shape)
    n *= (level_percent / 100.0) * np.linalg.norm(y) / np.linalg.norm(n)
    return y + n


def relative_error(x_hat, x_true) -> float:
    x_hat = np.asarray(x_hat, dtype=float)
    x_true = np.asarray(x_true, dtype=float)
    if x_hat.shape != x_true.shape:
        raise ValueError(f"shape mismatch {x_hat.shape} vs {x_true.shape}")
    ref = np.linalg.norm(x_true)
    diff = np.linalg.norm(x_hat - x_true)
    if ref == 0:
        return 0.0 if diff == 0 else math.inf
    return float(diff / ref)


def judge_success(x_hat, x_true, tolerance=1e-3) -> bool:
    """Relative Euclidean error at most ``tolerance``; an all-zero truth needs an all-zero estimate."""
    return relative_error(x_hat, x_true) <= tolerance


# --------------------------------------------------------------------- config

def _resolve_rotations(spec) -> list[float]:
    if isinstance(spec, dict):
        count = int(spec["count"])
        period = float(spec.get("period", math.pi))
        if count < 1:
            raise ConfigError("rotation count must be >= 1")
        return [k * period / count for k in range(count)]
    rots = [float(r) for r in spec]
    if not rots:
        raise ConfigError("rotation list is empty")
    return rots


def _resolve_shape(d: dict, grid: ImageGrid) -> ShapeSpec:
    d = dict(d)
    if d.get("kind") == "disc" and "pixels" in d:
        d["r"] = disc_radius_for_pixels(int(d.pop("pixels")), grid)
    return ShapeSpec.from_dict(d)


def _resolve_geometry(d: dict) -> FanBeamGeometry:
    d = dict(d)
    if "source" in d:
        return FanBeamGeometry(**d)
    return FanBeamGeometry.facing(**d)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a run. Lengths in meters, angles in radians, noise in percent.

    ``geometry`` is either explicit (``source``, ``detector_center``,
    ``detector_direction``, ``detector_length``, ``n_detectors``) or the
    keyword arguments of :meth:`FanBeamGeometry.facing`. ``rotations`` is a
    list of angles or ``{"count": R, "period": pi}`` for ``R`` equally spaced
    angles. A disc may be sized by ``"pixels"`` (raster pixel count) instead
    of ``"r"``. ``max_iter = None`` keeps the ``4 p^2`` iteration rule.
    """

    name: str = "experiment"
    grid: dict = field(default_factory=lambda: {"extent_x": 1.0, "extent_y": 1.0, "n_x": 64, "n_y": 64})
    geometry: dict = field(default_factory=lambda: {
        "source_distance": 1.5, "detector_distance": 1.5, "detector_length": 3.2,
        "n_detectors": 256, "angle": math.pi / 6})
    shapes: list = field(default_factory=lambda: [{"kind": "disc", "pixels": 21, "intensity": 1.0}])
    rotations: object = field(default_factory=lambda: [0.0])
    lattice_stride: int = 1
    K: int = 1
    counts: list | None = None
    sweep: dict | None = None
    trials: int = 100
    noise: float = 0.0
    seed: int = 0
    success_tol: float = 1e-3
    mode: str = "cosharp"
    max_iter: int | None = None
    tol: float = 1e-6
    save_images: bool = True
    output_dir: str = "results"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.noise < 0:
            raise ConfigError("noise must be >= 0")
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if self.lattice_stride < 1:
            raise ConfigError("lattice_stride must be >= 1")
        if self.mode not in ("cosharp", "ssc"):
            raise ConfigError(f"mode must be 'cosharp' or 'ssc', got {self.mode!r}")
        if self.max_iter is not None and self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if not self.shapes:
            raise ConfigError("at least one shape is required")
        if self.counts is not None and len(self.counts) != len(self.shapes):
            raise ConfigError("counts needs one entry per shape")
        if self.sweep is not None:
            var = self.sweep.get("variable")
            if var not in SWEEP_VARIABLES:
                raise ConfigError(f"sweep variable must be one of {SWEEP_VARIABLES}, got {var!r}")
            if not self.sweep.get("values"):
                raise ConfigError("sweep range is empty")
        _resolve_rotations(self.rotations)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def at(self, value) -> "ExperimentConfig":
        """Config of a single sweep point."""
        if self.sweep is None:
            return self
        var = self.sweep["variable"]
        if var == "K":
            return self.replace(sweep=None, K=int(value), counts=None)
        if var == "noise":
            return self.replace(sweep=None, noise=float(value))
        if var == "rotations":
            period = self.sweep.get("period", math.pi)
            return self.replace(sweep=None, rotations={"count": int(value), "period": period})
        if var == "disc_pixels":
            shapes = []
            for s in self.shapes:
                if s.get("kind") == "disc":
                    s = {k: v for k, v in s.items() if k != "r"}
                    s["pixels"] = int(value)
                shapes.append(s)
            return self.replace(sweep=None, shapes=shapes)
        if var == "n_detectors":
            return self.replace(sweep=None, geometry=dict(self.geometry, n_detectors=int(value)))
        raise ConfigError(f"unsupported sweep variable {var!r}")

    def sweep_values(self) -> list:
        return [None] if self.sweep is None else list(self.sweep["values"])


# -------------------------------------------------------------------- problem

@dataclass(eq=False)
class Problem:
    """Operators shared read-only by all trials of one sweep point."""

    grid: ImageGrid
    geometry: FanBeamGeometry
    projector: object
    dictionary: object
    sensing: object
    opnorm: float

    @property
    def undersampling(self) -> float:
        return self.grid.n / self.geometry.n_detectors


def _problem_key(cfg: ExperimentConfig) -> str:
    return json.dumps([cfg.grid, cfg.geometry, cfg.shapes, cfg.rotations, cfg.lattice_stride],
                      sort_keys=True)


def build_problem(cfg: ExperimentConfig) -> Problem:
    grid = ImageGrid(**cfg.grid)
    geom = _resolve_geometry(cfg.geometry)
    A = build_fan_projector(grid, geom)
    shapes = [_resolve_shape(s, grid) for s in cfg.shapes]
    lattices = [default_lattice(s, grid, cfg.lattice_stride) for s in shapes]
    D = build_dictionary(shapes, lattices, _resolve_rotations(cfg.rotations), grid)
    M = sensing_matrix(A, D)
    nrm = operator_norm(M, seed=cfg.seed)
    log.info("problem: n=%d m=%d p=%d (n/m=%.1f) ||A Psi||=%.4g", grid.n, geom.n_detectors, D.p,
             grid.n / geom.n_detectors, nrm)
    return Problem(grid, geom, A, D, M, nrm)


# ---------------------------------------------------------------------- trials

@dataclass(eq=False)
class TrialOutcome:
    trial: int
    seed: int
    success: bool
    rel_error: float = math.nan
    residual: float = math.nan
    n_iter: int = 0
    termination: str = ""
    n_accepted: int = 0
    seconds: float = 0.0
    error: str = ""
    phantom: object = None
    measurements: np.ndarray | None = None
    formation: object = None
    solver: object = None


def trial_seed(seed: int, trial: int) -> int:
    return int(seed) ^ int(trial)


def run_trial(problem: Problem, cfg: ExperimentConfig, trial: int, mode: str | None = None) -> TrialOutcome:
    """Phantom, projection, noise, solve, image formation and scoring for one trial."""
    mode = mode or cfg.mode
    s = trial_seed(cfg.seed, trial)
    t0 = time.perf_counter()
    try:
        ph = random_phantom(problem.dictionary, None if cfg.counts else cfg.K, rng_seed=[s, 0],
                            counts=cfg.counts)
        y = add_noise(problem.projector.apply(ph.x), cfg.noise, rng_seed=[s, 1])
        K = ph.K
        solver_cfg = default_config(problem.dictionary.p, problem.opnorm, K=K, mode=mode,
                                    max_iter=cfg.max_iter, tol=cfg.tol)
        res = solve_operator(problem.sensing, y, solver_cfg)
        formed = form_image(res.z, problem.projector, problem.dictionary, y, K)
    except CoSharpError as exc:
        log.warning("trial %d failed: %s", trial, exc)
        return TrialOutcome(trial, s, False, error=type(exc).__name__,
                            seconds=time.perf_counter() - t0)
    err = relative_error(formed.image, ph.x)
    return TrialOutcome(trial, s, err <= cfg.success_tol, rel_error=err, residual=formed.residual,
                        n_iter=res.n_iter, termination=res.termination,
                        n_accepted=formed.n_accepted, seconds=time.perf_counter() - t0,
                        phantom=ph, measurements=y, formation=formed, solver=res)


@dataclass
class SweepRow:
    value: object
    successes: int
    trials: int
    mean_residual: float
    mean_seconds: float

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials


@dataclass
class SweepReport:
    name: str
    variable: str | None
    rows: list

    def rates(self) -> dict:
        return {r.value: r.success_rate for r in self.rows}

    def summary_rows(self):
        for r in self.rows:
            yield (r.value, r.successes, r.trials, r.success_rate, r.mean_residual)


def _save_samples(out: Path, tag: str, problem: Problem, outcome: TrialOutcome):
    shape = problem.grid.shape
    write_pgm(out / f"{tag}_phantom.pgm", outcome.phantom.x.reshape(shape))
    write_pgm(out / f"{tag}_recon.pgm", outcome.formation.image.reshape(shape))
    rec = problem.projector.apply(outcome.formation.image)
    y = outcome.measurements
    write_csv(out / f"{tag}_profile.csv", ["detector", "measured", "reconstructed", "difference"],
              zip(range(y.size), y, rec, y - rec))


def run_sweep(cfg: ExperimentConfig, out_dir=None) -> SweepReport:
    """Run every trial of every sweep point and write the report files.

    Files written under ``out_dir`` (default ``cfg.output_dir``):
    ``summary.csv``, ``trials.csv``, ``timing.csv``, ``manifest.json`` and,
    for the first trial of each point, ``images/<point>_{phantom,recon}.pgm``
    and ``images/<point>_profile.csv``.
    """
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    var = cfg.sweep["variable"] if cfg.sweep else None
    cache: dict[str, Problem] = {}
    rows, trial_rows, timing_rows, problems_log = [], [], [], []
    for point, value in enumerate(cfg.sweep_values()):
        pc = cfg.at(value) if value is not None else cfg
        key = _problem_key(pc)
        if key not in cache:
            cache.clear()
            cache[key] = build_problem(pc)
        problem = cache[key]
        problems_log.append({"value": value, "n": problem.grid.n, "m": problem.geometry.n_detectors,
                             "p": problem.dictionary.p, "undersampling": problem.undersampling,
                             "opnorm": problem.opnorm})
        outcomes = []
        for t in range(cfg.trials):
            o = run_trial(problem, pc, t)
            outcomes.append(o)
            trial_rows.append((value, o.trial, o.seed, int(o.success), o.rel_error, o.residual,
                               o.n_iter, o.termination, o.n_accepted, o.error))
            timing_rows.append((value, o.trial, o.seconds))
            if t == 0 and cfg.save_images and o.formation is not None:
                _save_samples(out / "images", f"{point:02d}_{var or 'run'}_{value}", problem, o)
        finite = [o.residual for o in outcomes if math.isfinite(o.residual)]
        row = SweepRow(value, sum(o.success for o in outcomes), len(outcomes),
                       float(np.mean(finite)) if finite else math.nan,
                       float(np.mean([o.seconds for o in outcomes])))
        rows.append(row)
        log.info("%s=%s: success %d/%d", var or "point", value, row.successes, row.trials)

    write_csv(out / "summary.csv",
              ["sweep_value", "successes", "trials", "success_rate", "mean_residual"],
              [(r.value, r.successes, r.trials, r.success_rate, r.mean_residual) for r in rows])
    write_csv(out / "trials.csv",
              ["sweep_value", "trial", "seed", "success", "rel_error", "residual", "n_iter",
               "termination", "n_accepted", "error"], trial_rows)
    write_csv(out / "timing.csv", ["sweep_value", "trial", "seconds"], timing_rows)
    write_json(out / "manifest.json", _manifest(cfg, problems_log))
    return SweepReport(cfg.name, var, rows)


def _manifest(cfg: ExperimentConfig, problems) -> dict:
    return {"config": cfg.to_dict(), "seed": cfg.seed,
            "trial_seeds": [trial_seed(cfg.seed, t) for t in range(cfg.trials)],
            "problems": problems,
            "versions": {"cosharp": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "python": platform.python_version()}}


# ------------------------------------------------------------------ reference

@dataclass(eq=False)
class ReferenceBundle:
    """Side-by-side CoShaRP and SSC results on one phantom."""

    problem: Problem
    phantom: object
    measurements: np.ndarray
    solutions: dict  # mode -> SolverResult
    formations: dict  # mode -> FormationResult

    def rel_error(self, mode) -> float:
        return relative_error(self.formations[mode].image, self.phantom.x)

    def coefficient_distance(self, mode) -> float:
        return float(np.linalg.norm(self.solutions[mode].z - self.phantom.z))


def run_reference_case(cfg: ExperimentConfig, out_dir=None) -> ReferenceBundle:
    """One mixed-shape phantom solved with both constraint sets.

    Writes ``coefficients.csv`` (truth, CoShaRP and SSC coefficients per
    atom), ``measurements.csv``, ``errors.csv``, raw (``Psi z``) and formed
    images for each mode, the phantom image, and ``manifest.json``.
    """
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    problem = build_problem(cfg)
    s = trial_seed(cfg.seed, 0)
    ph = random_phantom(problem.dictionary, None if cfg.counts else cfg.K, rng_seed=[s, 0],
                        counts=cfg.counts)
    y = add_noise(problem.projector.apply(ph.x), cfg.noise, rng_seed=[s, 1])
    sols, forms = {}, {}
    for mode in ("cosharp", "ssc"):
        sc = default_config(problem.dictionary.p, problem.opnorm, K=ph.K, mode=mode,
                            max_iter=cfg.max_iter, tol=cfg.tol)
        sols[mode] = solve_operator(problem.sensing, y, sc)
        forms[mode] = form_image(sols[mode].z, problem.projector, problem.dictionary, y, ph.K)
    bundle = ReferenceBundle(problem, ph, y, sols, forms)

    D = problem.dictionary
    shape = problem.grid.shape
    write_csv(out / "coefficients.csv", ["index", "shape", "truth", "cosharp", "ssc"],
              zip(range(D.p), D.shape_index, ph.z, sols["cosharp"].z, sols["ssc"].z))
    write_csv(out / "measurements.csv", ["detector", "measured", "cosharp", "ssc"],
              zip(range(y.size), y, problem.projector.apply(forms["cosharp"].image),
                  problem.projector.apply(forms["ssc"].image)))
    write_csv(out / "errors.csv",
              ["mode", "rel_error", "coef_distance", "residual", "n_iter", "termination", "n_accepted"],
              [(mode, bundle.rel_error(mode), bundle.coefficient_distance(mode), forms[mode].residual,
                sols[mode].n_iter, sols[mode].termination, forms[mode].n_accepted)
               for mode in ("cosharp", "ssc")])
    for mode in ("cosharp", "ssc"):
        write_csv(out / f"{mode}_trace.csv", ["iteration", "residual"], enumerate(sols[mode].trace))
        write_pgm(out / f"{mode}_raw.pgm", D.apply(sols[mode].z).reshape(shape))
        write_pgm(out / f"{mode}_formed.pgm", forms[mode].image.reshape(shape))
    write_pgm(out / "phantom.pgm", ph.x.reshape(shape))
    write_csv(out / "phantom.csv", ["pixel", "value"], enumerate(ph.x))
    write_json(out / "manifest.json", _manifest(cfg.replace(trials=1), [{
        "n": problem.grid.n, "m": problem.geometry.n_detectors, "p": D.p,
        "undersampling": problem.undersampling, "opnorm": problem.opnorm}]))
    return bundle
