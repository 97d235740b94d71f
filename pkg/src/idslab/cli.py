"""Config-driven experiment runner with reproducible result stores.

``idslab run config.toml`` executes one named experiment, writes CSV
tables plus a JSON summary into the output directory, and finishes with
a manifest carrying checksums of every emitted file; the manifest is
written last, so its presence marks a completed run.  Identical
(config, master seed) pairs produce byte-identical CSVs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field as dataclass_field

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from . import ids, measure, potential
from .operator import BoxSpec, MagneticField, flux_quantum_deficit
from .potential import EnsembleSpec

ARTIFACT_VERSION = "0.1.0"

PASS, WARN, FAIL = "pass", "warn", "fail"


def _fmt(x) -> str:
    """Serialize one CSV cell; floats carry 17 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(cell) for cell in row) + "\n")


def _box_label(box: BoxSpec) -> str:
    return "x".join(str(s) for s in box.sides)


# ---------------------------------------------------------------------------
# configuration

@dataclass
class RunSettings:
    energy_min: float | None = None
    energy_max: float | None = None
    energy_points: int = 201
    energy_grid: list | None = None
    realizations: int = 10
    master_seed: int | None = None
    workers: int = 0
    boxes: list | None = None
    truncation_levels: list = dataclass_field(default_factory=lambda: [1.0, 2.0, 4.0, 8.0])
    window_fraction: float = 1.0
    tail_energies: list = dataclass_field(default_factory=lambda: [-4.0, -3.0, -2.0])
    weyl_energies: list = dataclass_field(default_factory=lambda: [1.0])
    slope_threshold: float = -0.7
    weyl_tolerance: float = 0.10
    tail_factor: float = 1.6
    landau_tolerance: float = 0.15
    moment_q: float = 3.0
    moment_r: float = 3.0
    moment_samples: int = 2000


@dataclass
class ExperimentConfig:
    experiment: str
    dim: int
    sides: tuple[int, ...]
    spacing: float
    bc: str
    field: MagneticField
    theta: int | None
    ensemble: EnsembleSpec | None
    run: RunSettings
    output_dir: str
    raw: dict

    def box(self, bc: str | None = None) -> BoxSpec:
        return BoxSpec(self.dim, self.sides, self.spacing, bc or self.bc)

    def energy_grid(self) -> np.ndarray:
        if self.run.energy_grid is not None:
            return np.asarray(self.run.energy_grid, dtype=float)
        return np.linspace(self.run.energy_min, self.run.energy_max,
                           self.run.energy_points)

    def box_list(self) -> list[BoxSpec]:
        if self.run.boxes:
            return [BoxSpec(self.dim, tuple(int(x) for x in b), self.spacing, self.bc)
                    for b in self.run.boxes]
        return [self.box()]


class ConfigError(ValueError):
    """Invalid configuration; message names the offending field."""


def _parse_field(raw, dim: int) -> MagneticField:
    if raw is None:
        return MagneticField.zero(dim)
    if isinstance(raw, (int, float)):
        return MagneticField.uniform(dim, float(raw))
    tensor = np.asarray(raw, dtype=float)
    if tensor.shape != (dim, dim):
        raise ConfigError(f"model.field: expected a scalar or a {dim}x{dim} matrix")
    return MagneticField(tensor)


def load_config(path: str) -> tuple[ExperimentConfig, list[str]]:
    """Parse and validate a TOML or JSON experiment description.

    Returns the config plus a list of warnings; hard errors raise
    :class:`ConfigError` naming the field.
    """
    with open(path, "rb") as fh:
        if str(path).endswith(".json"):
            raw = json.load(fh)
        else:
            raw = tomllib.load(fh)

    warnings: list[str] = []
    experiment = raw.get("experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError(
            f"experiment: expected one of {sorted(EXPERIMENTS)}, got {experiment!r}")

    model = raw.get("model", {})
    dim = int(model.get("dim", 2))
    if dim < 1:
        raise ConfigError(f"model.dim: must be >= 1, got {dim}")
    sides = tuple(int(s) for s in model.get("sides", (8,) * dim))
    if len(sides) != dim:
        raise ConfigError(f"model.sides: expected {dim} entries, got {len(sides)}")
    if any(s < 1 for s in sides):
        raise ConfigError(f"model.sides: side lengths must be positive, got {sides}")
    spacing = float(model.get("spacing", 1.0))
    if not spacing > 0:
        raise ConfigError(f"model.spacing: must be positive, got {spacing}")
    bc = str(model.get("bc", "dirichlet")).lower()
    if bc not in ("dirichlet", "neumann", "periodic"):
        raise ConfigError(f"model.bc: unknown boundary condition {bc!r}")
    try:
        field = _parse_field(model.get("field"), dim)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"model.field: {exc}") from exc

    theta = model.get("theta")
    if theta is not None:
        theta = int(theta)
        expected = potential.smallest_theta(dim)
        if theta != expected:
            warnings.append(
                f"model.theta: override {theta} differs from the smallest integer "
                f"above dim/4, which is {expected} for dim {dim}")

    ensemble = None
    if "ensemble" in raw:
        try:
            ensemble = EnsembleSpec.from_dict(raw["ensemble"])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"ensemble: {exc}") from exc

    run_raw = dict(raw.get("run", {}))
    settings = RunSettings()
    for key, value in run_raw.items():
        if not hasattr(settings, key):
            raise ConfigError(f"run.{key}: unknown setting")
        setattr(settings, key, value)
    if settings.master_seed is None:
        raise ConfigError("run.master_seed: required (runs must be reproducible)")
    settings.master_seed = int(settings.master_seed)
    settings.realizations = int(settings.realizations)
    if settings.realizations < 1:
        raise ConfigError(f"run.realizations: must be >= 1, got {settings.realizations}")
    settings.workers = int(settings.workers)
    if settings.workers < 0:
        raise ConfigError(f"run.workers: must be >= 0, got {settings.workers}")
    if settings.energy_grid is None and settings.energy_min is None:
        settings.energy_min, settings.energy_max = -2.0, 6.0
    if settings.energy_grid is None:
        if not settings.energy_max > settings.energy_min:
            raise ConfigError("run.energy_max: must exceed run.energy_min")
        if int(settings.energy_points) < 2:
            raise ConfigError("run.energy_points: need at least 2 grid points")

    spec_def = EXPERIMENTS[experiment]
    if spec_def.needs_ensemble and ensemble is None:
        raise ConfigError(f"ensemble: required by experiment {experiment!r}")

    if bc == "periodic" and not field.is_zero():
        deficit = flux_quantum_deficit(BoxSpec(dim, sides, spacing, bc), field)
        if deficit > 1e-9:
            quantum = 2.0 * math.pi / (spacing ** 2 * max(sides))
            message = (
                f"model.field: incommensurate flux on a periodic box (deficit "
                f"{deficit:.3g} of 2 pi per cycle); the nearest commensurate "
                f"field quantum is {quantum:.6g}")
            if spec_def.tolerates_incommensurate:
                warnings.append(message + " (tolerated by this experiment)")
            else:
                raise ConfigError(message)

    output = raw.get("output", {})
    outdir = str(output.get("directory", f"results/{experiment}"))

    return ExperimentConfig(experiment=experiment, dim=dim, sides=sides,
                            spacing=spacing, bc=bc, field=field, theta=theta,
                            ensemble=ensemble, run=settings, output_dir=outdir,
                            raw=raw), warnings


# ---------------------------------------------------------------------------
# experiment runners: each returns (diagnostics, csv_tables, summary_extra)

def _run_ids(cfg: ExperimentConfig, workers: int):
    grid = cfg.energy_grid()
    if cfg.run.window_fraction < 1.0:
        est = ids.localized_ids(cfg.ensemble, cfg.box(), cfg.run.window_fraction,
                                cfg.field, None, grid, cfg.run.realizations,
                                cfg.run.master_seed, workers)
    else:
        est = ids.finite_volume_ids(cfg.ensemble, cfg.box(), cfg.field, None, grid,
                                    cfg.run.realizations, cfg.run.master_seed, workers)
    rows = [("ids", _box_label(est.box), est.bc, e, m, s)
            for e, m, s in zip(est.energies, est.values, est.stderr)]
    tables = {"results.csv": (("experiment", "box", "bc", "E", "mean", "stderr"), rows)}
    diagnostics = {"monotone": PASS if np.all(np.diff(est.values) >= 0) else FAIL}
    if est.jump_cells:
        diagnostics["jump_cells"] = WARN
    extra = {"jump_cells": [float(est.energies[j]) for j in est.jump_cells],
             "volume": est.volume}
    return diagnostics, tables, extra


def _run_bc_gap(cfg: ExperimentConfig, workers: int):
    grid = cfg.energy_grid()
    boxes = cfg.box_list()
    entries = ids.bc_gap(cfg.ensemble, boxes, cfg.field, grid,
                         cfg.run.realizations, cfg.run.master_seed, workers)
    curve_rows = []
    gap_rows = []
    for e in entries:
        label = _box_label(e.box)
        for energy, m_d, m_n in zip(e.energies, e.mean_dirichlet, e.mean_neumann):
            curve_rows.append(("bc-gap", label, "dirichlet", energy, m_d, 0.0))
            curve_rows.append(("bc-gap", label, "neumann", energy, m_n, 0.0))
        gap_rows.append((label, e.box.volume, e.sup_gap, e.smoothed_gap,
                         e.sandwich_violations))
    tables = {
        "results.csv": (("experiment", "box", "bc", "E", "mean", "stderr"), curve_rows),
        "gap_table.csv": (("box", "volume", "sup_gap", "smoothed_gap",
                           "sandwich_violations"), gap_rows),
    }
    gaps = [e.sup_gap for e in entries]
    decreasing = all(b < a for a, b in zip(gaps, gaps[1:]))
    violations = sum(e.sandwich_violations for e in entries)
    diagnostics = {
        "sandwich": PASS if violations == 0 else FAIL,
        "gap_decreasing": PASS if (decreasing or len(gaps) < 2) else FAIL,
    }
    extra = {"sup_gaps": gaps, "violations": violations}
    return diagnostics, tables, extra


def _run_truncation(cfg: ExperimentConfig, workers: int):
    grid = cfg.energy_grid()
    levels = [float(x) for x in cfg.run.truncation_levels]
    res = ids.truncation_sweep(cfg.ensemble, cfg.box(), cfg.field, None, grid,
                               levels, cfg.run.realizations, cfg.run.master_seed,
                               workers)
    rows = [(lvl, sup, sm) for lvl, sup, sm in
            zip(res.levels, res.sup_deviation, res.smoothed_deviation)]
    tables = {"results.csv": (("level", "sup_deviation", "smoothed_deviation"), rows)}
    ok = _decreasing_until_zero(res.sup_deviation)
    beyond = [lvl for lvl in res.levels if lvl > res.realized_max_abs]
    zero_beyond = all(res.sup_deviation[res.levels.index(lvl)] == 0.0 for lvl in beyond)
    diagnostics = {
        "deviation_decreasing": PASS if ok else FAIL,
        "zero_beyond_max": PASS if zero_beyond else FAIL,
    }
    extra = {"realized_max_abs": res.realized_max_abs}
    return diagnostics, tables, extra


def _decreasing_until_zero(values) -> bool:
    vals = list(values)
    for a, b in zip(vals, vals[1:]):
        if not (b < a or (a == 0.0 and b == 0.0)):
            return False
    return True


def _run_tightness(cfg: ExperimentConfig, workers: int):
    grid = cfg.energy_grid()
    probes = np.asarray(sorted(float(e) for e in cfg.run.tail_energies), dtype=float)
    grid = np.union1d(grid, probes)
    estimates = [ids.finite_volume_ids(cfg.ensemble, box, cfg.field, None, grid,
                                       cfg.run.realizations, cfg.run.master_seed,
                                       workers)
                 for box in cfg.box_list()]
    res = ids.tightness_check(estimates, probes[::-1])
    rows = [(e, p) for e, p in zip(res.energies, res.profile)]
    tables = {"results.csv": (("E", "max_density"), rows)}
    diagnostics = {}
    if res.fitted_slope is not None:
        diagnostics["slope"] = (PASS if res.fitted_slope <= cfg.run.slope_threshold
                                else FAIL)
    else:
        diagnostics["slope"] = WARN
    if res.excluded:
        diagnostics["excluded_energies"] = WARN
    extra = {"fitted_slope": res.fitted_slope, "exponent_bound": res.exponent_bound,
             "excluded": list(res.excluded)}
    return diagnostics, tables, extra


def _run_weyl(cfg: ExperimentConfig, workers: int):
    configs = [(tuple(int(x) for x in b), cfg.spacing)
               for b in (cfg.run.boxes or [cfg.sides])]
    rows_out = ids.weyl_check(configs, [float(e) for e in cfg.run.weyl_energies])
    rows = [( "x".join(str(s) for s in r.sides), r.spacing, r.energy, r.density,
              r.reference_density, r.ratio, r.in_faithful_band) for r in rows_out]
    tables = {"results.csv": (("box", "spacing", "E", "density", "weyl_density",
                               "ratio", "in_faithful_band"), rows)}
    in_band = [r for r in rows_out if r.in_faithful_band]
    tol = cfg.run.weyl_tolerance
    ok = all(abs(r.ratio - 1.0) <= tol for r in in_band)
    diagnostics = {"weyl_ratio": PASS if ok and in_band else (WARN if not in_band else FAIL)}
    extra = {"ratios": [r.ratio for r in rows_out]}
    return diagnostics, tables, extra


def _run_gaussian_tail(cfg: ExperimentConfig, workers: int):
    if cfg.ensemble.kind != "gaussian":
        raise ConfigError("ensemble.kind: the gaussian-tail experiment needs a "
                          "gaussian ensemble")
    boxes = [tuple(int(x) for x in b) for b in (cfg.run.boxes or [cfg.sides])]
    rows_out = ids.gaussian_tail_check(cfg.ensemble.covariance, boxes,
                                       [float(e) for e in cfg.run.tail_energies],
                                       cfg.run.realizations, cfg.run.master_seed,
                                       spacing=cfg.spacing, bc=cfg.bc,
                                       field=cfg.field, workers=workers)
    rows = [("x".join(str(s) for s in r.sides), r.energy, r.density,
             "" if r.scaled_log is None else r.scaled_log, r.reference, r.excluded)
            for r in rows_out]
    tables = {"results.csv": (("box", "E", "density", "scaled_log", "reference",
                               "excluded"), rows)}
    factor = cfg.run.tail_factor
    reference = rows_out[0].reference if rows_out else -0.5
    lo, hi = reference * factor, reference / factor
    usable = [r for r in rows_out if r.scaled_log is not None]
    deepest = min(usable, key=lambda r: r.energy) if usable else None
    if deepest is None:
        diagnostics = {"tail_scaling": FAIL}
    else:
        diagnostics = {"tail_scaling": PASS if lo <= deepest.scaled_log <= hi else FAIL}
    if any(r.excluded for r in rows_out):
        diagnostics["excluded_energies"] = WARN
    extra = {"deepest_scaled": None if deepest is None else deepest.scaled_log,
             "window": [lo, hi]}
    return diagnostics, tables, extra


def _run_landau(cfg: ExperimentConfig, workers: int):
    b = float(cfg.field.tensor[0, 1]) if cfg.dim >= 2 else 0.0
    if not b > 0:
        raise ConfigError("model.field: the landau experiment needs B_12 > 0")
    res = ids.landau_cluster_check(cfg.sides, cfg.spacing, b)
    rows = [( "x".join(str(s) for s in res.sides), res.spacing, res.b,
              res.window[0], res.window[1], res.cluster_count, res.expected_count,
              res.ratio, res.reference_step)]
    tables = {"results.csv": (("box", "spacing", "b", "window_lo", "window_hi",
                               "cluster_count", "expected_count", "ratio",
                               "reference_step"), rows)}
    ok = abs(res.ratio - 1.0) <= cfg.run.landau_tolerance
    diagnostics = {"cluster_size": PASS if ok else FAIL}
    extra = {"ratio": res.ratio}
    return diagnostics, tables, extra


def _run_support_spectrum(cfg: ExperimentConfig, workers: int):
    report = ids.support_spectrum_check(cfg.ensemble, cfg.box(), cfg.field, None,
                                        cfg.run.realizations, cfg.run.master_seed,
                                        workers=workers)
    rows = [(e, int(g)) for e, g in zip(report.energies[:-1], report.growth)]
    tables = {
        "results.csv": (("E", "growing"), rows),
        "flat_intervals.csv": (("E_lo", "E_hi"),
                               [(a, b) for a, b in report.flat_intervals]),
    }
    diagnostics = {"support_consistency": PASS if report.consistent else WARN}
    extra = {"mismatches": [[i, lam] for i, lam in report.mismatches],
             "flat_intervals": [list(t) for t in report.flat_intervals],
             "spectrum_hull": list(report.spectrum_hull)}
    return diagnostics, tables, extra


def _run_moment_check(cfg: ExperimentConfig, workers: int):
    reports = []
    if cfg.ensemble is not None:
        reports.append(potential.check_moment_bound(
            cfg.ensemble, cfg.run.moment_q, cfg.run.moment_r,
            cfg.run.moment_samples, cfg.run.master_seed, dim=cfg.dim))
    else:
        cube = potential.CUBE
        const = EnsembleSpec("alloy", profile=cube,
                             coupling=potential.CouplingDistribution("two_point",
                                                                     lo=1.0, hi=1.0))
        uniform = EnsembleSpec("alloy", profile=cube,
                               coupling=potential.CouplingDistribution("uniform",
                                                                       lo=0.0, hi=1.0))
        poisson = EnsembleSpec("poisson", profile=cube, intensity=1.0)
        for spec in (const, uniform, poisson):
            reports.append(potential.check_moment_bound(
                spec, cfg.run.moment_q, cfg.run.moment_r,
                cfg.run.moment_samples, cfg.run.master_seed, dim=cfg.dim))
    rows = [(r.q, r.r, r.lhs_estimate, r.lhs_stderr, r.rhs_bound, r.theta_used,
             r.violated) for r in reports]
    tables = {"results.csv": (("q", "r", "lhs", "lhs_stderr", "rhs", "theta",
                               "violated"), rows)}
    diagnostics = {"moment_bound": PASS if not any(r.violated for r in reports)
                   else FAIL}
    extra = {"reports": [r.__dict__ for r in reports]}
    return diagnostics, tables, extra


def _run_measure_demo(cfg: ExperimentConfig, workers: int):
    rows = []
    failures = 0

    grid = [(1j, 2.0)]
    for n in (1, 2, 4, 8, 16, 32):
        shrink = measure.AtomicMeasure.from_points([1.0 / n])
        target = measure.AtomicMeasure.from_points([0.0])
        dist = measure.vague_distance(shrink, target, grid)
        expected = 1.0 / (n * n + 1.0)
        ok = abs(dist - expected) <= 1e-12
        failures += not ok
        rows.append(("shrinking_atom", n, dist, expected, ok))

    escape = [measure.AtomicMeasure.from_points([-float(n)]) for n in range(1, 33)]
    profile = measure.tightness_profile(escape, [-1.0, -4.0, -16.0])
    ok = all(p == 1.0 for p in profile)
    failures += not ok
    rows.append(("escaping_mass_profile", 32, max(profile), 1.0, ok))

    rng = np.random.default_rng(cfg.run.master_seed)
    squeeze_ok = True
    for _ in range(200):
        mu = measure.AtomicMeasure.from_points(rng.normal(size=15) * 3.0,
                                               rng.uniform(0.1, 2.0, 15))
        e = float(rng.normal() * 2.0)
        mid = mu.integrate(measure.indicator_hat(e))
        squeeze_ok &= (mu.mass_below(e) <= mid + 1e-12
                       and mid <= mu.mass_below(e + 1.0) + 1e-12)
    failures += not squeeze_ok
    rows.append(("indicator_squeeze", 200, float(squeeze_ok), 1.0, squeeze_ok))

    for p in (2.0, 3.0, 5.0):
        for eps in (1.0, 0.1):
            kernel = measure.smoothing_kernel(p, eps)
            mass = _kernel_mass(kernel, eps)
            ok = abs(mass - 1.0) <= 1e-8
            failures += not ok
            rows.append((f"kernel_mass_p{p}", eps, mass, 1.0, ok))

    dom_ok = True
    for _ in range(200):
        mu = measure.AtomicMeasure.from_points(rng.normal(size=15) * 4.0,
                                               rng.uniform(0.1, 2.0, 15))
        e = float(rng.normal() * 3.0)
        eps = float(rng.uniform(0.1, 2.0))
        p = float(rng.uniform(1.5, 4.0))
        lhs = measure.stieltjes(mu, e + 1j * eps, p)
        rhs = (1.0 + abs(e) / eps) ** p * measure.stieltjes(mu, 1j * eps, p)
        dom_ok &= lhs <= rhs * (1.0 + 1e-12)
    failures += not dom_ok
    rows.append(("transform_domination", 200, float(dom_ok), 1.0, dom_ok))

    tables = {"results.csv": (("check", "parameter", "value", "expected", "ok"), rows)}
    diagnostics = {"measure_machinery": PASS if failures == 0 else FAIL}
    return diagnostics, tables, {"failures": failures}


def _kernel_mass(kernel, eps: float) -> float:
    # tangent substitution maps the line to a finite interval
    ts = np.linspace(-math.pi / 2 + 1e-9, math.pi / 2 - 1e-9, 200001)
    xs = np.tan(ts)
    return float(np.trapezoid(kernel(xs) / np.cos(ts) ** 2, ts))


@dataclass(frozen=True)
class ExperimentDef:
    runner: object
    description: str
    anchor: str
    needs_ensemble: bool = True
    tolerates_incommensurate: bool = False


EXPERIMENTS: dict[str, ExperimentDef] = {
    "ids": ExperimentDef(_run_ids,
                         "disorder-averaged finite-volume IDS on an energy grid",
                         "Eq. (2.6) / Thm. 3.1"),
    "bc-gap": ExperimentDef(_run_bc_gap,
                            "Neumann-Dirichlet counting gap across growing boxes",
                            "Prop. 4.4"),
    "truncation": ExperimentDef(_run_truncation,
                                "IDS deviation under potential truncation",
                                "Lemma 4.2"),
    "tightness": ExperimentDef(_run_tightness,
                               "low-energy envelope and algebraic decay exponent",
                               "Prop. 4.2 / Eq. (4.21)"),
    "weyl": ExperimentDef(_run_weyl,
                          "high-energy density against the universal law",
                          "Remark (vii)", needs_ensemble=False),
    "gaussian-tail": ExperimentDef(_run_gaussian_tail,
                                   "low-energy tail scaling of the Gaussian ensemble",
                                   "Remark (vii)"),
    "landau": ExperimentDef(_run_landau,
                            "flat-band cluster on the torus vs the staircase reference",
                            "property (C)", needs_ensemble=False,
                            tolerates_incommensurate=True),
    "support-spectrum": ExperimentDef(_run_support_spectrum,
                                      "growth of the averaged IDS vs realization spectra",
                                      "Cor. 3.3"),
    "moment-check": ExperimentDef(_run_moment_check,
                                  "Monte Carlo check of the convolution moment bound",
                                  "Lemma 3.4", needs_ensemble=False),
    "measure-demo": ExperimentDef(_run_measure_demo,
                                  "synthetic convergence and tightness families",
                                  "Prop. 4.1 / Prop. 4.2", needs_ensemble=False),
}


# ---------------------------------------------------------------------------
# run orchestration

def _resolve_outdir(cfg: ExperimentConfig, cli_out: str | None) -> str:
    outdir = cli_out if cli_out else cfg.output_dir
    root = os.environ.get("IDSLAB_OUT")
    if root and not os.path.isabs(outdir):
        outdir = os.path.join(root, outdir)
    return outdir


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def run(config_path: str, cli_out: str | None = None,
        cli_workers: int | None = None) -> int:
    """Execute one experiment; returns the process exit status."""
    try:
        cfg, warnings = load_config(config_path)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for message in warnings:
        print(f"warning: {message}", file=sys.stderr)

    workers = cli_workers if cli_workers is not None else cfg.run.workers
    if workers == 0:
        workers = os.cpu_count() or 1

    outdir = _resolve_outdir(cfg, cli_out)
    os.makedirs(outdir, exist_ok=True)
    manifest_path = os.path.join(outdir, "run_manifest.json")
    if os.path.exists(manifest_path):
        os.remove(manifest_path)  # absence marks the run as in progress

    try:
        diagnostics, tables, extra = EXPERIMENTS[cfg.experiment].runner(cfg, workers)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        record = {"error": str(exc), "config": cfg.raw}
        with open(os.path.join(outdir, "error.json"), "w") as fh:
            json.dump(record, fh, indent=2, sort_keys=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1

    files = {}
    for name, (header, rows) in tables.items():
        path = os.path.join(outdir, name)
        _write_csv(path, header, rows)
        files[name] = path

    summary = {
        "experiment": cfg.experiment,
        "artifact_version": ARTIFACT_VERSION,
        "config": cfg.raw,
        "resolved": {
            "dim": cfg.dim,
            "sides": list(cfg.sides),
            "spacing": cfg.spacing,
            "bc": cfg.bc,
            "master_seed": cfg.run.master_seed,
            "realizations": cfg.run.realizations,
            "seed_rule": "seed-sequence spawn of (master_seed, realization_index)",
        },
        "diagnostics": diagnostics,
        "details": extra,
        "warnings": warnings,
    }
    summary_path = os.path.join(outdir, "summary.json")
    with open(summary_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=float)
    files["summary.json"] = summary_path

    manifest = {
        "artifact_version": ARTIFACT_VERSION,
        "config_echo": cfg.raw,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "files": {name: _sha256(path) for name, path in sorted(files.items())},
        "diagnostics": diagnostics,
    }
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)

    failed = [k for k, v in diagnostics.items() if v == FAIL]
    for key, value in diagnostics.items():
        print(f"{cfg.experiment}: {key}: {value}")
    print(f"results written to {outdir}")
    return 2 if failed else 0


def validate(config_path: str) -> int:
    """Check a config without executing; prints problems or the echo."""
    try:
        cfg, warnings = load_config(config_path)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for message in warnings:
        print(f"warning: {message}")
    resolved = {
        "experiment": cfg.experiment,
        "dim": cfg.dim,
        "sides": list(cfg.sides),
        "spacing": cfg.spacing,
        "bc": cfg.bc,
        "theta": cfg.theta if cfg.theta is not None else potential.smallest_theta(cfg.dim),
        "realizations": cfg.run.realizations,
        "master_seed": cfg.run.master_seed,
        "output": cfg.output_dir,
    }
    print("OK")
    for key, value in resolved.items():
        print(f"  {key} = {value}")
    return 0


def list_experiments() -> int:
    for name in sorted(EXPERIMENTS):
        spec_def = EXPERIMENTS[name]
        print(f"{name:17s} {spec_def.description}  [{spec_def.anchor}]")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="idslab",
        description="finite-lattice integrated-density-of-states laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute an experiment config")
    run_p.add_argument("config")
    run_p.add_argument("--out", default=None, help="output directory override")
    run_p.add_argument("--workers", type=int, default=None,
                       help="realization-level parallelism (0 = all cores)")

    val_p = sub.add_parser("validate", help="check a config without running")
    val_p.add_argument("config")

    sub.add_parser("list-experiments", help="print the experiment registry")

    args = parser.parse_args(argv)
    if args.command == "run":
        return run(args.config, args.out, args.workers)
    if args.command == "validate":
        return validate(args.config)
    return list_experiments()


if __name__ == "__main__":
    sys.exit(main())
