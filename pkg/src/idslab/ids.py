"""Disorder-averaged integrated-density-of-states experiments.

All experiments share the same realization pipeline: derive a seed,
sample a potential, assemble the lattice operator, diagonalize with the
in-house solver, and count eigenvalues on an energy grid.  Counts are
divided by the box volume; disorder averages over seeds stand in for
the ensemble expectation, and growing boxes stand in for the
infinite-volume limit.  Compared arms (boundary conditions, truncation
levels) always reuse identical potential samples, so their differences
are purely structural.

Realizations are independent work units; when ``workers > 1`` they run
in a process pool, and aggregation is ordered by realization index so
results do not depend on scheduling.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import measure, potential, spectral
from .operator import BoxSpec, HermitianOperator, MagneticField, build_hamiltonian
from .potential import EnsembleSpec, PotentialSample

#: Fraction of the matrix dimension a per-seed count may jump across one
#: grid cell before the cell is flagged as a possible discontinuity.
JUMP_FLAG_FRACTION = 0.05


@dataclass(frozen=True)
class ModelDims:
    """Dimension-derived exponents used across the diagnostics."""

    d: int
    theta: int
    p_of_d: float

    @classmethod
    def for_dimension(cls, d: int) -> "ModelDims":
        if d < 1:
            raise ValueError(f"dimension must be >= 1, got {d}")
        theta = potential.smallest_theta(d)
        if d <= 3:
            p = 2.0
        elif d == 4:
            p = 3.0
        else:
            p = d / 2.0
        return cls(d=d, theta=theta, p_of_d=p)

    @property
    def low_energy_exponent(self) -> float:
        """Exponent of the algebraic low-energy bound, d/2 - 2 theta."""
        return self.d / 2.0 - 2.0 * self.theta


@dataclass(frozen=True)
class IDSEstimate:
    """Disorder-averaged eigenvalue counts per volume on an energy grid."""

    energies: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    counts: np.ndarray  # (realizations, n_energies) raw per-seed counts
    box: BoxSpec
    bc: str
    ensemble: EnsembleSpec
    realizations: int
    master_seed: int
    jump_cells: tuple[int, ...] = ()

    def __post_init__(self):
        for arr in (self.energies, self.values, self.stderr, self.counts):
            arr.setflags(write=False)

    @property
    def volume(self) -> float:
        return self.box.volume

    def value_at(self, energy: float) -> float:
        """Step evaluation: the estimate at the last grid point <= energy."""
        k = int(np.searchsorted(self.energies, energy, side="right")) - 1
        if k < 0:
            return 0.0
        return float(self.values[k])

    def seed_std(self, energy: float) -> float:
        """Across-seed standard deviation of N/volume at a grid energy."""
        k = int(np.searchsorted(self.energies, energy, side="right")) - 1
        if k < 0:
            raise ValueError(f"energy {energy} is below the grid")
        col = self.counts[:, k] / self.volume
        return float(col.std(ddof=1)) if self.realizations > 1 else 0.0


def spectrum_measure(spectrum: spectral.Spectrum) -> measure.AtomicMeasure:
    """Eigenvalue-counting measure: one unit atom per eigenvalue."""
    if spectrum.source_dim == 0:
        return measure.AtomicMeasure.empty()
    return measure.AtomicMeasure.from_points(spectrum.eigenvalues)


def _resolve_box(box: BoxSpec, bc: str | None) -> BoxSpec:
    if bc is None or bc == box.bc:
        return box
    return replace(box, bc=bc)


def _map_tasks(fn, tasks, workers):
    if workers is not None and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def _build_operator(ensemble: EnsembleSpec, box: BoxSpec, field: MagneticField,
                    seed: int) -> tuple[HermitianOperator, PotentialSample]:
    sample = potential.sample(ensemble, box, seed)
    return build_hamiltonian(box, field, sample.values), sample


def _ids_task(args) -> np.ndarray:
    ensemble, box, field, egrid, seed, index = args
    try:
        op, _ = _build_operator(ensemble, box, field, seed)
        spectrum = spectral.eigenvalues(op)
    except Exception as exc:
        raise RuntimeError(f"realization {index} (seed {seed}) failed: {exc}") from exc
    return spectral.count_below_grid(spectrum, egrid)


def default_energy_grid(ensemble: EnsembleSpec, box: BoxSpec, field: MagneticField,
                        bc: str | None = None, master_seed: int = 0,
                        points: int = 201, pad: float = 1.0) -> np.ndarray:
    """Uniform grid spanning the spectrum of a pilot realization, padded."""
    box = _resolve_box(box, bc)
    seed = potential.realization_seed(master_seed, 0)
    op, _ = _build_operator(ensemble, box, field, seed)
    vals = spectral.eigenvalues(op).eigenvalues
    return np.linspace(float(vals.min()) - pad, float(vals.max()) + pad, points)


def finite_volume_ids(ensemble: EnsembleSpec, box: BoxSpec, field: MagneticField,
                      bc: str | None, egrid, realizations: int, master_seed: int,
                      workers: int = 1) -> IDSEstimate:
    """Disorder-averaged finite-volume IDS on an energy grid.

    For each realization the potential is sampled, the operator built,
    the full spectrum computed and counted below every grid energy;
    counts are divided by the box volume and averaged over seeds.
    """
    egrid = _check_grid(egrid)
    if realizations < 1:
        raise ValueError("need at least one realization")
    box = _resolve_box(box, bc)
    seeds = [potential.realization_seed(master_seed, i) for i in range(realizations)]
    tasks = [(ensemble, box, field, egrid, seed, i) for i, seed in enumerate(seeds)]
    rows = _map_tasks(_ids_task, tasks, workers)
    counts = np.vstack(rows)
    return _estimate_from_counts(counts, egrid, box, ensemble, realizations, master_seed)


def _check_grid(egrid) -> np.ndarray:
    egrid = np.asarray(egrid, dtype=float)
    if egrid.ndim != 1 or egrid.size == 0:
        raise ValueError("energy grid must be a nonempty 1d array")
    if np.any(np.diff(egrid) <= 0):
        raise ValueError("energy grid must be strictly ascending")
    return egrid


def _estimate_from_counts(counts: np.ndarray, egrid: np.ndarray, box: BoxSpec,
                          ensemble: EnsembleSpec, realizations: int,
                          master_seed: int) -> IDSEstimate:
    vol = box.volume
    values = counts.mean(axis=0) / vol
    if realizations > 1:
        stderr = counts.std(axis=0, ddof=1) / math.sqrt(realizations) / vol
    else:
        stderr = np.zeros_like(values)
    jump_limit = JUMP_FLAG_FRACTION * box.n_sites
    jumps = np.flatnonzero((np.diff(counts, axis=1) > jump_limit).any(axis=0))
    return IDSEstimate(energies=egrid, values=values, stderr=stderr, counts=counts,
                       box=box, bc=box.bc, ensemble=ensemble,
                       realizations=realizations, master_seed=master_seed,
                       jump_cells=tuple(int(j) for j in jumps))


# ---------------------------------------------------------------------------
# localized spectral trace

def _window_flat_indices(box: BoxSpec, fraction: float) -> np.ndarray:
    widths = [max(1, int(round(fraction * s))) for s in box.sides]
    starts = [(s - w) // 2 for s, w in zip(box.sides, widths)]
    axes = [np.arange(st, st + w) for st, w in zip(starts, widths)]
    mesh = np.meshgrid(*axes, indexing="ij")
    window = np.stack([g.ravel() for g in mesh], axis=1)
    return box.ravel(window)


def _localized_task(args) -> np.ndarray:
    ensemble, box, field, egrid, seed, index, window, guard_scale = args
    op, _ = _build_operator(ensemble, box, field, seed)
    spectrum, vectors = spectral.eigensystem(op)
    window_mass = np.sum(np.abs(vectors[window, :]) ** 2, axis=0)
    cum = np.concatenate(([0.0], np.cumsum(window_mass)))
    guard = spectral.TIE_RELATIVE * spectral.norm_proxy(op)
    out = np.empty(egrid.size)
    for j, e in enumerate(egrid):
        threshold = e
        if spectrum.source_dim:
            if float(np.abs(spectrum.eigenvalues - threshold).min()) <= guard:
                threshold = e + guard_scale * spectral.norm_proxy(op)
                warnings.warn(
                    f"realization {index}: energy {e} grazes an eigenvalue; "
                    f"perturbed to {threshold}", stacklevel=2)
                if float(np.abs(spectrum.eigenvalues - threshold).min()) <= guard:
                    raise RuntimeError(
                        f"realization {index}: energy {e} still grazes an "
                        "eigenvalue after perturbation")
        k = int(np.searchsorted(spectrum.eigenvalues, threshold - guard, side="left"))
        out[j] = cum[k]
    return out


def localized_ids(ensemble: EnsembleSpec, big_box: BoxSpec, window_fraction: float,
                  field: MagneticField, bc: str | None, egrid, realizations: int,
                  master_seed: int, workers: int = 1) -> IDSEstimate:
    """IDS from the spectral projector traced over a centered window.

    The trace of the below-threshold projector restricted to the window
    rows, divided by the window volume, approximates the localized
    spectral trace of the (here: largest simulated) operator.  With
    ``window_fraction = 1`` the trace is the plain eigenvalue count and
    the result equals :func:`finite_volume_ids` exactly.
    """
    if not 0.0 < window_fraction <= 1.0:
        raise ValueError(f"window fraction must lie in (0, 1], got {window_fraction}")
    egrid = _check_grid(egrid)
    box = _resolve_box(big_box, bc)
    if window_fraction == 1.0:
        return finite_volume_ids(ensemble, box, field, None, egrid,
                                 realizations, master_seed, workers)
    window = _window_flat_indices(box, window_fraction)
    window_volume = window.size * box.spacing ** box.dim
    seeds = [potential.realization_seed(master_seed, i) for i in range(realizations)]
    tasks = [(ensemble, box, field, egrid, seed, i, window, 1e-9)
             for i, seed in enumerate(seeds)]
    rows = _map_tasks(_localized_task, tasks, workers)
    traces = np.vstack(rows)
    values = traces.mean(axis=0) / window_volume
    if realizations > 1:
        stderr = traces.std(axis=0, ddof=1) / math.sqrt(realizations) / window_volume
    else:
        stderr = np.zeros_like(values)
    # raw traces are stored in place of integer counts, scaled to the window
    return IDSEstimate(energies=egrid, values=values, stderr=stderr, counts=traces,
                       box=box, bc=box.bc, ensemble=ensemble,
                       realizations=realizations, master_seed=master_seed)


# ---------------------------------------------------------------------------
# boundary-condition gap

@dataclass(frozen=True)
class BCGapEntry:
    """Gap diagnostics between Neumann and Dirichlet on one box."""

    box: BoxSpec
    sup_gap: float
    smoothed_gap: float
    sandwich_violations: int
    mean_dirichlet: np.ndarray
    mean_neumann: np.ndarray
    energies: np.ndarray


def _bc_task(args):
    ensemble, box, field, egrid, seed, index, smooth_params = args
    sample = potential.sample(ensemble, box, seed)
    out = {}
    for bc in ("dirichlet", "neumann"):
        op = build_hamiltonian(replace(box, bc=bc), field, sample.values)
        spectrum = spectral.eigenvalues(op)
        counts = spectral.count_below_grid(spectrum, egrid)
        smooth_e, smooth_eps = smooth_params
        f = measure.mollified_indicator_hat(smooth_e, smooth_eps)
        out[bc] = (counts, float(np.sum(f(spectrum.eigenvalues))))
    return out["dirichlet"], out["neumann"]


def bc_gap(ensemble: EnsembleSpec, boxes, field: MagneticField, egrid,
           realizations: int, master_seed: int, workers: int = 1,
           smooth_energy: float | None = None,
           smooth_eps: float = 0.5) -> list[BCGapEntry]:
    """Neumann-minus-Dirichlet counting gap across a family of boxes.

    The same potential samples feed both boundary conditions (common
    random numbers); the per-box sup of |N_N - N_D|/volume over the
    grid and the smoothed-functional gap are reported, along with any
    violations of the per-seed Dirichlet <= Neumann sandwich.
    """
    egrid = _check_grid(egrid)
    if smooth_energy is None:
        smooth_energy = float(np.median(egrid))
    entries = []
    for box in boxes:
        seeds = [potential.realization_seed(master_seed, i) for i in range(realizations)]
        tasks = [(ensemble, box, field, egrid, seed, i, (smooth_energy, smooth_eps))
                 for i, seed in enumerate(seeds)]
        results = _map_tasks(_bc_task, tasks, workers)
        counts_d = np.vstack([r[0][0] for r in results])
        counts_n = np.vstack([r[1][0] for r in results])
        smooth_d = np.array([r[0][1] for r in results])
        smooth_n = np.array([r[1][1] for r in results])
        violations = int(np.sum(counts_d > counts_n))
        vol = box.volume
        mean_d = counts_d.mean(axis=0) / vol
        mean_n = counts_n.mean(axis=0) / vol
        entries.append(BCGapEntry(
            box=box,
            sup_gap=float(np.abs(mean_n - mean_d).max()),
            smoothed_gap=float(abs(smooth_n.mean() - smooth_d.mean())) / vol,
            sandwich_violations=violations,
            mean_dirichlet=mean_d,
            mean_neumann=mean_n,
            energies=egrid))
    return entries


# ---------------------------------------------------------------------------
# truncation sweep

@dataclass(frozen=True)
class TruncationResult:
    """Deviation of the truncated-potential IDS from the full one."""

    levels: tuple[float, ...]
    sup_deviation: np.ndarray
    smoothed_deviation: np.ndarray
    realized_max_abs: float
    box: BoxSpec
    energies: np.ndarray


def _truncation_task(args):
    ensemble, box, field, egrid, seed, index, levels, smooth_params = args
    sample = potential.sample(ensemble, box, seed)
    smooth_e, smooth_eps = smooth_params
    f = measure.mollified_indicator_hat(smooth_e, smooth_eps)

    def run(values):
        op = build_hamiltonian(box, field, values)
        spectrum = spectral.eigenvalues(op)
        return (spectral.count_below_grid(spectrum, egrid),
                float(np.sum(f(spectrum.eigenvalues))))

    base_counts, base_smooth = run(sample.values)
    level_counts = []
    level_smooth = []
    for level in levels:
        truncated = potential.truncate(sample, level)
        c, s = run(truncated.values)
        level_counts.append(c)
        level_smooth.append(s)
    max_abs = float(np.abs(sample.values).max())
    return base_counts, base_smooth, level_counts, level_smooth, max_abs


def truncation_sweep(ensemble: EnsembleSpec, box: BoxSpec, field: MagneticField,
                     bc: str | None, egrid, levels, realizations: int,
                     master_seed: int, workers: int = 1,
                     smooth_energy: float | None = None,
                     smooth_eps: float = 0.5) -> TruncationResult:
    """Per-level deviation between truncated and untruncated potentials.

    Seeds are shared across levels; once a level exceeds the realized
    max |V| the truncated sample is bit-identical to the original and
    the deviation is exactly zero.
    """
    egrid = _check_grid(egrid)
    levels = tuple(float(x) for x in levels)
    if any(x <= 0 for x in levels):
        raise ValueError("truncation levels must be positive")
    box = _resolve_box(box, bc)
    if smooth_energy is None:
        smooth_energy = float(np.median(egrid))
    seeds = [potential.realization_seed(master_seed, i) for i in range(realizations)]
    tasks = [(ensemble, box, field, egrid, seed, i, levels, (smooth_energy, smooth_eps))
             for i, seed in enumerate(seeds)]
    results = _map_tasks(_truncation_task, tasks, workers)

    base_counts = np.vstack([r[0] for r in results]).mean(axis=0)
    base_smooth = float(np.mean([r[1] for r in results]))
    vol = box.volume
    sup_dev = np.empty(len(levels))
    smooth_dev = np.empty(len(levels))
    for j in range(len(levels)):
        counts_j = np.vstack([r[2][j] for r in results]).mean(axis=0)
        smooth_j = float(np.mean([r[3][j] for r in results]))
        sup_dev[j] = float(np.abs(counts_j - base_counts).max()) / vol
        smooth_dev[j] = abs(smooth_j - base_smooth) / vol
    realized = max(r[4] for r in results)
    return TruncationResult(levels=levels, sup_deviation=sup_dev,
                            smoothed_deviation=smooth_dev, realized_max_abs=realized,
                            box=box, energies=egrid)


# ---------------------------------------------------------------------------
# tightness profile and low-energy exponent

@dataclass(frozen=True)
class TightnessResult:
    """Across-volume envelope of the IDS at negative energies."""

    energies: np.ndarray
    profile: np.ndarray
    fitted_slope: float | None
    exponent_bound: float
    excluded: tuple[float, ...]


def tightness_check(estimates, egrid_negative) -> TightnessResult:
    """Envelope of N/volume over a volume sequence, with a log-log fit.

    For each probe energy the largest estimate across the volume
    sequence is recorded; energies where every estimate vanishes are
    excluded from the fit (their logarithm is undefined) and reported.
    The fitted slope of log N against log |E| is compared against the
    algebraic bound exponent d/2 - 2 theta by the caller.
    """
    estimates = list(estimates)
    if not estimates:
        raise ValueError("need at least one estimate")
    egrid = np.asarray(egrid_negative, dtype=float)
    if np.any(egrid >= 0):
        raise ValueError("tightness probes must be strictly negative energies")
    dims = ModelDims.for_dimension(estimates[0].box.dim)
    profile = np.array([max(est.value_at(e) for est in estimates) for e in egrid])
    positive = profile > 0.0
    excluded = tuple(float(e) for e in egrid[~positive])
    slope = None
    if positive.sum() >= 2:
        x = np.log(np.abs(egrid[positive]))
        y = np.log(profile[positive])
        xc = x - x.mean()
        slope = float(np.sum(xc * (y - y.mean())) / np.sum(xc * xc))
    return TightnessResult(energies=egrid, profile=profile, fitted_slope=slope,
                           exponent_bound=dims.low_energy_exponent, excluded=excluded)


# ---------------------------------------------------------------------------
# high-energy (Weyl) asymptotics

@dataclass(frozen=True)
class WeylRow:
    sides: tuple[int, ...]
    spacing: float
    energy: float
    density: float
    reference_density: float
    ratio: float
    in_faithful_band: bool


def weyl_constant(d: int) -> float:
    """High-energy coefficient 1 / ((d/2)! (2 pi)^(d/2))."""
    return 1.0 / (math.gamma(d / 2.0 + 1.0) * (2.0 * math.pi) ** (d / 2.0))


def _axis_spectra(length: int, spacing: float, bc: str) -> np.ndarray:
    box = BoxSpec(1, (length,), spacing, bc)
    op = build_hamiltonian(box, MagneticField.zero(1), np.zeros(length))
    return spectral.eigenvalues(op).eigenvalues


def _sum_spectrum_count(axis_vals: list[np.ndarray], energy: float) -> int:
    """Count d-fold sums of per-axis eigenvalues strictly below energy.

    The free operator separates along the axes, so its spectrum is the
    set of sums of 1d chain eigenvalues; counting sums avoids ever
    forming the d-dimensional matrix.
    """
    tie = spectral.TIE_RELATIVE * sum(float(np.abs(v).max()) for v in axis_vals)
    threshold = energy - tie
    if len(axis_vals) == 1:
        return int(np.searchsorted(axis_vals[0], threshold, side="left"))
    if len(axis_vals) == 2:
        a, b = axis_vals
        return int(np.sum(np.searchsorted(b, threshold - a, side="left")))
    if len(axis_vals) == 3:
        a, b, c = axis_vals
        total = 0
        for av in a:
            total += int(np.sum(np.searchsorted(c, threshold - av - b, side="left")))
        return total
    raise ValueError("free-spectrum counting supports dimensions 1 to 3")


def free_lattice_count(sides, spacing: float, bc: str, energy: float) -> int:
    """Eigenvalue count of the free (V=0, B=0) box below an energy."""
    axis_vals = [_axis_spectra(length, spacing, bc) for length in sides]
    return _sum_spectrum_count(axis_vals, energy)


def weyl_check(configs, energies, faithful_factor: float = 0.2) -> list[WeylRow]:
    """Measured high-energy density against the universal reference.

    ``configs`` is an iterable of (sides, spacing).  For each config
    and probe energy, the Dirichlet/Neumann average of the free
    eigenvalue count per volume is divided by the reference
    E^(d/2) * weyl_constant(d).  Probes outside the faithful band
    E <= faithful_factor / h^2 are annotated, not rejected.
    """
    rows = []
    for sides, spacing in configs:
        sides = tuple(int(s) for s in sides)
        d = len(sides)
        const = weyl_constant(d)
        vol = float(np.prod(sides)) * spacing ** d
        for energy in energies:
            if not energy > 0:
                raise ValueError("Weyl probes must be positive energies")
            n_d = free_lattice_count(sides, spacing, "dirichlet", energy)
            n_n = free_lattice_count(sides, spacing, "neumann", energy)
            density = 0.5 * (n_d + n_n) / vol
            ref = const * energy ** (d / 2.0)
            rows.append(WeylRow(sides=sides, spacing=spacing, energy=float(energy),
                                density=density, reference_density=ref,
                                ratio=density / ref,
                                in_faithful_band=bool(energy <= faithful_factor / spacing ** 2)))
    return rows


# ---------------------------------------------------------------------------
# Gaussian low-energy tail

@dataclass(frozen=True)
class GaussianTailRow:
    sides: tuple[int, ...]
    energy: float
    density: float
    scaled_log: float | None
    reference: float
    excluded: bool


def gaussian_tail_check(covariance: potential.Covariance, boxes, egrid_negative,
                        realizations: int, master_seed: int, spacing: float = 1.0,
                        bc: str = "neumann", field: MagneticField | None = None,
                        workers: int = 1) -> list[GaussianTailRow]:
    """log N(E) / E^2 against the Gaussian-tail reference -1/(2 C(0)).

    Probes where no realization produced an eigenvalue below E are
    excluded (deep-tail undersampling) and flagged.
    """
    egrid = np.asarray(egrid_negative, dtype=float)
    if np.any(egrid >= 0):
        raise ValueError("tail probes must be strictly negative energies")
    ensemble = EnsembleSpec("gaussian", covariance=covariance)
    reference = -1.0 / (2.0 * covariance.c0)
    rows = []
    for sides in boxes:
        sides = tuple(int(s) for s in sides)
        box = BoxSpec(len(sides), sides, spacing, bc)
        fld = field if field is not None else MagneticField.zero(len(sides))
        est = finite_volume_ids(ensemble, box, fld, None, np.sort(egrid),
                                realizations, master_seed, workers)
        for e in egrid:
            density = est.value_at(e)
            if density > 0.0:
                scaled = math.log(density) / (e * e)
                rows.append(GaussianTailRow(sides, float(e), density, scaled,
                                            reference, False))
            else:
                rows.append(GaussianTailRow(sides, float(e), 0.0, None,
                                            reference, True))
    return rows


# ---------------------------------------------------------------------------
# Landau reference and flat-band cluster

def landau_reference(b: float, energy: float) -> float:
    """Continuum 2d constant-field IDS: staircase of filled levels.

    (b / 2 pi) times the number of levels b(k + 1/2) at or below the
    energy; each level carries degeneracy b / 2 pi per unit area.
    """
    if not b > 0:
        raise ValueError(f"field strength must be positive, got {b}")
    if energy < 0.5 * b:
        return 0.0
    k_max = int(math.floor(energy / b - 0.5 + 1e-12))
    return (k_max + 1) * b / (2.0 * math.pi)


@dataclass(frozen=True)
class LandauClusterResult:
    sides: tuple[int, ...]
    spacing: float
    b: float
    window: tuple[float, float]
    cluster_count: int
    expected_count: float
    ratio: float
    reference_step: float


def landau_cluster_check(sides, spacing: float, b: float,
                         window_halfwidth: float = 0.25) -> LandauClusterResult:
    """Count torus eigenvalues clustering at the lowest level b/2.

    The expected cluster size is the level degeneracy b * volume /
    (2 pi), which is also the step height of :func:`landau_reference`.
    The torus may carry incommensurate flux; the seam then perturbs a
    handful of states, which is part of what the ratio measures.
    """
    sides = tuple(int(s) for s in sides)
    box = BoxSpec(len(sides), sides, spacing, "periodic")
    if box.dim != 2:
        raise ValueError("the flat-band cluster check is a 2d diagnostic")
    fld = MagneticField.uniform(2, b)
    op = build_hamiltonian(box, fld, np.zeros(box.n_sites))
    vals = spectral.eigenvalues(op).eigenvalues
    lo = 0.5 * b - window_halfwidth * b
    hi = 0.5 * b + window_halfwidth * b
    count = int(np.sum((vals >= lo) & (vals <= hi)))
    expected = b * box.volume / (2.0 * math.pi)
    return LandauClusterResult(sides=sides, spacing=spacing, b=b, window=(lo, hi),
                               cluster_count=count, expected_count=expected,
                               ratio=count / expected,
                               reference_step=b / (2.0 * math.pi))


# ---------------------------------------------------------------------------
# support / spectrum consistency

@dataclass(frozen=True)
class SupportReport:
    """Growth regions of the averaged IDS versus realization spectra."""

    energies: np.ndarray
    growth: np.ndarray
    mismatches: tuple[tuple[int, float], ...]
    flat_intervals: tuple[tuple[float, float], ...]
    spectrum_hull: tuple[float, float]

    @property
    def consistent(self) -> bool:
        return not self.mismatches


def support_spectrum_check(ensemble: EnsembleSpec, box: BoxSpec, field: MagneticField,
                           bc: str | None, realizations: int, master_seed: int,
                           grid_points: int | None = None,
                           workers: int = 1) -> SupportReport:
    """Compare averaged-IDS growth intervals with realization spectra.

    The averaged IDS is estimated from the even-indexed realizations;
    every eigenvalue of the odd-indexed (held-out) realizations must
    land in a growth cell, up to one neighboring cell of slack.
    Reported alongside: maximal flat intervals strictly inside the
    pooled spectrum hull (spectral gaps of the ensemble).  The default
    grid resolution tracks the training eigenvalue supply so that a
    filled band registers as growing everywhere.
    """
    if realizations < 2:
        raise ValueError("need at least two realizations to cross-validate")
    box = _resolve_box(box, bc)
    seeds = [potential.realization_seed(master_seed, i) for i in range(realizations)]
    tasks = [(ensemble, box, field, seed, i) for i, seed in enumerate(seeds)]
    spectra = _map_tasks(_spectrum_task, tasks, workers)

    pooled_min = min(float(s.eigenvalues.min()) for s in spectra)
    pooled_max = max(float(s.eigenvalues.max()) for s in spectra)
    pad = 1e-6 * max(1.0, abs(pooled_min), abs(pooled_max))
    if grid_points is None:
        train_eigs = ((realizations + 1) // 2) * box.n_sites
        grid_points = int(min(201, max(8, train_eigs // 3)))
    egrid = np.linspace(pooled_min - pad, pooled_max + pad, grid_points)

    train = spectra[0::2]
    held_out = spectra[1::2]
    counts = np.vstack([spectral.count_below_grid(s, egrid) for s in train])
    mean_counts = counts.mean(axis=0)
    growth = np.diff(mean_counts) > 0.0

    mismatches = []
    for rel_index, spectrum in enumerate(held_out):
        cells = np.clip(np.searchsorted(egrid, spectrum.eigenvalues, side="right") - 1,
                        0, growth.size - 1)
        for cell, lam in zip(cells, spectrum.eigenvalues):
            neighborhood = growth[max(0, cell - 1): cell + 2]
            if not neighborhood.any():
                mismatches.append((2 * rel_index + 1, float(lam)))

    flat = []
    run_start = None
    for j, growing in enumerate(growth):
        if not growing and run_start is None:
            run_start = j
        if growing and run_start is not None:
            flat.append((float(egrid[run_start]), float(egrid[j])))
            run_start = None
    if run_start is not None:
        flat.append((float(egrid[run_start]), float(egrid[-1])))
    interior_flat = tuple((a, b) for a, b in flat
                          if a > pooled_min + pad and b < pooled_max - pad)
    return SupportReport(energies=egrid, growth=growth,
                         mismatches=tuple(mismatches),
                         flat_intervals=interior_flat,
                         spectrum_hull=(pooled_min, pooled_max))


def _spectrum_task(args) -> spectral.Spectrum:
    ensemble, box, field, seed, index = args
    op, _ = _build_operator(ensemble, box, field, seed)
    return spectral.eigenvalues(op)
