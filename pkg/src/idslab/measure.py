"""Atomic measures on the line and convergence diagnostics.

Finite-volume eigenvalue-counting measures are sums of point masses, so
the whole toolkit works with weighted atoms: exact distribution
functions, transform evaluations of the form
integral of mu(dE) / |E - z|^p, smoothing kernels, continuous
indicator ramps, and grid-based vague-convergence and tightness
testers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AtomicMeasure:
    """Positive point masses on the real line, sorted by location."""

    locations: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.locations.setflags(write=False)
        self.weights.setflags(write=False)

    @classmethod
    def from_points(cls, locations, weights=None) -> "AtomicMeasure":
        """Build a measure, merging coincident atoms by weight addition."""
        loc = np.asarray(locations, dtype=float).ravel()
        w = (np.ones_like(loc) if weights is None
             else np.asarray(weights, dtype=float).ravel())
        if loc.shape != w.shape:
            raise ValueError("locations and weights differ in length")
        if not np.all(np.isfinite(loc)):
            raise ValueError("atom locations must be finite")
        if np.any(w <= 0.0):
            raise ValueError("atom weights must be positive")
        order = np.argsort(loc, kind="stable")
        loc = loc[order]
        w = w[order]
        if loc.size:
            uniq, inverse = np.unique(loc, return_inverse=True)
            merged = np.zeros_like(uniq)
            np.add.at(merged, inverse, w)
            loc, w = uniq, merged
        return cls(loc, w)

    @classmethod
    def empty(cls) -> "AtomicMeasure":
        return cls(np.zeros(0), np.zeros(0))

    @property
    def n_atoms(self) -> int:
        return self.locations.size

    def total_mass(self) -> float:
        return float(self.weights.sum())

    def scaled(self, factor: float) -> "AtomicMeasure":
        if not factor > 0:
            raise ValueError("scaling factor must be positive")
        return AtomicMeasure(self.locations, self.weights * factor)

    def mass_below(self, energy: float) -> float:
        """Left-continuous distribution function: mass strictly below E."""
        k = int(np.searchsorted(self.locations, energy, side="left"))
        return float(self.weights[:k].sum())

    def integrate(self, f) -> float:
        """sum of weight * f(location) over all atoms."""
        if self.n_atoms == 0:
            return 0.0
        vals = np.asarray(f(self.locations), dtype=float)
        if not np.all(np.isfinite(vals)):
            bad = int(np.flatnonzero(~np.isfinite(vals))[0])
            raise ValueError(f"integrand is not finite at atom {self.locations[bad]}")
        return float(np.sum(self.weights * vals))

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("location,weight\n")
            for loc, w in zip(self.locations, self.weights):
                fh.write(f"{loc:.17g},{w:.17g}\n")

    def to_json(self) -> str:
        return json.dumps({"locations": self.locations.tolist(),
                           "weights": self.weights.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "AtomicMeasure":
        data = json.loads(text)
        return cls.from_points(data["locations"], data["weights"])


def stieltjes(mu: AtomicMeasure, z: complex, p: float) -> float:
    """Transform value sum of w / |location - z|^p, finite off the axis."""
    if z.imag == 0.0:
        raise ValueError("the transform needs Im z != 0")
    if not p > 1.0:
        raise ValueError(f"the transform exponent must exceed 1, got {p}")
    if mu.n_atoms == 0:
        return 0.0
    return float(np.sum(mu.weights / np.abs(mu.locations - z) ** p))


def _adaptive_simpson(f, a: float, b: float, tol: float, depth: int = 60) -> float:
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, fa, b, fb, m, fm, whole, tol, depth):
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return (recurse(a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
                + recurse(m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1))

    return recurse(a, fa, b, fb, m, fm, whole, tol, depth)


_NORMALIZER_CACHE: dict[float, float] = {}


def kernel_normalizer(p: float) -> float:
    """The constant 1 / integral of dxi / |xi - i|^p over the line.

    Computed by adaptive Simpson on [-T, T] with T fixed by the tail
    bound 2 * integral_T^inf xi^(-p) dxi < 1e-10.
    """
    if not p > 1.0:
        raise ValueError(f"normalizer needs p > 1, got {p} (not normalizable)")
    if p in _NORMALIZER_CACHE:
        return _NORMALIZER_CACHE[p]
    tail = 1e-10
    t = (2.0 / (tail * (p - 1.0))) ** (1.0 / (p - 1.0))
    t = max(t, 4.0)
    integral = _adaptive_simpson(lambda x: (1.0 + x * x) ** (-p / 2.0),
                                 -t, t, tol=1e-12)
    value = 1.0 / integral
    _NORMALIZER_CACHE[p] = value
    return value


def smoothing_kernel(p: float, eps: float):
    """Unit-mass kernel E -> const * eps^(p-1) / (E^2 + eps^2)^(p/2).

    For p = 2 this is the Cauchy density eps / (pi (E^2 + eps^2)).
    The returned function is vectorized.
    """
    if not p > 1.0:
        raise ValueError(f"kernel exponent must exceed 1, got {p}")
    if not eps > 0.0:
        raise ValueError(f"kernel width must be positive, got {eps}")
    const = kernel_normalizer(p) * eps ** (p - 1.0)

    def kernel(e):
        e = np.asarray(e, dtype=float)
        return const / (e * e + eps * eps) ** (p / 2.0)

    return kernel


def indicator_hat(energy: float):
    """Continuous ramp indicator of the half line below ``energy``.

    1 below E, the linear ramp E + 1 - E' on [E, E+1), 0 from E+1 on.
    Squeezed between the indicators of (-inf, E) and (-inf, E+1).
    """

    def hat(e):
        e = np.asarray(e, dtype=float)
        return np.clip(energy + 1.0 - e, 0.0, 1.0)

    return hat


def mollified_indicator_hat(energy: float, eps: float):
    """The ramp indicator convolved with the p=2 (Cauchy) kernel.

    Closed form; continuously differentiable, so it qualifies as a
    smooth test function for functional gap diagnostics.
    """
    if not eps > 0.0:
        raise ValueError(f"kernel width must be positive, got {eps}")

    def upper_tail(t):
        # integral of the Cauchy density over (t, inf), unit width
        return 0.5 - np.arctan(t) / math.pi

    def smooth(e):
        e = np.asarray(e, dtype=float)
        a = (e - energy) / eps
        b = (e - energy - 1.0) / eps
        # contribution of the flat part below E plus the linear ramp
        flat = upper_tail(a)
        ramp = ((energy + 1.0 - e) * (upper_tail(b) - upper_tail(a))
                + (eps / (2.0 * math.pi)) * np.log((a * a + 1.0) / (b * b + 1.0)))
        return flat + ramp

    return smooth


def vague_distance(mu: AtomicMeasure, nu: AtomicMeasure, test_grid) -> float:
    """Largest transform gap over a grid of (z, p) test points.

    Zero exactly when the transforms agree on the whole grid; a
    computable stand-in for vague distance (a finite grid cannot
    certify convergence at every off-axis point, so treat small values
    as evidence, not proof).
    """
    grid = list(test_grid)
    if not grid:
        raise ValueError("the test grid must not be empty")
    worst = 0.0
    for z, p in grid:
        worst = max(worst, abs(stieltjes(mu, z, p) - stieltjes(nu, z, p)))
    return worst


def tightness_profile(measures, energy_grid) -> list[float]:
    """Mass below each grid energy, maximized over the tail of a sequence.

    The tail is the later half of the list, a finite-sequence stand-in
    for the limit superior; decay of the profile toward zero along a
    descending grid indicates no mass escapes to minus infinity.
    """
    seq = list(measures)
    if not seq:
        raise ValueError("need at least one measure")
    grid = list(energy_grid)
    if not grid:
        raise ValueError("the energy grid must not be empty")
    tail = seq[len(seq) // 2:]
    return [max(m.mass_below(e) for m in tail) for e in grid]


DEFAULT_TEST_GRID: tuple[tuple[complex, float], ...] = (
    (1j, 2.0), (1.0 + 1j, 2.0), (-1.0 + 1j, 2.0), (2j, 2.0))
