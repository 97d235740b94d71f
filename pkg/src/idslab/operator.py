"""Finite-volume magnetic Schroedinger operators on a lattice box.

The continuum operator (1/2)(i grad + A)^2 + V is discretized with the
nearest-neighbor stencil and Peierls phases: the hopping on the bond
from site x to x + h e_k carries exp(i phi) with
phi = -integral of A along the bond, evaluated exactly for the linear
symmetric-gauge vector potential A_k(x) = (1/2) sum_j x_j B_jk.

Boundary conditions:

* dirichlet - hard wall: kinetic diagonal d/h^2 at every site, missing
  neighbors simply absent.
* neumann - free end: each existing bond contributes 1/(2 h^2) to both
  endpoint diagonals, so the diagonal is coordination/(2 h^2).
* periodic - wrap-around bonds; wrap bonds carry an extra twist phase
  chosen so that every plaquette (seam plaquettes included) encloses
  the same flux B_jk h^2.  Needed only by the magnetic-translation
  machinery and the flat-band diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_BC_NAMES = ("dirichlet", "neumann", "periodic")
_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class BoxSpec:
    """A finite lattice box: sites per axis, lattice spacing, boundary rule."""

    dim: int
    sides: tuple[int, ...]
    spacing: float
    bc: str

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dim}")
        sides = tuple(int(s) for s in self.sides)
        object.__setattr__(self, "sides", sides)
        if len(sides) != self.dim:
            raise ValueError(f"expected {self.dim} side lengths, got {len(sides)}")
        if any(s < 1 for s in sides):
            raise ValueError(f"side lengths must be positive, got {sides}")
        if not (self.spacing > 0.0 and math.isfinite(self.spacing)):
            raise ValueError(f"lattice spacing must be positive, got {self.spacing}")
        bc = self.bc.lower()
        object.__setattr__(self, "bc", bc)
        if bc not in _BC_NAMES:
            raise ValueError(f"boundary condition must be one of {_BC_NAMES}, got {self.bc!r}")
        if bc == "periodic" and any(1 < s < 3 for s in sides):
            raise ValueError("periodic boxes need at least 3 sites per nontrivial axis "
                             "(a 2-site ring would carry double bonds)")

    @property
    def n_sites(self) -> int:
        n = 1
        for s in self.sides:
            n *= s
        return n

    @property
    def volume(self) -> float:
        return self.n_sites * self.spacing ** self.dim

    def site_indices(self) -> np.ndarray:
        """Integer multi-indices of all sites, shape (n, dim), C-order."""
        grids = np.meshgrid(*[np.arange(s) for s in self.sides], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def coordinates(self) -> np.ndarray:
        """Physical site coordinates, box centered at the origin."""
        centers = np.array([(s - 1) / 2.0 for s in self.sides])
        return (self.site_indices() - centers) * self.spacing

    def ravel(self, multi_indices: np.ndarray) -> np.ndarray:
        """Map integer multi-indices to flat site indices (C-order)."""
        return np.ravel_multi_index(np.asarray(multi_indices).T, self.sides)


@dataclass(frozen=True)
class MagneticField:
    """Constant magnetic field, stored as a skew-symmetric d x d tensor."""

    tensor: np.ndarray

    def __post_init__(self):
        t = np.array(self.tensor, dtype=float)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise ValueError(f"field tensor must be square, got shape {t.shape}")
        if not np.all(t == -t.T):
            raise ValueError("field tensor must be exactly skew-symmetric")
        t.setflags(write=False)
        object.__setattr__(self, "tensor", t)

    @classmethod
    def zero(cls, dim: int) -> "MagneticField":
        return cls(np.zeros((dim, dim)))

    @classmethod
    def uniform(cls, dim: int, strength: float) -> "MagneticField":
        """Field of the given strength in the (1,2)-plane; zero elsewhere."""
        if dim < 2 and strength != 0.0:
            raise ValueError("a nonzero field needs dim >= 2")
        t = np.zeros((dim, dim))
        if dim >= 2:
            t[0, 1] = strength
            t[1, 0] = -strength
        return cls(t)

    @property
    def dim(self) -> int:
        return self.tensor.shape[0]

    def is_zero(self) -> bool:
        return not np.any(self.tensor)

    def vector_potential(self, points: np.ndarray) -> np.ndarray:
        """Symmetric-gauge A at the given points: A_k = (1/2) sum_j x_j B_jk."""
        return 0.5 * np.asarray(points) @ self.tensor


@dataclass(frozen=True)
class HermitianOperator:
    """Dense Hermitian matrix with its lattice-box metadata.

    Row/column index i corresponds to the site with multi-index
    ``box.site_indices()[i]`` (C-order); this is the site-index
    bijection shared by potentials and window traces.
    """

    matrix: np.ndarray
    box: BoxSpec
    field: MagneticField | None = field(default=None, compare=False)

    def __post_init__(self):
        self.matrix.setflags(write=False)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def _check_potential(box: BoxSpec, potential) -> np.ndarray:
    v = np.asarray(potential, dtype=float).ravel()
    if v.size != box.n_sites:
        raise ValueError(f"potential has {v.size} entries, box has {box.n_sites} sites")
    bad = np.flatnonzero(~np.isfinite(v))
    if bad.size:
        i = int(bad[0])
        raise ValueError(f"potential is not finite at site {i} "
                         f"(multi-index {tuple(box.site_indices()[i])})")
    return v


def build_hamiltonian(box: BoxSpec, field: MagneticField, potential) -> HermitianOperator:
    """Assemble the lattice magnetic Schroedinger operator.

    Hopping -exp(i phi)/(2 h^2) on every nearest-neighbor bond, kinetic
    diagonal per boundary rule, sampled potential added to the
    diagonal.  The matrix is Hermitian to the last bit: conjugate
    entries are written as exact conjugates.
    """
    if field.dim != box.dim:
        raise ValueError(f"field tensor is {field.dim}-dimensional, box is {box.dim}-dimensional")
    v = _check_potential(box, potential)
    n = box.n_sites
    h = box.spacing
    hop = 1.0 / (2.0 * h * h)
    idx = box.site_indices()
    coords = box.coordinates()
    halfb = field.tensor * 0.5

    mat = np.zeros((n, n), dtype=complex)
    coordination = np.zeros(n)

    for axis in range(box.dim):
        length = box.sides[axis]
        if length < 2:
            continue
        # phi_k(x) = -h * A_k(midpoint) = -(h/2) sum_j x_j B_jk, exact for linear A.
        phase_all = -h * (coords @ halfb[:, axis])

        interior = idx[:, axis] < length - 1
        src = np.flatnonzero(interior)
        tgt_idx = idx[src].copy()
        tgt_idx[:, axis] += 1
        tgt = box.ravel(tgt_idx)
        amp = -hop * np.exp(1j * phase_all[src])
        mat[src, tgt] = amp
        mat[tgt, src] = np.conj(amp)
        coordination[src] += 1.0
        coordination[tgt] += 1.0

        if box.bc == "periodic":
            src = np.flatnonzero(idx[:, axis] == length - 1)
            tgt_idx = idx[src].copy()
            tgt_idx[:, axis] = 0
            tgt = box.ravel(tgt_idx)
            # Twist so seam plaquettes enclose the same flux as bulk ones.
            twist = -(h * h * length / 2.0) * (idx[src].astype(float) @ field.tensor[:, axis])
            amp = -hop * np.exp(1j * (phase_all[src] + twist))
            mat[src, tgt] = amp
            mat[tgt, src] = np.conj(amp)
            coordination[src] += 1.0
            coordination[tgt] += 1.0

    if box.bc == "neumann":
        diag = coordination * hop
    else:
        # Hard wall (and full coordination on the torus): d/h^2 everywhere.
        diag = np.full(n, box.dim / (h * h))
    mat[np.diag_indices(n)] = diag + v
    return HermitianOperator(mat, box, field)


def gauge_transform(op: HermitianOperator, chi) -> HermitianOperator:
    """Conjugate by the diagonal unitary U = diag(exp(i chi)).

    Returns U^dagger H U; the spectrum is unchanged.
    """
    chi = np.asarray(chi, dtype=float).ravel()
    if chi.size != op.n:
        raise ValueError(f"gauge function has {chi.size} entries, operator has {op.n} sites")
    if not np.all(np.isfinite(chi)):
        raise ValueError("gauge function must be finite everywhere")
    phase = np.exp(1j * chi)
    mat = np.outer(np.conj(phase), phase) * op.matrix
    # FMA inside the outer product can leave ~1e-16 asymmetry; averaging
    # with the conjugate transpose restores exact Hermiticity.
    mat = 0.5 * (mat + mat.conj().T)
    return HermitianOperator(mat, op.box, op.field)


def flux_quantum_deficit(box: BoxSpec, field: MagneticField) -> float:
    """Worst-case distance of per-cycle fluxes from integer flux quanta.

    For each field component B_jk and each of the two cycle lengths the
    commensurability requirement is B_jk h^2 L in 2 pi Z; the deficit
    reported is the largest fractional part (in units of 2 pi).
    """
    h2 = box.spacing ** 2
    worst = 0.0
    for j in range(box.dim):
        for k in range(j + 1, box.dim):
            b = field.tensor[j, k]
            if b == 0.0:
                continue
            for length in (box.sides[j], box.sides[k]):
                frac = (b * h2 * length / _TWO_PI) % 1.0
                worst = max(worst, min(frac, 1.0 - frac))
    return worst


def magnetic_translate(op: HermitianOperator, shift) -> HermitianOperator:
    """Conjugate by a discrete magnetic translation on a torus.

    The translation combines the cyclic site shift with the phase
    exp[(i/2) sum_jk (s_j - y_j) B_jk s_k] at site y, s = spacing *
    shift.  Requires periodic boundary conditions and commensurate
    flux (every per-cycle flux an integer number of quanta); refuses
    otherwise, reporting the required flux quantum.

    For commensurate flux the result has exactly the spectrum of the
    operator built from the correspondingly translated potential; when
    a cycle carries an odd number of quanta the two operators agree up
    to a diagonal gauge, with identical spectra.
    """
    box = op.box
    if box.bc != "periodic":
        raise ValueError("magnetic translations need a periodic box")
    shift = np.asarray(shift)
    if shift.shape != (box.dim,) or not np.issubdtype(shift.dtype, np.integer):
        raise ValueError(f"shift must be {box.dim} integers, got {shift!r}")
    if op.field is None:
        raise ValueError("operator carries no field metadata")
    deficit = flux_quantum_deficit(box, op.field)
    if deficit > 1e-9:
        h2 = box.spacing ** 2
        quanta = {f"axis {k}": _TWO_PI / (h2 * box.sides[k]) for k in range(box.dim)}
        raise ValueError(
            "incommensurate flux: per-cycle flux misses an integer quantum by "
            f"{deficit:.3g} of 2 pi; required field quanta per unit B_jk: {quanta}")

    idx = box.site_indices()
    coords = box.coordinates()
    s = shift * box.spacing
    # theta(y) = (1/2) (s - y)^T B s, the paper-form translation phase.
    theta = 0.5 * ((s - coords) @ op.field.tensor @ s)
    phase = np.exp(1j * theta)

    shifted = np.mod(idx + shift, box.sides)
    perm = box.ravel(shifted)
    mat = np.outer(np.conj(phase[perm]), phase[perm]) * op.matrix[np.ix_(perm, perm)]
    mat = 0.5 * (mat + mat.conj().T)
    return HermitianOperator(mat, box, op.field)


def plaquette_flux(op: HermitianOperator, corner: np.ndarray, axes: tuple[int, int]) -> complex:
    """Product of the four hopping phase factors around one plaquette.

    ``corner`` is the multi-index of the lower corner, ``axes`` the two
    lattice directions spanning the plaquette.  Each factor is the
    hopping entry normalized to unit modulus, traversed in the
    (axes[0], axes[1]) orientation.  For the Peierls construction the
    product equals exp(-i B_jk h^2).
    """
    box = op.box
    j, k = axes
    a = np.asarray(corner)
    b = a.copy(); b[j] = (b[j] + 1) % box.sides[j]
    c = b.copy(); c[k] = (c[k] + 1) % box.sides[k]
    d = a.copy(); d[k] = (d[k] + 1) % box.sides[k]
    loop = [a, b, c, d, a]
    flat = [int(box.ravel(p[np.newaxis, :])[0]) for p in loop]
    result = 1.0 + 0.0j
    for src, tgt in zip(flat[:-1], flat[1:]):
        entry = op.matrix[src, tgt]
        if entry == 0.0:
            raise ValueError(f"sites {src} and {tgt} are not connected")
        result *= entry / abs(entry)
    return result
