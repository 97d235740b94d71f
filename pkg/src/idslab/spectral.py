"""Dense complex-Hermitian eigensolver and matrix functions.

Everything downstream (eigenvalue counting, heat kernels, projectors)
runs on the solver in this module: Householder reduction of a Hermitian
matrix to real symmetric tridiagonal form, with the off-diagonal phases
absorbed into a diagonal unitary, followed by implicit-shift QL
iteration.  No library eigensolver is called anywhere; numpy is used
for array arithmetic only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_EPS = np.finfo(float).eps

#: Relative tolerance for deciding that an eigenvalue ties with a
#: counting threshold.  Ties count as NOT below (left-continuous step).
TIE_RELATIVE = 1e-12

_MAX_QL_SWEEPS = 60


class ConvergenceError(RuntimeError):
    """QL iteration failed to isolate an eigenvalue.

    Carries ``index``, the position of the offending eigenvalue.
    """

    def __init__(self, index: int):
        super().__init__(f"QL iteration did not converge for eigenvalue index {index}")
        self.index = index


class PivotError(RuntimeError):
    """Near-singular pivot met while factorizing for an inertia count."""


class EigenvalueProximityError(ValueError):
    """A threshold energy sits too close to an eigenvalue."""


def as_matrix(op) -> np.ndarray:
    """Return the dense Hermitian matrix behind ``op``.

    Accepts either an object with a ``matrix`` attribute (a built
    operator) or a raw square array.  Hermiticity must hold exactly;
    callers that assemble matrices themselves should symmetrize first.
    """
    a = np.asarray(getattr(op, "matrix", op))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    a = a.astype(complex, copy=False)
    if not np.array_equal(a, a.conj().T):
        raise ValueError("matrix is not exactly Hermitian")
    return a


def norm_proxy(op) -> float:
    """Upper bound for the spectral norm: n * max|entry|."""
    a = np.asarray(getattr(op, "matrix", op))
    if a.size == 0:
        return 0.0
    return float(a.shape[0] * np.abs(a).max())


@dataclass(frozen=True)
class Spectrum:
    """Full set of eigenvalues of a Hermitian matrix, sorted ascending."""

    eigenvalues: np.ndarray
    source_dim: int
    residual_bound: float

    def __post_init__(self):
        self.eigenvalues.setflags(write=False)

    @property
    def scale(self) -> float:
        """Magnitude of the largest eigenvalue (counting tie scale)."""
        if self.source_dim == 0:
            return 0.0
        return float(np.abs(self.eigenvalues).max())


def _tridiagonalize(a: np.ndarray, vectors: bool):
    """Householder reduction to real symmetric tridiagonal form.

    Returns ``(d, e, q)`` with ``q`` unitary and ``q^dagger a q``
    tridiagonal with diagonal ``d`` and nonnegative subdiagonal ``e``.
    ``q`` is None when ``vectors`` is False.  The phases of the complex
    subdiagonal produced by the reflectors are absorbed into ``q`` so
    the QL stage can run in real arithmetic.
    """
    n = a.shape[0]
    # zero-field operators are real symmetric; the real path runs the
    # same reduction in float arithmetic at a quarter of the flops
    dtype = float if not a.imag.any() else complex
    w = np.array(a.real if dtype is float else a, dtype=dtype)
    q = np.eye(n, dtype=dtype) if vectors else None
    lhs = np.empty((n, 2), dtype=dtype)
    rhs = np.empty((2, n), dtype=dtype)

    for k in range(n - 2):
        x = w[k + 1:, k]
        tail2 = float(np.sum(np.abs(x[1:]) ** 2))
        if tail2 == 0.0:
            continue
        xnorm = math.sqrt(float(abs(x[0]) ** 2) + tail2)
        alpha = x[0].item()
        phase = alpha / abs(alpha) if alpha != 0.0 else 1.0
        beta = -phase * xnorm
        v = x.copy()
        v[0] -= beta
        vnorm = math.sqrt(float(np.sum(np.abs(v) ** 2)))
        v /= vnorm

        # Rank-2 update of the trailing block, P A P with P = I - 2 v v^dagger,
        # fused into a single (m x 2) @ (2 x m) product.
        sub = w[k + 1:, k + 1:]
        av = sub @ v
        c = float(np.real(np.vdot(v, av)))
        u = 2.0 * (av - c * v)
        m = n - k - 1
        lhs[:m, 0] = u
        lhs[:m, 1] = v
        rhs[0, :m] = v.conj()
        rhs[1, :m] = u.conj()
        sub -= lhs[:m] @ rhs[:, :m]

        w[k + 1, k] = beta
        w[k + 2:, k] = 0.0
        w[k, k + 1:] = np.conj(w[k + 1:, k])

        if q is not None:
            qv = q[:, k + 1:] @ v
            q[:, k + 1:] -= 2.0 * np.outer(qv, v.conj())

    d = np.real(np.diag(w)).astype(float).copy()
    if n < 2:
        return d, np.zeros(0), q
    esub = w[np.arange(1, n), np.arange(n - 1)]
    e = np.abs(esub)

    # Absorb subdiagonal phases (signs, in the real case) into a
    # diagonal unitary so the QL stage sees nonnegative couplings.
    phases = np.ones(n, dtype=dtype)
    for k in range(n - 1):
        if e[k] != 0.0:
            phases[k + 1] = phases[k] * (esub[k] / e[k])
        else:
            phases[k + 1] = phases[k]
    if q is not None:
        q *= phases[np.newaxis, :]
    return d, e, q


def _ql_implicit(d: np.ndarray, e: np.ndarray, z: np.ndarray | None):
    """Implicit-shift QL iteration on a real symmetric tridiagonal.

    ``e[i]`` couples ``d[i]`` and ``d[i+1]``.  Rotations are
    accumulated into the columns of ``z`` when given.  Returns the
    unsorted eigenvalue array.  Scalar bookkeeping runs on Python
    lists: element access there is several times faster than numpy
    scalar indexing, and this loop dominates the eigenvalue-only path.
    """
    n = d.size
    if n == 0:
        return np.zeros(0)
    dl = d.astype(float).tolist()
    ee = e.astype(float).tolist() + [0.0]
    hypot = math.hypot
    copysign = math.copysign

    for l in range(n):
        sweeps = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(dl[m]) + abs(dl[m + 1])
                if abs(ee[m]) <= _EPS * dd:
                    break
                m += 1
            if m == l:
                break
            sweeps += 1
            if sweeps > _MAX_QL_SWEEPS:
                raise ConvergenceError(l)
            g = (dl[l + 1] - dl[l]) / (2.0 * ee[l])
            r = hypot(g, 1.0)
            g = dl[m] - dl[l] + ee[l] / (g + copysign(r, g))
            s = c = 1.0
            p = 0.0
            underflow = False
            for i in range(m - 1, l - 1, -1):
                f = s * ee[i]
                b = c * ee[i]
                r = hypot(f, g)
                ee[i + 1] = r
                if r == 0.0:
                    dl[i + 1] -= p
                    ee[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = dl[i + 1] - p
                r = (dl[i] - g) * s + 2.0 * c * b
                p = s * r
                dl[i + 1] = g + p
                g = c * r - b
                if z is not None:
                    zi1 = z[:, i + 1].copy()
                    z[:, i + 1] = s * z[:, i] + c * zi1
                    z[:, i] = c * z[:, i] - s * zi1
            if underflow:
                continue
            dl[l] -= p
            ee[l] = g
            ee[m] = 0.0
    return np.array(dl)


def _sturm_count(d: list, e: list, x: float) -> int:
    """Eigenvalues of tridiag(d, e) strictly below x, by Sturm sequence."""
    n = len(d)
    count = 0
    q = d[0] - x
    if q < 0.0:
        count += 1
    for i in range(1, n):
        if q == 0.0:
            q = _EPS * (abs(e[i - 1]) + _EPS)
        q = d[i] - x - e[i - 1] * e[i - 1] / q
        if q < 0.0:
            count += 1
    return count


def _verified_residual(d: np.ndarray, e: np.ndarray, lam: np.ndarray, proxy: float) -> float:
    """A posteriori eigenvalue bound via Sturm-count bracketing.

    For a sample of computed eigenvalues, find the smallest half-width
    delta such that the Sturm counts of the tridiagonal certify an
    eigenvalue within [lam-delta, lam+delta].  Since dist(lam, spec) =
    min over unit v of |T v - lam v|, delta/||H|| bounds the residual.
    """
    n = d.size
    if n == 0 or proxy == 0.0:
        return 0.0
    scale = max(float(np.abs(d).max(initial=0.0)), float(np.abs(e).max(initial=0.0)), 1e-300)
    indices = np.unique(np.linspace(0, n - 1, min(5, n)).astype(int))
    dlist = d.tolist()
    elist = e.tolist()
    worst = 0.0
    for k in indices:
        delta = max(64.0 * _EPS * scale, 1e-300)
        ok = False
        for _ in range(60):
            if (_sturm_count(dlist, elist, lam[k] + delta) >= k + 1
                    and _sturm_count(dlist, elist, lam[k] - delta) <= k):
                ok = True
                break
            delta *= 2.0
        if not ok:
            delta = scale
        worst = max(worst, delta)
    return worst / proxy


def eigenvalues(op) -> Spectrum:
    """Full spectrum of a Hermitian operator, ascending.

    Deterministic for fixed input.  The residual bound is certified
    against the reduced tridiagonal by Sturm-count bracketing.
    """
    a = as_matrix(op)
    n = a.shape[0]
    if n == 0:
        return Spectrum(np.zeros(0), 0, 0.0)
    d, e, _ = _tridiagonalize(a, vectors=False)
    vals = _ql_implicit(d, e, None)
    order = np.argsort(vals, kind="stable")
    vals = vals[order]
    res = _verified_residual(d, e, vals, norm_proxy(a))
    return Spectrum(vals, n, res)


def eigensystem(op) -> tuple[Spectrum, np.ndarray]:
    """Spectrum plus orthonormal eigenvectors (as matrix columns)."""
    a = as_matrix(op)
    n = a.shape[0]
    if n == 0:
        return Spectrum(np.zeros(0), 0, 0.0), np.zeros((0, 0), dtype=complex)
    d, e, q = _tridiagonalize(a, vectors=True)
    vals = _ql_implicit(d, e, q)
    order = np.argsort(vals, kind="stable")
    vals = vals[order]
    q = q[:, order]
    proxy = norm_proxy(a)
    worst = 0.0
    if proxy > 0.0:
        for k in np.unique(np.linspace(0, n - 1, min(5, n)).astype(int)):
            r = a @ q[:, k] - vals[k] * q[:, k]
            worst = max(worst, math.sqrt(float(np.sum(np.abs(r) ** 2))) / proxy)
    return Spectrum(vals.copy(), n, worst), q


def count_below(spectrum: Spectrum, energy: float) -> int:
    """Number of eigenvalues strictly below ``energy``.

    Left-continuous convention: eigenvalues within TIE_RELATIVE times
    the spectral scale of ``energy`` count as not below.
    """
    tie = TIE_RELATIVE * spectrum.scale
    return int(np.searchsorted(spectrum.eigenvalues, energy - tie, side="left"))


def count_below_grid(spectrum: Spectrum, energies: np.ndarray) -> np.ndarray:
    """Vectorized :func:`count_below` over an ascending energy grid."""
    tie = TIE_RELATIVE * spectrum.scale
    return np.searchsorted(spectrum.eigenvalues, np.asarray(energies, dtype=float) - tie,
                           side="left").astype(int)


_BK_ALPHA = (1.0 + math.sqrt(17.0)) / 8.0


def count_below_inertia(op, energy: float) -> int:
    """Eigenvalues below ``energy`` without computing the spectrum.

    Factorizes H - energy*I by symmetric (Bunch-Kaufman) pivoting and
    reads the inertia off the 1x1 and 2x2 pivot blocks.  Raises
    :class:`PivotError` when a pivot is nearly singular, in which case
    the caller should retry with ``energy`` shifted by about
    1e-10 * norm_proxy(op).
    """
    a = as_matrix(op)
    n = a.shape[0]
    w = a - energy * np.eye(n)
    scale = max(norm_proxy(w), 1e-300)
    tiny = 1e-14 * scale
    negatives = 0
    k = 0
    while k < n:
        absakk = abs(float(np.real(w[k, k])))
        if k + 1 < n:
            col = np.abs(w[k + 1:, k])
            imax = k + 1 + int(np.argmax(col))
            colmax = float(col.max())
        else:
            imax = k
            colmax = 0.0
        if max(absakk, colmax) <= tiny:
            raise PivotError(
                "near-singular pivot: retry with the energy shifted by "
                f"{1e-10 * scale:.3e}")
        step = 1
        pivot_index = k
        if absakk < _BK_ALPHA * colmax:
            row = np.abs(np.concatenate((w[imax, k:imax], w[imax + 1:, imax])))
            rowmax = float(row.max()) if row.size else 0.0
            if absakk * rowmax >= _BK_ALPHA * colmax * colmax:
                pass
            elif abs(float(np.real(w[imax, imax]))) >= _BK_ALPHA * rowmax:
                pivot_index = imax
            else:
                step = 2
                pivot_index = imax
        if step == 1:
            if pivot_index != k:
                _sym_swap(w, k, pivot_index)
            dkk = float(np.real(w[k, k]))
            if abs(dkk) <= tiny:
                raise PivotError(
                    "near-singular pivot: retry with the energy shifted by "
                    f"{1e-10 * scale:.3e}")
            if dkk < 0.0:
                negatives += 1
            if k + 1 < n:
                colv = w[k + 1:, k].copy()
                w[k + 1:, k + 1:] -= np.outer(colv, colv.conj()) / dkk
            k += 1
        else:
            if pivot_index != k + 1:
                _sym_swap(w, k + 1, pivot_index)
            p11 = float(np.real(w[k, k]))
            p22 = float(np.real(w[k + 1, k + 1]))
            offd = complex(w[k + 1, k])
            det = p11 * p22 - abs(offd) ** 2
            if abs(det) <= tiny * tiny:
                raise PivotError(
                    "near-singular 2x2 pivot: retry with the energy shifted by "
                    f"{1e-10 * scale:.3e}")
            if det < 0.0:
                negatives += 1
            elif p11 + p22 < 0.0:
                negatives += 2
            if k + 2 < n:
                u = w[k + 2:, k:k + 2].copy()
                inv = np.array([[p22, -np.conj(offd)], [-offd, p11]], dtype=complex) / det
                w[k + 2:, k + 2:] -= u @ inv @ u.conj().T
            k += 2
    return negatives


def _sym_swap(w: np.ndarray, i: int, j: int):
    """Symmetric row+column interchange of a Hermitian work matrix."""
    w[[i, j], :] = w[[j, i], :]
    w[:, [i, j]] = w[:, [j, i]]


def heat_kernel(op, t: float) -> np.ndarray:
    """exp(-t H) for a Hermitian operator, via eigendecomposition.

    The result is Hermitian positive definite with
    trace = sum_k exp(-t lambda_k).
    """
    if not t > 0.0:
        raise ValueError(f"time must be positive, got {t}")
    spectrum, vectors = eigensystem(op)
    half = vectors * np.exp(-0.5 * t * spectrum.eigenvalues)[np.newaxis, :]
    kern = half @ half.conj().T
    return 0.5 * (kern + kern.conj().T)


def spectral_projector(op, energy: float) -> np.ndarray:
    """Projector onto eigenspaces with eigenvalue strictly below ``energy``.

    Requires ``energy`` separated from every eigenvalue by more than
    TIE_RELATIVE * norm_proxy(op); raises
    :class:`EigenvalueProximityError` otherwise, advising a perturbed
    threshold.
    """
    spectrum, vectors = eigensystem(op)
    guard = TIE_RELATIVE * max(norm_proxy(op), 1e-300)
    if spectrum.source_dim and float(np.abs(spectrum.eigenvalues - energy).min()) <= guard:
        raise EigenvalueProximityError(
            f"energy {energy} is within {guard:.3e} of an eigenvalue; "
            "perturb the threshold and retry")
    sel = vectors[:, spectrum.eigenvalues < energy]
    proj = sel @ sel.conj().T
    return 0.5 * (proj + proj.conj().T)
