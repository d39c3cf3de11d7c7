"""Lowest eigenpairs of the weighted forms and closed-form reference spectra.

The generalized symmetric problem K u = lambda M u is solved by ARPACK in
shift-invert mode with a small negative shift, which captures the constant
kernel robustly.  Closed-form factor spectra (circle, Gaussian-weighted
line, round sphere) combine by tensor sums for product shrinkers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla
from scipy.sparse.linalg import ArpackNoConvergence

from .forms import WeightedForms

DEFAULT_SEED = 0x5EED
DEFAULT_SHIFT = -1e-3
DEFAULT_RESIDUAL_TOL = 1e-8


class EigensolverError(RuntimeError):
    """Eigensolver failed to converge; carries any partial spectrum."""

    def __init__(self, message, partial=None, residuals=None):
        super().__init__(message)
        self.partial = partial
        self.residuals = residuals


def cluster_multiplicities(values, tol) -> list[tuple[float, int]]:
    """Group near-equal eigenvalues into (representative, count) pairs."""
    groups: list[list[float]] = []
    for v in values:
        if groups and v - groups[-1][-1] <= tol:
            groups[-1].append(float(v))
        else:
            groups.append([float(v)])
    return [(float(np.mean(grp)), len(grp)) for grp in groups]


@dataclass
class Spectrum:
    """Ascending eigenvalues with multiplicity groups and provenance."""

    eigenvalues: np.ndarray
    provenance: str
    eigenvectors: np.ndarray | None = None
    residuals: np.ndarray | None = None
    multiplicity_groups: list = field(default_factory=list)
    cluster_tol: float = 1e-6
    forms: WeightedForms | None = None

    def __post_init__(self):
        self.eigenvalues = np.asarray(self.eigenvalues, float)
        if np.any(np.diff(self.eigenvalues) < -1e-12):
            raise ValueError("eigenvalues must be ascending")
        if np.any(self.eigenvalues < -1e-10):
            raise ValueError("the weighted form is positive semidefinite; "
                             f"got eigenvalue {self.eigenvalues.min():.3g}")
        if not self.multiplicity_groups:
            self.multiplicity_groups = cluster_multiplicities(self.eigenvalues, self.cluster_tol)

    def contains(self, value, tol) -> bool:
        return bool(np.any(np.abs(self.eigenvalues - value) <= tol))

    def multiplicity_near(self, value, tol) -> int:
        return int(np.count_nonzero(np.abs(self.eigenvalues - value) <= tol))

    def to_rows(self):
        """TSV rows: index, eigenvalue, multiplicity group, residual, provenance."""
        group_of = {}
        idx = 0
        for gi, (_, count) in enumerate(self.multiplicity_groups):
            for _ in range(count):
                group_of[idx] = gi
                idx += 1
        rows = []
        for i, lam in enumerate(self.eigenvalues):
            res = float(self.residuals[i]) if self.residuals is not None else 0.0
            rows.append((i, float(lam), group_of.get(i, -1), res, self.provenance))
        return rows

    def to_dict(self):
        return {
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "multiplicity_groups": [[v, c] for v, c in self.multiplicity_groups],
            "residuals": None if self.residuals is None else [float(r) for r in self.residuals],
            "provenance": self.provenance,
            "cluster_tol": self.cluster_tol,
        }


def lowest_eigenpairs(forms: WeightedForms, count: int, tol: float = DEFAULT_RESIDUAL_TOL,
                      seed: int = DEFAULT_SEED, cluster_tol: float | None = None,
                      maxiter: int | None = None) -> Spectrum:
    """The ``count`` smallest eigenpairs of (stiffness, mass).

    Shift-invert Lanczos (ARPACK) at sigma = -1e-3, deterministic start
    vector from ``seed``.  Each returned pair satisfies
    ||K u - lambda M u||_{M^-1} <= tol; otherwise an
    :class:`EigensolverError` carries the partial results.
    """
    n = forms.stiffness.shape[0]
    if not 1 <= count < n:
        raise ValueError("need 1 <= count < matrix dimension")
    v0 = np.random.default_rng(seed).standard_normal(n)
    try:
        vals, vecs = spla.eigsh(forms.stiffness, k=count, M=forms.mass,
                                sigma=DEFAULT_SHIFT, which="LM", v0=v0,
                                maxiter=maxiter)
    except ArpackNoConvergence as exc:
        achieved = None
        partial = None
        if exc.eigenvalues is not None and len(exc.eigenvalues):
            order = np.argsort(exc.eigenvalues)
            partial = (exc.eigenvalues[order], exc.eigenvectors[:, order])
            achieved = _pair_residuals(forms, *partial)
        raise EigensolverError(
            f"eigensolver did not converge within the iteration cap: {exc}",
            partial=partial, residuals=achieved) from exc
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    residuals = _pair_residuals(forms, vals, vecs)
    if np.any(residuals > tol):
        raise EigensolverError(
            f"eigenpair residuals {residuals.max():.3g} exceed tol {tol:.3g}",
            partial=(vals, vecs), residuals=residuals)
    vals = np.where(np.abs(vals) < 1e-13, np.abs(vals) * 0.0, vals)
    ctol = cluster_tol if cluster_tol is not None else max(1e-6, 5.0 * tol)
    return Spectrum(vals, "computed", eigenvectors=vecs, residuals=residuals,
                    cluster_tol=ctol, forms=forms)


def _pair_residuals(forms, vals, vecs):
    out = np.empty(len(vals))
    for i, lam in enumerate(vals):
        r = forms.stiffness @ vecs[:, i] - lam * (forms.mass @ vecs[:, i])
        out[i] = forms.mass_inv_norm(r) / max(forms.mass_norm(vecs[:, i]), 1e-300)
    return out


# ---------------------------------------------------------------------------
# Closed-form factor spectra
# ---------------------------------------------------------------------------

def sphere_harmonic_multiplicity(n: int, ell: int) -> int:
    """Dimension of degree-ell spherical harmonics on S^n."""
    if ell == 0:
        return 1
    lower = math.comb(n + ell - 2, ell - 2) if ell >= 2 else 0
    return math.comb(n + ell, ell) - lower


def closed_form_spectrum(kind: str, count: int, radius: float | None = None,
                         n: int | None = None) -> Spectrum:
    """Reference spectra of the model factors.

    circle(r): k^2/r^2 with multiplicity 2 for k >= 1; hermite_line: m/2
    with multiplicity 1 (the Gaussian-weighted line); round_sphere(n, r):
    ell(ell+1)/r^2 with the spherical-harmonic multiplicity.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    values: list[float] = []
    if kind == "circle":
        k = 1
        values.append(0.0)
        while len(values) < count:
            values.extend([k**2 / radius**2] * 2)
            k += 1
    elif kind == "hermite_line":
        values = [m / 2.0 for m in range(count)]
    elif kind == "round_sphere":
        ell = 0
        while len(values) < count:
            values.extend([ell * (ell + 1) / radius**2] * sphere_harmonic_multiplicity(n, ell))
            ell += 1
    else:
        raise ValueError(f"unknown closed-form factor {kind!r}")
    return Spectrum(np.array(values[:count]), "closed-form", cluster_tol=1e-12)


def tensor_sum_spectrum(a: Spectrum, b: Spectrum, count: int) -> Spectrum:
    """The ``count`` smallest sums of eigenvalues of two factors.

    A spectrum with a single entry is treated as an exact shift.  Otherwise
    the result is guaranteed complete only while the largest retained sum
    stays below min(max(a), max(b)); deeper requests raise.
    """
    va, vb = a.eigenvalues, b.eigenvalues
    if len(va) == 1 or len(vb) == 1:
        shift, core = (va[0], vb) if len(va) == 1 else (vb[0], va)
        sums = np.sort(core + shift)[:count]
        if len(sums) < count:
            raise ValueError("insufficient input depth for the requested count")
        return Spectrum(sums, "tensor-sum", cluster_tol=max(a.cluster_tol, b.cluster_tol))
    sums = np.sort((va[:, None] + vb[None, :]).ravel())
    if count > len(sums):
        raise ValueError("insufficient input depth for the requested count")
    retained = sums[:count]
    guard = min(va.max(), vb.max())
    if retained[-1] >= guard:
        raise ValueError(
            f"requested depth reaches {retained[-1]:.6g} but the factors are only "
            f"resolved below {guard:.6g}; supply deeper factor spectra")
    return Spectrum(retained, "tensor-sum", cluster_tol=max(a.cluster_tol, b.cluster_tol))


def match_eigenspace(spectrum: Spectrum, target: float, references, forms: WeightedForms | None = None,
                     tol: float | None = None) -> float:
    """Largest principal angle (degrees) between a computed eigenspace and
    the span of reference fields, in the mass inner product."""
    forms = forms if forms is not None else spectrum.forms
    if forms is None or spectrum.eigenvectors is None:
        raise ValueError("spectrum must carry eigenvectors and forms")
    tol = tol if tol is not None else max(spectrum.cluster_tol, 2e-2)
    idx = np.where(np.abs(spectrum.eigenvalues - target) <= tol)[0]
    if len(idx) == 0:
        raise ValueError(f"no eigenvalue within {tol:g} of {target:g}")
    U = spectrum.eigenvectors[:, idx]
    V = np.column_stack([np.asarray(getattr(r, "values", r), float) for r in references])
    M = forms.mass

    def orthonormalize(B):
        G = B.T @ (M @ B)
        L = np.linalg.cholesky(G)
        return B @ np.linalg.inv(L).T

    U = orthonormalize(U)
    V = orthonormalize(V)
    k = min(U.shape[1], V.shape[1])
    sigma = np.linalg.svd(U.T @ (M @ V), compute_uv=False)[:k]
    return float(np.degrees(np.arccos(np.clip(sigma.min(), -1.0, 1.0))))


def theorem_spectrum_check(spectrum: Spectrum, nonconstant_coordinates: int,
                           tol: float = 2e-2) -> dict:
    """Presence of the eigenvalues 0 and 1/2 demanded of a proper shrinker.

    The 1/2-eigenvalue is carried by the restrictions of the Euclidean
    ambient coordinates, so its required multiplicity is the number of
    coordinates that are not identically constant on the surface (zero for
    shapes contained in a slice, where the requirement is vacuous).
    """
    has_zero = spectrum.contains(0.0, tol)
    mult_half = spectrum.multiplicity_near(0.5, tol)
    ok = has_zero and mult_half >= nonconstant_coordinates
    return {
        "zero_found": has_zero,
        "half_multiplicity": mult_half,
        "half_required": nonconstant_coordinates,
        "pass": bool(ok),
        "tol": tol,
    }
