"""Numerical certification of the weighted-integral and pointwise identities.

Checks cover: the coordinate eigenfunction identity Delta_f <x,v> = -<x,v>/2,
the quadratic identity for Delta_f |x|^2 and its partial-sum inequalities,
the vanishing of the weighted integral of Delta_f u, L^2_f orthogonality of
eigenfunctions with distinct eigenvalues, and the stability equation
Delta_f <nu,v> + |A|^2 <nu,v> = 0.

The identities hold exactly on the continuous shrinkers, so each check
passes when its residual is within a discretization-error budget tol(h) =
C * h.  The per-family constants C below were frozen from the refinement
study in scripts/refinement_study.py; they separate discretization error
from genuine violations, which do not shrink with h.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .forms import WeightedForms, apply_drifted_laplacian, assemble
from .geometry import CatalogShape, Hyperplane, RoundSphere, SolitonHyperplaneProduct, SphereCylinder
from .meshing import Mesh, VertexField, fminimal_residual, weighted_vertex_measure
from .reports import IdentityReport

# tol(h) = C * h coefficients per shape family, calibrated once by the
# refinement study.  "weak" covers energy-dual residuals of eigenfunction
# identities, "pointwise" the vertexwise quadratic checks (large constants
# for noncompact families reflect the |x|^4 h^2 growth of the consistency
# error at the far truncation region).
TOL_COEFF_WEAK = {
    "round_sphere": 0.05,
    "sphere_cylinder": 0.08,
    "hyperplane": 0.08,
    "soliton_sphere_product": 0.05,
    "soliton_hyperplane_product": 0.08,
    None: 0.1,
}
TOL_COEFF_POINTWISE = {
    "round_sphere": 0.6,
    "sphere_cylinder": 0.6,
    "hyperplane": 30.0,
    "soliton_sphere_product": 0.6,
    "soliton_hyperplane_product": 0.6,
    None: 30.0,
}
SHRINKER_RESIDUAL_COEFF = 0.5

MEAN_ZERO_TOL_CLOSED = 1e-10
MEAN_ZERO_TOL_TRUNCATED = 1e-6
ORTHOGONALITY_TOL = 1e-8


def tol_weak(mesh: Mesh) -> float:
    family = mesh.shape.variant if mesh.shape is not None else None
    return TOL_COEFF_WEAK.get(family, TOL_COEFF_WEAK[None]) * mesh.max_element_size


def tol_pointwise(mesh: Mesh) -> float:
    family = mesh.shape.variant if mesh.shape is not None else None
    return TOL_COEFF_POINTWISE.get(family, TOL_COEFF_POINTWISE[None]) * mesh.max_element_size


def _field_values(u) -> np.ndarray:
    return u.values if isinstance(u, VertexField) else np.asarray(u, float)


def weighted_integral(mesh: Mesh, u) -> float:
    """Integral of u against the lumped weighted vertex measure."""
    return float(np.sum(_field_values(u) * weighted_vertex_measure(mesh).values))


def weighted_inner(forms: WeightedForms, u, w) -> float:
    """L^2_f inner product through the consistent mass matrix."""
    return float(_field_values(u) @ (forms.mass @ _field_values(w)))


def weak_eigen_residual(forms: WeightedForms, u, lam: float) -> float:
    """Energy-dual norm of K u - lam M u, relative to the mass norm of u.

    The residual of a weak identity is a functional on the form domain, so
    it is measured in the (K + M)^-1 dual norm; this keeps mesh-scale
    oscillations from inflating an O(h) defect.
    """
    values = _field_values(u)
    norm_u = forms.mass_norm(values)
    if norm_u == 0.0:
        return 0.0
    r = forms.stiffness @ values - lam * (forms.mass @ values)
    return forms.dual_norm(r) / norm_u


def check_coordinate_identity(mesh: Mesh, v, forms: WeightedForms | None = None,
                              tol: float | None = None) -> IdentityReport:
    """Delta_f <x,v> = -<x,v>/2 for a Euclidean ambient direction v."""
    forms = forms if forms is not None else assemble(mesh)
    x = mesh.euclidean_coordinates()
    v = np.asarray(v, float)
    if v.shape != (x.shape[1],):
        raise ValueError(f"direction must have length {x.shape[1]}")
    u = x @ v
    residual = weak_eigen_residual(forms, u, 0.5)
    return IdentityReport(
        identity="coordinate-eigenfunction",
        lhs=residual, rhs=0.0, residual=residual,
        tol=tol if tol is not None else tol_weak(mesh),
        meta=_meta(mesh, direction=v.tolist()),
    )


def check_xsq_identities(mesh: Mesh, j: int, forms: WeightedForms | None = None,
                         tol: float | None = None) -> IdentityReport:
    """Quadratic identity and inequalities for Delta_f sum_{i<=j} x_i^2.

    For j = p (all Euclidean coordinates) the exact identity
    Delta_f |x|^2 = -|x|^2 + 2p - 2 |proj nu|^2 is checked pointwise at
    interior vertices with the discrete normal projection; for every j the
    two-sided bounds with 2(j - codim) and 2j are checked with slack tol(h).
    """
    forms = forms if forms is not None else assemble(mesh)
    x = mesh.euclidean_coordinates()
    p = x.shape[1]
    if not 1 <= j <= p:
        raise ValueError(f"need 1 <= j <= {p}")
    u = np.einsum("ij,ij->i", x[:, :j], x[:, :j])
    lhs = apply_drifted_laplacian(forms, u).values
    interior = mesh.interior_mask
    tol = tol if tol is not None else tol_pointwise(mesh)

    nu_eucl = mesh.vertex_normals[:, :p]
    proj_sq = np.einsum("ij,ij->i", nu_eucl[:, :j], nu_eucl[:, :j])
    codim = 1
    lower = -u + 2.0 * (j - codim)
    upper = -u + 2.0 * j
    viol_lower = float(np.max(lower[interior] - lhs[interior], initial=-math.inf))
    viol_upper = float(np.max(lhs[interior] - upper[interior], initial=-math.inf))
    residual = max(0.0, viol_lower, viol_upper)
    meta = _meta(mesh, j=j, lower_violation=viol_lower, upper_violation=viol_upper)
    if j == p:
        rhs = -u + 2.0 * p - 2.0 * proj_sq
        mismatch = float(np.max(np.abs(lhs[interior] - rhs[interior])))
        residual = max(residual, mismatch)
        meta["pointwise_mismatch"] = mismatch
    return IdentityReport(
        identity=f"quadratic-coordinates-j{j}",
        lhs=float(np.max(lhs[interior])), rhs=float(np.max(upper[interior])),
        residual=residual, tol=tol, meta=meta,
    )


def check_mean_zero(mesh: Mesh, u, mode: str = "L1", forms: WeightedForms | None = None,
                    tol: float | None = None) -> IdentityReport:
    """Vanishing of the weighted integral of Delta_f u.

    Computed in the exact weak form -(ones)^T K u: structurally zero on
    closed meshes through the stiffness row sums, and bounded by the
    analytic tail on truncated ones.  ``mode`` records which hypothesis
    (sign-definite Delta_f u, or Delta_f u integrable) legitimizes the
    identity for the field at hand.
    """
    if mode not in ("sign-definite", "L1"):
        raise ValueError("mode must be 'sign-definite' or 'L1'")
    forms = forms if forms is not None else assemble(mesh)
    values = _field_values(u)
    value = -float(np.ones(len(values)) @ (forms.stiffness @ values))
    norm_u = forms.mass_norm(values)
    residual = abs(value) / max(norm_u, 1e-300)
    if tol is None:
        tol = MEAN_ZERO_TOL_CLOSED if mesh.is_closed else MEAN_ZERO_TOL_TRUNCATED
    return IdentityReport(
        identity="mean-zero",
        lhs=value, rhs=0.0, residual=residual, tol=tol,
        meta=_meta(mesh, mode=mode, closed=mesh.is_closed),
    )


def check_orthogonality(mesh: Mesh, u, w, lam_u: float, lam_w: float,
                        forms: WeightedForms | None = None,
                        tol: float = ORTHOGONALITY_TOL) -> IdentityReport:
    """L^2_f orthogonality of eigenfunctions with distinct eigenvalues."""
    forms = forms if forms is not None else assemble(mesh)
    meta = _meta(mesh, lam_u=lam_u, lam_w=lam_w)
    if abs(lam_u - lam_w) < 1e-12:
        return IdentityReport(identity="orthogonality", lhs=0.0, rhs=0.0,
                              residual=0.0, tol=tol, meta=meta, skipped=True)
    uv, wv = _field_values(u), _field_values(w)
    inner = weighted_inner(forms, uv, wv)
    scale = forms.mass_norm(uv) * forms.mass_norm(wv)
    if scale == 0.0:
        meta["degenerate"] = True
        return IdentityReport(identity="orthogonality", lhs=inner, rhs=0.0,
                              residual=0.0, tol=tol, meta=meta)
    return IdentityReport(identity="orthogonality", lhs=inner, rhs=0.0,
                          residual=abs(inner) / scale, tol=tol, meta=meta)


def check_stability_equation(shape: CatalogShape, mesh: Mesh, v,
                             forms: WeightedForms | None = None,
                             tol: float | None = None) -> IdentityReport:
    """Delta_f <nu,v> + |A|^2 <nu,v> = 0 with the discrete normal field.

    Supported on Gaussian-ambient catalog shapes, where |A|^2 is constant;
    shapes with non-constant or partial |A|^2 yield a skipped report.
    """
    forms = forms if forms is not None else assemble(mesh)
    meta = _meta(mesh)
    if not isinstance(shape, (RoundSphere, SphereCylinder, Hyperplane)):
        meta["unsupported"] = "second fundamental form is not a closed-form constant"
        return IdentityReport(identity="stability-equation", lhs=0.0, rhs=0.0,
                              residual=0.0, tol=tol or 0.0, meta=meta, skipped=True)
    a_sq = shape.second_fundamental_norm_sq()
    v = np.asarray(v, float)
    u = mesh.vertex_normals @ v
    residual = weak_eigen_residual(forms, u, a_sq)
    return IdentityReport(
        identity="stability-equation",
        lhs=residual, rhs=0.0, residual=residual,
        tol=tol if tol is not None else tol_weak(mesh),
        meta=dict(meta, a_sq=a_sq, direction=v.tolist()),
    )


def check_shrinker_residual(mesh: Mesh, tol: float | None = None) -> IdentityReport:
    """Sup norm of the discrete f-minimality residual over interior vertices."""
    _, sup, weighted_l2 = fminimal_residual(mesh)
    return IdentityReport(
        identity="f-minimal-residual",
        lhs=sup, rhs=0.0, residual=sup,
        tol=tol if tol is not None else SHRINKER_RESIDUAL_COEFF * mesh.max_element_size,
        meta=_meta(mesh, weighted_l2=weighted_l2),
    )


def _meta(mesh: Mesh, **extra) -> dict:
    meta = {
        "vertices": len(mesh.vertices),
        "elements": len(mesh.elements),
        "h": mesh.max_element_size,
    }
    if mesh.shape is not None:
        meta["shape"] = mesh.shape.to_dict()
    if mesh.truncation is not None:
        meta["truncation"] = mesh.truncation.to_dict()
    meta.update(extra)
    return meta


def run_identity_suite(mesh: Mesh, forms: WeightedForms | None = None) -> list[IdentityReport]:
    """All identity checks applicable to a mesh, sharing one assembly."""
    forms = forms if forms is not None else assemble(mesh)
    x = mesh.euclidean_coordinates()
    p = x.shape[1]
    n = mesh.shape.n if mesh.shape is not None else mesh.n
    reports = [check_shrinker_residual(mesh)]

    for i in range(p):
        e = np.zeros(p)
        e[i] = 1.0
        reports.append(check_coordinate_identity(mesh, e, forms=forms))
    for j in range(1, p + 1):
        reports.append(check_xsq_identities(mesh, j, forms=forms))

    norm_sq = np.einsum("ij,ij->i", x, x)
    quad = 2.0 * n - norm_sq
    for i in range(p):
        reports.append(check_mean_zero(mesh, x[:, i], mode="L1", forms=forms))
    reports.append(check_mean_zero(mesh, quad, mode="L1", forms=forms))

    # quadratic eigenfunction (eigenvalue 1) against each coordinate (1/2)
    for i in range(p):
        reports.append(check_orthogonality(mesh, quad, x[:, i], 1.0, 0.5, forms=forms))
    if p >= 2:
        reports.append(check_orthogonality(mesh, x[:, 0], x[:, 1], 0.5, 0.5, forms=forms))

    if mesh.shape is not None and mesh.ambient.is_gaussian:
        dim = mesh.vertices.shape[1]
        for i in range(dim):
            e = np.zeros(dim)
            e[i] = 1.0
            reports.append(check_stability_equation(mesh.shape, mesh, e, forms=forms))
    return reports
