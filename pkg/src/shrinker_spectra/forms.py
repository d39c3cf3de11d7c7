"""Assembly of the Gaussian-weighted Dirichlet and mass forms.

The discretization contract is the weak identity: for piecewise-linear
fields u, v on the mesh,

    v^T K u  ~  integral <grad u, grad v> e^{-f},
    v^T M u  ~  integral u v e^{-f},

so that -K represents the drifted Laplacian weakly.  The weight is taken at
element centroids (one-point quadrature), which preserves symmetry and the
zero row sums of the stiffness exactly; truncation boundaries get the
natural (do-nothing) condition.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.io import mmwrite

from .geometry import (
    CatalogShape,
    Hyperplane,
    RoundSphere,
    SolitonHyperplaneProduct,
    SolitonSphereProduct,
    SphereCylinder,
)
from .meshing import Mesh, VertexField
from .reports import IdentityReport

SYMMETRY_TOL = 1e-14
ROW_SUM_TOL = 1e-12


class AssemblyError(ValueError):
    """Mesh cannot be assembled into the weighted forms."""


def _element_matrices(mesh: Mesh):
    """Per-element stiffness and consistent-mass blocks (unit weight)."""
    v = mesh.vertices
    if mesh.n == 1:
        lengths = mesh.element_measures
        k_off = -1.0 / lengths
        K = np.empty((len(lengths), 2, 2))
        K[:, 0, 1] = K[:, 1, 0] = k_off
        K[:, 0, 0] = K[:, 1, 1] = -k_off
        M = np.empty_like(K)
        M[:, 0, 0] = M[:, 1, 1] = lengths / 3.0
        M[:, 0, 1] = M[:, 1, 0] = lengths / 6.0
        return K, M
    tri = mesh.elements
    a, b, c = v[tri[:, 0]], v[tri[:, 1]], v[tri[:, 2]]
    areas = mesh.element_measures
    edges = (c - b, a - c, b - a)
    coef = 1.0 / (4.0 * areas)
    K = np.zeros((len(tri), 3, 3))
    for l in range(3):
        for m in range(l + 1, 3):
            off = coef * np.einsum("ij,ij->i", edges[l], edges[m])
            K[:, l, m] = off
            K[:, m, l] = off
    # diagonal from the off-diagonals keeps element row sums exactly zero
    for l in range(3):
        K[:, l, l] = -(K[:, l, :].sum(axis=1) - K[:, l, l])
    M = np.tile(np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0,
                (len(tri), 1, 1))
    M *= areas[:, None, None]
    return K, M


def _scatter(mesh: Mesh, blocks: np.ndarray) -> sp.csr_matrix:
    nloc = mesh.n + 1
    rows = np.repeat(mesh.elements, nloc, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, nloc)).ravel()
    mat = sp.coo_matrix((blocks.ravel(), (rows, cols)),
                        shape=(len(mesh.vertices),) * 2)
    return mat.tocsr()


def _centroid_weights(mesh: Mesh) -> np.ndarray:
    x = mesh.element_centroids[:, : mesh.ambient.p] if (mesh.factor_only or not mesh.ambient.is_gaussian) \
        else mesh.element_centroids
    f = np.einsum("ij,ij->i", x, x) / 4.0
    return np.exp(-f) * mesh.weight_scale


@dataclass(eq=False)
class WeightedForms:
    """Sparse stiffness/mass pair of the weighted Dirichlet form."""

    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    mesh: Mesh
    weighted: bool = True

    @cached_property
    def lumped_mass(self) -> np.ndarray:
        """Row sums of the consistent mass (the lumped weighted measure)."""
        return np.asarray(self.mass.sum(axis=1)).ravel()

    @cached_property
    def mass_solver(self):
        return spla.factorized(self.mass.tocsc())

    @cached_property
    def dual_solver(self):
        """Factorization of K + M, used for the energy-dual residual norm."""
        return spla.factorized((self.stiffness + self.mass).tocsc())

    def validate(self):
        K, M = self.stiffness, self.mass
        scale = max(abs(K.data).max(), 1.0)
        asym = abs((K - K.T).data).max() if (K - K.T).nnz else 0.0
        if asym > SYMMETRY_TOL * scale:
            raise AssemblyError(f"stiffness asymmetry {asym:.3g} exceeds tolerance")
        masym = abs((M - M.T).data).max() if (M - M.T).nnz else 0.0
        if masym > SYMMETRY_TOL * max(abs(M.data).max(), 1.0):
            raise AssemblyError(f"mass asymmetry {masym:.3g} exceeds tolerance")
        if self.mesh.is_closed:
            row_sums = np.asarray(K.sum(axis=1)).ravel()
            if np.abs(row_sums).max() > ROW_SUM_TOL * scale:
                raise AssemblyError("stiffness row sums do not vanish on a closed mesh")
        if np.any(M.diagonal() <= 0):
            raise AssemblyError("mass diagonal must be positive")
        self.mass_solver  # factorization success doubles as the SPD check
        return self

    def mass_norm(self, u: np.ndarray) -> float:
        return float(math.sqrt(max(u @ (self.mass @ u), 0.0)))

    def mass_inv_norm(self, r: np.ndarray) -> float:
        return float(math.sqrt(max(r @ self.mass_solver(r), 0.0)))

    def dual_norm(self, r: np.ndarray) -> float:
        """Norm of a weak residual as a functional on the form domain."""
        return float(math.sqrt(max(r @ self.dual_solver(r), 0.0)))

    def rayleigh_quotient(self, u: np.ndarray) -> float:
        return float((u @ (self.stiffness @ u)) / (u @ (self.mass @ u)))

    def export_matrix_market(self, prefix):
        """Write <prefix>_stiffness.mtx and <prefix>_mass.mtx."""
        mmwrite(f"{prefix}_stiffness.mtx", self.stiffness.tocoo(), symmetry="symmetric")
        mmwrite(f"{prefix}_mass.mtx", self.mass.tocoo(), symmetry="symmetric")


def assemble(mesh: Mesh) -> WeightedForms:
    """Weighted stiffness and consistent mass with centroid weights."""
    K_blocks, M_blocks = _element_matrices(mesh)
    w = _centroid_weights(mesh)
    forms = WeightedForms(
        _scatter(mesh, K_blocks * w[:, None, None]),
        _scatter(mesh, M_blocks * w[:, None, None]),
        mesh,
    )
    return forms.validate()


def assemble_unweighted(mesh: Mesh) -> WeightedForms:
    """Unweighted P1 stiffness/mass pair (weight identically one)."""
    K_blocks, M_blocks = _element_matrices(mesh)
    forms = WeightedForms(_scatter(mesh, K_blocks), _scatter(mesh, M_blocks),
                          mesh, weighted=False)
    return forms.validate()


def assemble_potential_matrix(mesh: Mesh, values_at_centroids: np.ndarray) -> sp.csr_matrix:
    """Mass-type matrix of a multiplication operator, centroid sampled."""
    _, M_blocks = _element_matrices(mesh)
    values = np.asarray(values_at_centroids, float)
    if values.shape != (len(mesh.elements),):
        raise AssemblyError("potential values must be given per element")
    return _scatter(mesh, M_blocks * values[:, None, None])


def apply_drifted_laplacian(forms: WeightedForms, u) -> VertexField:
    """Lumped-mass weak application of the drifted Laplacian.

    Interior values approximate Delta_f u; rows at truncation boundaries
    carry the natural-boundary defect and should be masked by callers.
    """
    values = u.values if isinstance(u, VertexField) else np.asarray(u, float)
    if values.shape != (len(forms.mesh.vertices),):
        raise AssemblyError("field does not match the mesh")
    return VertexField(forms.mesh, -(forms.stiffness @ values) / forms.lumped_mass)


# ---------------------------------------------------------------------------
# Schrodinger gauge potential
# ---------------------------------------------------------------------------

def schrodinger_potential(shape: CatalogShape, point) -> float:
    """Gauge potential |H|^2/4 + f/4 + Rbar/4 - dim(ambient)/4 + Hess-term.

    This is the potential of the unitarily conjugated operator whose
    properness forces a discrete spectrum.  The final term is half the
    ambient Hessian of f traced over the normal bundle; for hypersurfaces it
    equals |proj_euclid(nu)|^2 / 4.
    """
    point = shape.check_on_surface(point)
    amb = shape.ambient()
    H = shape.mean_curvature_vector(point)
    nu = shape.unit_normal(point)
    f = np.dot(point[: amb.p], point[: amb.p]) / 4.0
    hess_term = 0.25 * float(np.dot(nu[: amb.p], nu[: amb.p]))
    return float(np.dot(H, H)) / 4.0 + f / 4.0 + amb.scalar_curvature / 4.0 \
        - amb.manifold_dim / 4.0 + hess_term


def schrodinger_potential_bound(shape: CatalogShape, point) -> float:
    """Lower bound f/4 - dim(ambient)/4 used in the discreteness argument."""
    amb = shape.ambient()
    point = shape.check_on_surface(point)
    f = np.dot(point[: amb.p], point[: amb.p]) / 4.0
    return f / 4.0 - amb.manifold_dim / 4.0


def potential_lower_bound_check(shape: CatalogShape, samples) -> IdentityReport:
    """Verify schrodinger_potential >= f/4 - dim/4 at every sample point."""
    samples = np.atleast_2d(np.asarray(samples, float))
    slacks = np.array([
        schrodinger_potential(shape, x) - schrodinger_potential_bound(shape, x)
        for x in samples
    ])
    min_slack = float(slacks.min())
    return IdentityReport(
        identity="schrodinger-potential-lower-bound",
        lhs=min_slack,
        rhs=0.0,
        residual=max(0.0, -min_slack),
        tol=1e-12,
        meta={"shape": shape.to_dict(), "samples": len(samples),
              "min_slack": min_slack},
    )


def gauge_forms(mesh: Mesh, shape: CatalogShape) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Unweighted form plus gauge potential: the conjugated operator route.

    Returns (K0 + V, M0) whose generalized eigenvalues match those of the
    weighted pair on the same mesh up to discretization error.
    """
    base = assemble_unweighted(mesh)
    centroids = mesh.element_centroids
    V = np.array([schrodinger_potential(shape, x) for x in centroids])
    return base.stiffness + assemble_potential_matrix(mesh, V), base.mass
