"""Discrete immersed hypersurfaces and the sampling of catalog shapes.

Polylines discretize curves (n = 1), triangle meshes discretize surfaces
(n = 2).  Noncompact shapes are truncated at a radius R in the noncompact
coordinate; the discarded weighted volume has an analytic bound recorded in
:class:`TruncationInfo`, and the truncation boundary is left free (natural
boundary condition), never capped.

Meshes are immutable after construction.  Reductions use numpy's fixed
left-to-right summation so repeated runs are bitwise reproducible.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import erfc, gamma

from .geometry import (
    AmbientSoliton,
    CatalogShape,
    Hyperplane,
    RoundSphere,
    SolitonHyperplaneProduct,
    SolitonSphereProduct,
    SphereCylinder,
)

DEFAULT_TRUNCATION_RADIUS = 12.0
MIN_EDGE_LENGTH = 1e-10
MIN_TRIANGLE_AREA = 1e-14
ON_SHAPE_TOL = 1e-12


class MeshError(ValueError):
    """Invalid mesh data."""


class TopologyError(MeshError):
    """Connectivity violates the manifold-mesh contract."""


class DegenerateElementError(MeshError):
    """An element is below the minimum length/area threshold."""


def sphere_volume(k: int, radius: float) -> float:
    """Surface measure of the round k-sphere of the given radius."""
    return 2.0 * math.pi ** ((k + 1) / 2.0) / gamma((k + 1) / 2.0) * radius**k


def gaussian_line_tail(radius: float) -> float:
    """2 * integral_R^inf exp(-s^2/4) ds, the two-sided weighted line tail."""
    return 2.0 * math.sqrt(math.pi) * erfc(radius / 2.0)


@dataclass(frozen=True)
class TruncationInfo:
    """Truncation radius and an analytic bound on the discarded weighted volume."""

    radius: float
    tail_mass_bound: float

    def to_dict(self):
        return {"radius": self.radius, "tail_mass_bound": self.tail_mass_bound}


@dataclass(eq=False)
class Mesh:
    """Discrete hypersurface: a polyline (n=1) or triangle mesh (n=2).

    ``vertices`` are embedded points; for meshes in the cylinder soliton with
    ``factor_only=True`` they hold Euclidean-factor coordinates only (the
    sphere factor is carried analytically, as for products over the whole
    sphere factor).  ``elements`` is an (E, 2) edge list or (T, 3) triangle
    list.  Boundary flags are derived from the connectivity.
    """

    n: int
    vertices: np.ndarray
    elements: np.ndarray
    ambient: AmbientSoliton
    truncation: TruncationInfo | None = None
    shape: CatalogShape | None = None
    factor_only: bool = False

    def __post_init__(self):
        if self.n not in (1, 2):
            raise MeshError("mesh dimension n must be 1 or 2")
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.elements = np.ascontiguousarray(self.elements, dtype=np.int64)
        if self.vertices.ndim != 2:
            raise MeshError("vertices must be an (N, D) array")
        if not np.all(np.isfinite(self.vertices)):
            raise MeshError("vertices must be finite")
        want_cols = self.n + 1
        if self.elements.ndim != 2 or self.elements.shape[1] != want_cols:
            raise MeshError(f"elements must be an (E, {want_cols}) index array")
        if self.elements.size and (self.elements.min() < 0 or self.elements.max() >= len(self.vertices)):
            raise MeshError("element indices out of range")
        expected_dim = self.ambient.p if self.factor_only else self.ambient.embedding_dim
        if self.vertices.shape[1] != expected_dim:
            raise MeshError(
                f"vertex dimension {self.vertices.shape[1]} does not match the "
                f"ambient embedding dimension {expected_dim}"
            )
        self._validate_elements()
        self._validate_topology()
        if self.truncation is not None:
            coord = self.noncompact_coordinate()
            if np.max(np.abs(coord)) > self.truncation.radius + 1e-9:
                raise MeshError("vertices exceed the truncation radius")
        self.vertices.setflags(write=False)
        self.elements.setflags(write=False)

    # -- validation -------------------------------------------------------

    def _validate_elements(self):
        v = self.vertices
        if self.n == 1:
            lengths = np.linalg.norm(v[self.elements[:, 1]] - v[self.elements[:, 0]], axis=1)
            if lengths.size and lengths.min() <= MIN_EDGE_LENGTH:
                raise DegenerateElementError(f"edge length {lengths.min():.3g} below threshold")
        else:
            if self.element_measures.size and self.element_measures.min() <= MIN_TRIANGLE_AREA:
                raise DegenerateElementError(
                    f"triangle area {self.element_measures.min():.3g} below threshold")

    def _validate_topology(self):
        if self.n == 1:
            deg = np.zeros(len(self.vertices), dtype=int)
            np.add.at(deg, self.elements.ravel(), 1)
            if deg.max(initial=0) > 2:
                raise TopologyError("polyline vertex with degree > 2")
            ends = int(np.count_nonzero(deg == 1))
            if ends not in (0, 2):
                raise TopologyError(f"open polyline must have exactly 2 endpoints, found {ends}")
            if np.any(deg == 0):
                raise TopologyError("isolated vertex in polyline")
        else:
            counts = {}
            for a, b in self.edge_array:
                counts[(a, b)] = counts.get((a, b), 0) + 1
            # edge_array stores undirected sorted pairs with multiplicity
            bad = [e for e, c in counts.items() if c > 2]
            if bad:
                raise TopologyError(f"edge shared by more than two triangles: {bad[:3]}")
            # orientation: every interior undirected edge must appear once in
            # each direction among the oriented triangle boundaries
            directed = set()
            for t in self.elements:
                for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
                    if (a, b) in directed:
                        raise TopologyError("inconsistently oriented triangles")
                    directed.add((a, b))

    # -- derived quantities -------------------------------------------------

    @cached_property
    def edge_array(self) -> np.ndarray:
        """All element edges as sorted index pairs (with multiplicity)."""
        if self.n == 1:
            return np.sort(self.elements, axis=1)
        t = self.elements
        edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.sort(edges, axis=1)

    @cached_property
    def unique_edges(self) -> tuple[np.ndarray, np.ndarray]:
        edges, counts = np.unique(self.edge_array, axis=0, return_counts=True)
        return edges, counts

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(len(self.vertices), dtype=bool)
        if self.n == 1:
            deg = np.zeros(len(self.vertices), dtype=int)
            np.add.at(deg, self.elements.ravel(), 1)
            mask[deg == 1] = True
        else:
            edges, counts = self.unique_edges
            boundary_edges = edges[counts == 1]
            mask[boundary_edges.ravel()] = True
        mask.setflags(write=False)
        return mask

    @property
    def interior_mask(self) -> np.ndarray:
        return ~self.boundary_mask

    @property
    def is_closed(self) -> bool:
        return not bool(self.boundary_mask.any())

    @cached_property
    def euler_characteristic(self) -> int:
        V = len(self.vertices)
        if self.n == 1:
            return V - len(self.elements)
        E = len(self.unique_edges[0])
        return V - E + len(self.elements)

    @cached_property
    def element_measures(self) -> np.ndarray:
        """Edge lengths (n=1) or triangle areas (n=2)."""
        v = self.vertices
        if self.n == 1:
            return np.linalg.norm(v[self.elements[:, 1]] - v[self.elements[:, 0]], axis=1)
        a, b, c = (v[self.elements[:, i]] for i in range(3))
        e1, e2 = b - a, c - a
        g11 = np.einsum("ij,ij->i", e1, e1)
        g22 = np.einsum("ij,ij->i", e2, e2)
        g12 = np.einsum("ij,ij->i", e1, e2)
        return 0.5 * np.sqrt(np.maximum(g11 * g22 - g12**2, 0.0))

    @cached_property
    def element_centroids(self) -> np.ndarray:
        return self.vertices[self.elements].mean(axis=1)

    @cached_property
    def max_element_size(self) -> float:
        v = self.vertices
        if self.n == 1:
            return float(self.element_measures.max())
        lengths = np.linalg.norm(
            v[self.edge_array[:, 1]] - v[self.edge_array[:, 0]], axis=1)
        return float(lengths.max())

    @cached_property
    def lumped_vertex_areas(self) -> np.ndarray:
        """Unweighted lumped measure: 1/(n+1) of incident element measures."""
        area = np.zeros(len(self.vertices))
        share = self.element_measures / (self.n + 1)
        for col in range(self.n + 1):
            np.add.at(area, self.elements[:, col], share)
        area.setflags(write=False)
        return area

    @cached_property
    def dual_vertex_areas(self) -> np.ndarray:
        """Mixed Voronoi dual areas (equal to the lumped measure for n=1).

        The circumcentric dual is the correct normalization for the discrete
        mean-curvature vector; barycentric lumping stalls at irregular
        vertices (e.g. the twelve valence-5 vertices of an icosphere).
        """
        if self.n == 1:
            return self.lumped_vertex_areas
        v = self.vertices
        tri = self.elements
        a, b, c = v[tri[:, 0]], v[tri[:, 1]], v[tri[:, 2]]
        areas = self.element_measures

        def cot_at(p, q, r):
            u, w = q - p, r - p
            dot = np.einsum("ij,ij->i", u, w)
            nu2 = np.einsum("ij,ij->i", u, u)
            nw2 = np.einsum("ij,ij->i", w, w)
            cross = np.sqrt(np.maximum(nu2 * nw2 - dot**2, 1e-300))
            return dot / cross

        cota, cotb, cotc = cot_at(a, b, c), cot_at(b, c, a), cot_at(c, a, b)
        lab2 = np.einsum("ij,ij->i", b - a, b - a)
        lbc2 = np.einsum("ij,ij->i", c - b, c - b)
        lca2 = np.einsum("ij,ij->i", a - c, a - c)
        any_obtuse = (cota < 0) | (cotb < 0) | (cotc < 0)
        va = np.where(~any_obtuse, (lab2 * cotc + lca2 * cotb) / 8.0,
                      np.where(cota < 0, areas / 2.0, areas / 4.0))
        vb = np.where(~any_obtuse, (lab2 * cotc + lbc2 * cota) / 8.0,
                      np.where(cotb < 0, areas / 2.0, areas / 4.0))
        vc = np.where(~any_obtuse, (lca2 * cotb + lbc2 * cota) / 8.0,
                      np.where(cotc < 0, areas / 2.0, areas / 4.0))
        area = np.zeros(len(v))
        np.add.at(area, tri[:, 0], va)
        np.add.at(area, tri[:, 1], vb)
        np.add.at(area, tri[:, 2], vc)
        area.setflags(write=False)
        return area

    def euclidean_coordinates(self) -> np.ndarray:
        """Euclidean-factor coordinates of the vertices."""
        if self.ambient.is_gaussian and not self.factor_only:
            return self.vertices
        return self.vertices[:, : self.ambient.p]

    def noncompact_coordinate(self) -> np.ndarray:
        """Radius in the noncompact directions, used for truncation checks."""
        if self.shape is not None and isinstance(self.shape, SphereCylinder):
            return np.linalg.norm(self.vertices[:, self.shape.k + 1:], axis=1)
        return np.linalg.norm(self.euclidean_coordinates(), axis=1)

    @cached_property
    def potential_values(self) -> np.ndarray:
        """Soliton potential |x|^2/4 at the vertices."""
        x = self.euclidean_coordinates()
        return np.einsum("ij,ij->i", x, x) / 4.0

    @property
    def weight_scale(self) -> float:
        """Sphere-factor volume carried analytically by factor-only meshes."""
        if self.factor_only:
            return sphere_volume(self.ambient.k, self.ambient.sphere_radius)
        return 1.0

    @cached_property
    def vertex_normals(self) -> np.ndarray:
        """Unit normals per vertex, within the ambient tangent space.

        n=1: the edge tangent rotated by -90 degrees; n=2 in R^3: normalized
        area-weighted triangle normals.  For surfaces embedded with a sphere
        factor (R^4), the normal is the ambient-tangent direction orthogonal
        to the local tangent plane, recovered from an SVD of incident edges.
        Orientation is aligned with the exact shape normal when known.
        """
        v = self.vertices
        if self.n == 1:
            nxt, prv = self._polyline_neighbors()
            tangents = np.where(nxt[:, None] >= 0, v[nxt], v) - np.where(prv[:, None] >= 0, v[prv], v)
            if v.shape[1] != 2:
                raise MeshError("polyline normals require a 2d embedding")
            normals = np.stack([tangents[:, 1], -tangents[:, 0]], axis=1)
            normals /= np.linalg.norm(normals, axis=1)[:, None]
        elif v.shape[1] == 3:
            a, b, c = (v[self.elements[:, i]] for i in range(3))
            tri_n = np.cross(b - a, c - a)
            normals = np.zeros_like(v)
            for col in range(3):
                np.add.at(normals, self.elements[:, col], tri_n)
            normals /= np.linalg.norm(normals, axis=1)[:, None]
        else:
            normals = self._tangent_complement_normals()
        if self.shape is not None:
            exact = np.array([self.shape.unit_normal(x) for x in v])
            if self.factor_only:
                exact = exact[:, : self.ambient.p]
            flip = np.sign(np.einsum("ij,ij->i", normals, exact))
            flip[flip == 0] = 1.0
            normals *= flip[:, None]
        normals.setflags(write=False)
        return normals

    def _polyline_neighbors(self):
        nxt = np.full(len(self.vertices), -1, dtype=np.int64)
        prv = np.full(len(self.vertices), -1, dtype=np.int64)
        for a, b in self.elements:
            nxt[a] = b
            prv[b] = a
        return nxt, prv

    def _tangent_complement_normals(self):
        # cylinder-soliton embedding: ambient tangent at x = R^p + T_y S^k
        p = self.ambient.p
        v = self.vertices
        rho = self.ambient.sphere_radius
        neighbors = [[] for _ in range(len(v))]
        for t in self.elements:
            for i in range(3):
                neighbors[t[i]].extend(t[j] for j in range(3) if j != i)
        normals = np.zeros_like(v)
        for i, nbrs in enumerate(neighbors):
            edges = v[sorted(set(nbrs))] - v[i]
            y = v[i, p:] / rho
            proj = np.eye(v.shape[1])
            proj[p:, p:] -= np.outer(y, y)
            edges = edges @ proj.T
            # least-singular right vector orthogonal to the tangent plane,
            # restricted to the 3d ambient tangent space
            basis = _ambient_tangent_basis(p, v.shape[1], y)
            _, s, vt = np.linalg.svd(edges @ basis)
            normals[i] = basis @ vt[-1]
        normals /= np.linalg.norm(normals, axis=1)[:, None]
        return normals

    def to_polyline_dict(self):
        if self.n != 1:
            raise MeshError("only polylines serialize to the polyline schema")
        return {"n": 1, "closed": self.is_closed, "vertices": self.vertices.tolist()}


def _ambient_tangent_basis(p, dim, y_unit):
    """Orthonormal basis of R^p + (y)^perp inside R^(p+k+1)."""
    full = np.eye(dim)
    y_emb = np.zeros(dim)
    y_emb[p:] = y_unit
    cols = full - np.outer(y_emb, y_emb) @ full
    q, r = np.linalg.qr(cols)
    keep = np.abs(np.diag(r)) > 1e-12
    return q[:, keep]


# ---------------------------------------------------------------------------
# Shape sampling
# ---------------------------------------------------------------------------

def _circle_polyline(radius, center, count, shape, ambient=None, factor_only=False):
    theta = 2.0 * math.pi * np.arange(count) / count
    pts = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)
    pts += np.asarray(center, float)
    edges = np.stack([np.arange(count), (np.arange(count) + 1) % count], axis=1)
    return Mesh(1, pts, edges, ambient or AmbientSoliton.gaussian(2),
                shape=shape, factor_only=factor_only)


def _icosahedron():
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], float)
    verts /= np.linalg.norm(verts[0])
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], np.int64)
    return verts, faces


def icosphere(subdivisions: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit icosphere: 20 * 4^L faces, vertices projected to the sphere."""
    verts, faces = _icosahedron()
    verts = list(map(np.asarray, verts))
    for _ in range(subdivisions):
        cache = {}

        def midpoint(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in cache:
                m = verts[i] + verts[j]
                m /= np.linalg.norm(m)
                verts.append(m)
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
        faces = np.array(new_faces, np.int64)
    return np.array(verts), faces


def _sphere_mesh(shape, radius, center, resolution, ambient=None, factor_only=False,
                 embed=None):
    level = 0
    while 20 * 4**level < resolution:
        level += 1
    verts, faces = icosphere(level)
    verts = radius * verts
    if center is not None:
        verts = verts + np.asarray(center, float)
    if embed is not None:
        verts = embed(verts)
    return Mesh(2, verts, faces, ambient or AmbientSoliton.gaussian(3),
                shape=shape, factor_only=factor_only)


def _axial_nodes(radius, spacing):
    m = max(1, round(radius / spacing))
    return np.linspace(-radius, radius, 2 * m + 1)


def _cylinder_mesh(shape: SphereCylinder, resolution, trunc_radius):
    r = shape.radius
    if isinstance(resolution, tuple):
        n_theta, n_axial = resolution
        t_nodes = np.linspace(-trunc_radius, trunc_radius, n_axial)
        if n_axial % 2 == 0:
            t_nodes = np.linspace(-trunc_radius, trunc_radius, n_axial + 1)
    else:
        n_theta = max(16, round(math.sqrt(resolution * math.pi * r / (2.0 * trunc_radius))))
        h = 2.0 * math.pi * r / n_theta
        t_nodes = _axial_nodes(trunc_radius, h)
    n_t = len(t_nodes)
    theta = 2.0 * math.pi * np.arange(n_theta) / n_theta
    circ = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    verts = np.empty((n_theta * n_t, 3))
    for j, t in enumerate(t_nodes):
        sl = slice(j * n_theta, (j + 1) * n_theta)
        verts[sl, :2] = circ + np.asarray(shape.center, float)
        verts[sl, 2] = t
    tris = []
    for j in range(n_t - 1):
        base0, base1 = j * n_theta, (j + 1) * n_theta
        for i in range(n_theta):
            i2 = (i + 1) % n_theta
            # outward orientation for the standard circle parametrization
            tris.append([base0 + i, base0 + i2, base1 + i2])
            tris.append([base0 + i, base1 + i2, base1 + i])
    tail = 2.0 * math.pi * r * math.exp(-r**2 / 4.0) * gaussian_line_tail(trunc_radius)
    return Mesh(2, verts, np.array(tris, np.int64), AmbientSoliton.gaussian(3),
                truncation=TruncationInfo(trunc_radius, tail), shape=shape)


def _plane_basis(normal):
    dim = len(normal)
    idx = int(np.argmin(np.abs(normal)))
    e = np.zeros(dim)
    e[idx] = 1.0
    u = e - np.dot(e, normal) * normal
    u /= np.linalg.norm(u)
    if dim == 2:
        return u[None, :]
    w = np.cross(normal, u)
    return np.stack([u, w])


def _line_mesh(shape, trunc_radius, resolution, ambient=None, factor_only=False):
    basis = _plane_basis(shape.normal)[0]
    count = max(16, int(resolution))
    if count % 2 == 1:
        count += 1
    s = np.linspace(-trunc_radius, trunc_radius, count + 1)
    verts = s[:, None] * basis[None, :]
    edges = np.stack([np.arange(count), np.arange(1, count + 1)], axis=1)
    scale = sphere_volume(shape.k, shape.ambient().sphere_radius) if factor_only else 1.0
    tail = scale * gaussian_line_tail(trunc_radius)
    return Mesh(1, verts, edges, ambient or AmbientSoliton.gaussian(2),
                truncation=TruncationInfo(trunc_radius, tail),
                shape=shape, factor_only=factor_only)


def _disc_mesh(shape: Hyperplane, trunc_radius, resolution):
    rings = max(3, round(math.sqrt(resolution / 6.0)))
    h = trunc_radius / rings
    basis = _plane_basis(shape.normal)
    verts = [np.zeros(3)]
    ring_ids = [[0]]
    ring_angles = [[0.0]]
    for j in range(1, rings + 1):
        m = 6 * j
        ang = 2.0 * math.pi * np.arange(m) / m
        ring_ids.append(list(range(len(verts), len(verts) + m)))
        ring_angles.append(ang.tolist())
        pts = (j * h) * (np.cos(ang)[:, None] * basis[0] + np.sin(ang)[:, None] * basis[1])
        verts.extend(pts)
    tris = []
    inner = ring_ids[1]
    for i in range(6):
        tris.append([0, inner[i], inner[(i + 1) % 6]])
    for j in range(1, rings):
        tris.extend(_stitch_rings(ring_ids[j], ring_angles[j], ring_ids[j + 1], ring_angles[j + 1]))
    tail = 4.0 * math.pi * math.exp(-trunc_radius**2 / 4.0)
    return Mesh(2, np.array(verts), np.array(tris, np.int64), AmbientSoliton.gaussian(3),
                truncation=TruncationInfo(trunc_radius, tail), shape=shape)


def _stitch_rings(inner, inner_ang, outer, outer_ang):
    """Triangulate the annulus between two concentric, angle-sorted rings."""
    na, nb = len(inner), len(outer)

    def ia(idx):
        return inner_ang[idx % na] + 2.0 * math.pi * (idx // na)

    def oa(idx):
        return outer_ang[idx % nb] + 2.0 * math.pi * (idx // nb)

    tris = []
    i = j = 0
    while i < na or j < nb:
        if i < na and (j >= nb or ia(i + 1) <= oa(j + 1)):
            tris.append([inner[i % na], outer[j % nb], inner[(i + 1) % na]])
            i += 1
        else:
            tris.append([inner[i % na], outer[j % nb], outer[(j + 1) % nb]])
            j += 1
    return tris


def sample_shape(shape: CatalogShape, resolution, truncation=None) -> Mesh:
    """Sample a catalog shape into a mesh with the target element count.

    ``truncation`` is the truncation radius for noncompact shapes (default
    12, where the weighted tail is below double-precision noise).  Product
    shapes over the whole sphere factor of the cylinder soliton are sampled
    on their Euclidean factor with ``factor_only=True``.
    """
    res_scalar = resolution[0] * resolution[1] if isinstance(resolution, tuple) else resolution
    if res_scalar < 16:
        raise MeshError("resolution must be at least 16 elements")

    if isinstance(shape, RoundSphere):
        if shape.n == 1:
            return _circle_polyline(shape.radius, shape.center, int(resolution), shape)
        if shape.n == 2:
            return _sphere_mesh(shape, shape.radius, shape.center, int(resolution))
        raise MeshError(f"cannot mesh a round sphere of dimension n={shape.n}")

    if isinstance(shape, SphereCylinder):
        if shape.n != 2 or shape.k != 1:
            raise MeshError("only the n=2, k=1 sphere-cylinder is meshable")
        R = DEFAULT_TRUNCATION_RADIUS if truncation is None else float(truncation)
        return _cylinder_mesh(shape, resolution, R)

    if isinstance(shape, Hyperplane):
        R = DEFAULT_TRUNCATION_RADIUS if truncation is None else float(truncation)
        if shape.n == 1:
            return _line_mesh(shape, R, resolution)
        if shape.n == 2:
            return _disc_mesh(shape, R, resolution)
        raise MeshError(f"cannot mesh a hyperplane of dimension n={shape.n}")

    if isinstance(shape, SolitonSphereProduct):
        amb = shape.ambient()
        if shape.n - shape.k == 1:
            return _circle_polyline(shape.radius, np.zeros(2), int(resolution), shape,
                                    ambient=amb, factor_only=True)
        if shape.n - shape.k == 2:
            return _sphere_mesh(shape, shape.radius, None, int(resolution),
                                ambient=amb, factor_only=True)
        raise MeshError("soliton sphere product meshable only for n-k in {1, 2}")

    if isinstance(shape, SolitonHyperplaneProduct):
        amb = shape.ambient()
        if shape.p == 2:
            R = DEFAULT_TRUNCATION_RADIUS if truncation is None else float(truncation)
            return _line_mesh(shape, R, resolution, ambient=amb, factor_only=True)
        if shape.p == 1 and shape.k == 2:
            def embed(verts):
                out = np.zeros((len(verts), 4))
                out[:, 1:] = verts
                return out
            return _sphere_mesh(shape, amb.sphere_radius, None, int(resolution),
                                ambient=amb, embed=embed)
        raise MeshError("soliton hyperplane product meshable only for p in {1, 2} (k=2 when p=1)")

    raise MeshError(f"unsupported shape {shape.variant!r}")


# ---------------------------------------------------------------------------
# Vertex fields and discrete differential quantities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VertexField:
    """Scalar values attached to the vertices of a mesh."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.mesh.vertices),):
            raise MeshError("field length must equal the vertex count")
        if not np.all(np.isfinite(values)):
            raise MeshError("field values must be finite")
        object.__setattr__(self, "values", values)
        self.values.setflags(write=False)


def _unweighted_stiffness_apply(mesh: Mesh, columns: np.ndarray) -> np.ndarray:
    """Apply the unweighted P1 stiffness matrix to each column."""
    v = mesh.vertices
    out = np.zeros_like(columns)
    if mesh.n == 1:
        i, j = mesh.elements[:, 0], mesh.elements[:, 1]
        inv_len = 1.0 / mesh.element_measures
        diff = (columns[i] - columns[j]) * inv_len[:, None]
        np.add.at(out, i, diff)
        np.add.at(out, j, -diff)
    else:
        tri = mesh.elements
        a, b, c = v[tri[:, 0]], v[tri[:, 1]], v[tri[:, 2]]
        areas = mesh.element_measures
        edges = (c - b, a - c, b - a)
        coef = 1.0 / (4.0 * areas)
        for l in range(3):
            for m in range(l + 1, 3):
                w = coef * np.einsum("ij,ij->i", edges[l], edges[m])
                il, im = tri[:, l], tri[:, m]
                contrib = w[:, None] * (columns[il] - columns[im])
                np.add.at(out, im, contrib)
                np.add.at(out, il, -contrib)
    return out


def discrete_mean_curvature(mesh: Mesh) -> np.ndarray:
    """Mean curvature vectors at interior vertices (zero rows on the boundary).

    Computed as minus the unweighted stiffness applied to the coordinate
    functions, divided by the mixed Voronoi dual area; for meshes embedded
    with a sphere factor the result is projected onto the ambient tangent
    space.
    """
    vec = -_unweighted_stiffness_apply(mesh, mesh.vertices) / mesh.dual_vertex_areas[:, None]
    if not mesh.ambient.is_gaussian and not mesh.factor_only:
        p = mesh.ambient.p
        y = mesh.vertices[:, p:]
        y_unit = y / np.linalg.norm(y, axis=1)[:, None]
        radial = np.einsum("ij,ij->i", vec[:, p:], y_unit)
        vec[:, p:] -= radial[:, None] * y_unit
    vec[mesh.boundary_mask] = 0.0
    return vec


def fminimal_residual(mesh: Mesh) -> tuple[VertexField, float, float]:
    """Discrete f-minimality defect |H + <grad f, nu> nu| per interior vertex.

    Returns the magnitude field (zero at boundary vertices), its sup norm
    over interior vertices, and the weighted L2 norm against the lumped
    e^{-f} measure.
    """
    if not mesh.interior_mask.any():
        raise MeshError("mesh has no interior vertices")
    H = discrete_mean_curvature(mesh)
    nu = mesh.vertex_normals
    x = mesh.euclidean_coordinates()
    grad_f_dot_nu = 0.5 * np.einsum("ij,ij->i", x, nu[:, : x.shape[1]])
    res = H + grad_f_dot_nu[:, None] * nu
    mags = np.linalg.norm(res, axis=1)
    mags[mesh.boundary_mask] = 0.0
    interior = mesh.interior_mask
    sup = float(mags[interior].max())
    mu = weighted_vertex_measure(mesh).values
    weighted_l2 = float(math.sqrt(np.sum(mags[interior] ** 2 * mu[interior])))
    return VertexField(mesh, mags), sup, weighted_l2


def weighted_vertex_measure(mesh: Mesh) -> VertexField:
    """Lumped weighted measure: vertex area share times e^{-f(vertex)}.

    Factor-only meshes include the analytic sphere-factor volume so the
    total approximates the full weighted volume of the product.
    """
    mu = mesh.lumped_vertex_areas * np.exp(-mesh.potential_values) * mesh.weight_scale
    return VertexField(mesh, mu)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def write_off(mesh: Mesh, path):
    """Write a triangle mesh in ASCII OFF with exact float round-trip."""
    if mesh.n != 2 or mesh.vertices.shape[1] != 3:
        raise MeshError("OFF export requires a triangle mesh embedded in R^3")
    lines = ["OFF", f"{len(mesh.vertices)} {len(mesh.elements)} 0"]
    lines.extend(" ".join(repr(float(c)) for c in v) for v in mesh.vertices)
    lines.extend(f"3 {a} {b} {c}" for a, b, c in mesh.elements)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_off(path) -> Mesh:
    """Read an ASCII OFF triangle mesh (Gaussian ambient R^3)."""
    with open(path) as fh:
        tokens = []
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise MeshError("not an OFF file")
    try:
        nv, nf = int(tokens[1]), int(tokens[2])
        pos = 4
        verts = np.array(tokens[pos:pos + 3 * nv], dtype=float).reshape(nv, 3)
        pos += 3 * nv
        faces = []
        for _ in range(nf):
            cnt = int(tokens[pos])
            if cnt != 3:
                raise MeshError("only triangle faces are supported")
            faces.append([int(t) for t in tokens[pos + 1:pos + 4]])
            pos += cnt + 1
    except (IndexError, ValueError) as exc:
        raise MeshError(f"malformed OFF file: {exc}") from exc
    return Mesh(2, verts, np.array(faces, np.int64), AmbientSoliton.gaussian(3))


def write_polyline_json(mesh: Mesh, path):
    with open(path, "w") as fh:
        json.dump(mesh.to_polyline_dict(), fh)
        fh.write("\n")


def read_polyline_json(path) -> Mesh:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MeshError(f"malformed polyline JSON: {exc}") from exc
    if data.get("n") != 1 or "vertices" not in data:
        raise MeshError("polyline JSON must carry n=1 and a vertex list")
    verts = np.asarray(data["vertices"], dtype=float)
    count = len(verts)
    if data.get("closed", False):
        edges = np.stack([np.arange(count), (np.arange(count) + 1) % count], axis=1)
    else:
        edges = np.stack([np.arange(count - 1), np.arange(1, count)], axis=1)
    return Mesh(1, verts, edges, AmbientSoliton.gaussian(verts.shape[1]))
