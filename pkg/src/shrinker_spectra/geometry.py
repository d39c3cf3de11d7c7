"""Exact ambient solitons and the parametric catalog of model self-shrinkers.

Everything in this module is closed form: potentials, unit normals, mean
curvature vectors, f-minimality residuals, and the parameter values at which
the parametric families (round-sphere cylinders, sphere products in the
cylinder soliton) become self-shrinkers.  All functions are pure and operate
on immutable values; discretization lives in :mod:`shrinker_spectra.meshing`.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

UNIT_TOL = 1e-12
ON_SURFACE_TOL = 1e-9
RESIDUAL_ROOT_TOL = 1e-12


class DimensionMismatch(ValueError):
    """Point or direction does not match the ambient embedding dimension."""


class OffSurface(ValueError):
    """Point does not lie on the surface (or ambient) within tolerance."""


def _as_vector(v, dim, what="point"):
    v = np.asarray(v, dtype=float)
    if v.shape != (dim,):
        raise DimensionMismatch(f"{what} must be a vector of length {dim}, got shape {v.shape}")
    return v


def _unit_vector(v, what="direction"):
    v = np.asarray(v, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > UNIT_TOL:
        raise ValueError(f"{what} must have unit length within {UNIT_TOL:g}")
    return v


# ---------------------------------------------------------------------------
# Ambient solitons
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AmbientSoliton:
    """Gaussian space R^p or the round-cylinder soliton R^p x S^k.

    The potential is f(x, y) = |x|^2 / 4 in the Euclidean-factor position x.
    Cylinder points are embedded in R^(p+k+1), Euclidean coordinates first;
    the sphere factor has the fixed radius sqrt(2(k-1)), which forces k >= 2.
    """

    kind: str
    p: int
    k: int = 0

    def __post_init__(self):
        if self.kind not in ("gaussian", "cylinder"):
            raise ValueError(f"unknown ambient kind {self.kind!r}")
        if self.p < 1:
            raise ValueError("Euclidean dimension p must be >= 1")
        if self.kind == "cylinder" and self.k < 2:
            raise ValueError("cylinder soliton requires k >= 2 so the sphere radius is positive")
        if self.kind == "gaussian" and self.k != 0:
            raise ValueError("gaussian ambient carries no sphere factor")

    @staticmethod
    def gaussian(p: int) -> "AmbientSoliton":
        return AmbientSoliton("gaussian", int(p))

    @staticmethod
    def cylinder(p: int, k: int) -> "AmbientSoliton":
        return AmbientSoliton("cylinder", int(p), int(k))

    @property
    def is_gaussian(self) -> bool:
        return self.kind == "gaussian"

    @property
    def sphere_radius(self) -> float:
        if self.is_gaussian:
            raise ValueError("gaussian ambient has no sphere factor")
        return math.sqrt(2.0 * (self.k - 1))

    @property
    def embedding_dim(self) -> int:
        return self.p if self.is_gaussian else self.p + self.k + 1

    @property
    def manifold_dim(self) -> int:
        return self.p if self.is_gaussian else self.p + self.k

    @property
    def scalar_curvature(self) -> float:
        # round sphere of radius sqrt(2(k-1)) has scalar curvature k/2
        return 0.0 if self.is_gaussian else self.k / 2.0

    def check_point(self, point):
        point = _as_vector(point, self.embedding_dim)
        if not self.is_gaussian:
            y = point[self.p:]
            if abs(np.linalg.norm(y) - self.sphere_radius) > ON_SURFACE_TOL:
                raise OffSurface(
                    f"sphere-factor coordinates have radius {np.linalg.norm(y):.12g}, "
                    f"expected {self.sphere_radius:.12g}"
                )
        return point

    def euclidean_part(self, point):
        return self.check_point(point)[: self.p]

    def to_dict(self):
        d = {"kind": self.kind, "p": self.p}
        if not self.is_gaussian:
            d["k"] = self.k
        return d

    @staticmethod
    def from_dict(d) -> "AmbientSoliton":
        return AmbientSoliton(d["kind"], int(d["p"]), int(d.get("k", 0)))


def potential(ambient: AmbientSoliton, point) -> float:
    """Soliton potential |x|^2 / 4 in the Euclidean-factor position x."""
    x = ambient.euclidean_part(point)
    return float(np.dot(x, x)) / 4.0


def potential_gradient(ambient: AmbientSoliton, point) -> np.ndarray:
    """Ambient gradient of the potential, x/2 embedded in the tangent space."""
    point = ambient.check_point(point)
    grad = np.zeros_like(point)
    grad[: ambient.p] = point[: ambient.p] / 2.0
    return grad


def bakry_emery_residual(ambient: AmbientSoliton, point, u, w) -> float:
    """(ric_f - g/2)(u, w) from the closed-form curvature blocks.

    The Gaussian factor contributes the Hessian g/2 of the potential and the
    sphere factor contributes its Ricci curvature (k-1)/(2(k-1)) g = g/2, so
    the value vanishes up to floating error for tangent directions.
    """
    point = ambient.check_point(point)
    u = _as_vector(u, ambient.embedding_dim, "direction")
    w = _as_vector(w, ambient.embedding_dim, "direction")
    p = ambient.p
    hess = 0.5 * float(np.dot(u[:p], w[:p]))
    if ambient.is_gaussian:
        ric = 0.0
        metric = float(np.dot(u, w))
    else:
        y = point[p:]
        rho = ambient.sphere_radius
        for d, name in ((u, "u"), (w, "w")):
            if abs(np.dot(d[p:], y)) > ON_SURFACE_TOL * max(1.0, np.linalg.norm(d) * rho):
                raise ValueError(f"direction {name} is not tangent to the sphere factor")
        ric = (ambient.k - 1) / rho**2 * float(np.dot(u[p:], w[p:]))
        metric = float(np.dot(u[:p], w[:p]) + np.dot(u[p:], w[p:]))
    return hess + ric - 0.5 * metric


# ---------------------------------------------------------------------------
# Catalog shapes
# ---------------------------------------------------------------------------

class CatalogShape:
    """Base class for the exact model hypersurfaces.

    Subclasses provide the hypersurface dimension ``n``, a ``variant`` name,
    the ambient soliton, an on-surface test, the unit normal, the mean
    curvature vector, and the shrinker residual H + (grad f)^perp, all in
    closed form.
    """

    def ambient(self) -> AmbientSoliton:
        raise NotImplementedError

    def surface_defect(self, point) -> float:
        """Scalar measure of distance from the surface (0 on the surface)."""
        raise NotImplementedError

    def check_on_surface(self, point):
        point = self.ambient().check_point(point)
        defect = self.surface_defect(point)
        if defect > ON_SURFACE_TOL:
            raise OffSurface(f"point is off the {self.variant} surface by {defect:.3g}")
        return point

    def unit_normal(self, point) -> np.ndarray:
        raise NotImplementedError

    def mean_curvature_vector(self, point) -> np.ndarray:
        raise NotImplementedError

    def shrinker_residual(self, point) -> np.ndarray:
        """H + projection of the potential gradient onto the normal line."""
        point = self.check_on_surface(point)
        nu = self.unit_normal(point)
        grad = potential_gradient(self.ambient(), point)
        return self.mean_curvature_vector(point) + np.dot(grad, nu) * nu

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class RoundSphere(CatalogShape):
    """Sphere S^n(center, radius) in the Gaussian ambient R^(n+1)."""

    n: int
    center: np.ndarray
    radius: float
    variant: str = field(default="round_sphere", init=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("sphere dimension n must be >= 1")
        if self.radius <= 0:
            raise ValueError("radius must be strictly positive")
        object.__setattr__(self, "center", _as_vector(self.center, self.n + 1, "center"))
        self.center.setflags(write=False)

    def ambient(self):
        return AmbientSoliton.gaussian(self.n + 1)

    def surface_defect(self, point):
        return abs(np.linalg.norm(np.asarray(point, float) - self.center) - self.radius)

    def unit_normal(self, point):
        d = np.asarray(point, float) - self.center
        return d / np.linalg.norm(d)

    def mean_curvature_vector(self, point):
        return -(self.n / self.radius) * self.unit_normal(point)

    def second_fundamental_norm_sq(self) -> float:
        return self.n / self.radius**2

    def to_dict(self):
        return {"variant": self.variant, "n": self.n,
                "radius": self.radius, "center": self.center.tolist()}


@dataclass(frozen=True)
class SphereCylinder(CatalogShape):
    """Product S^k(center, radius) x R^(n-k) in the Gaussian ambient R^(n+1).

    The sphere factor lives in the first k+1 coordinates.
    """

    n: int
    k: int
    center: np.ndarray
    radius: float
    variant: str = field(default="sphere_cylinder", init=False)

    def __post_init__(self):
        if not 1 <= self.k <= self.n - 1:
            raise ValueError("sphere-cylinder requires 1 <= k <= n-1")
        if self.radius <= 0:
            raise ValueError("radius must be strictly positive")
        object.__setattr__(self, "center", _as_vector(self.center, self.k + 1, "center"))
        self.center.setflags(write=False)

    def ambient(self):
        return AmbientSoliton.gaussian(self.n + 1)

    def surface_defect(self, point):
        xs = np.asarray(point, float)[: self.k + 1]
        return abs(np.linalg.norm(xs - self.center) - self.radius)

    def unit_normal(self, point):
        point = np.asarray(point, float)
        nu = np.zeros(self.n + 1)
        d = point[: self.k + 1] - self.center
        nu[: self.k + 1] = d / np.linalg.norm(d)
        return nu

    def mean_curvature_vector(self, point):
        return -(self.k / self.radius) * self.unit_normal(point)

    def second_fundamental_norm_sq(self) -> float:
        return self.k / self.radius**2

    def to_dict(self):
        return {"variant": self.variant, "n": self.n, "k": self.k,
                "radius": self.radius, "center": self.center.tolist()}


@dataclass(frozen=True)
class Hyperplane(CatalogShape):
    """Hyperplane through the origin with the given unit normal, in R^(n+1)."""

    n: int
    normal: np.ndarray
    variant: str = field(default="hyperplane", init=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("hyperplane dimension n must be >= 1")
        normal = _unit_vector(_as_vector(self.normal, self.n + 1, "normal"), "normal")
        object.__setattr__(self, "normal", normal)
        self.normal.setflags(write=False)

    def ambient(self):
        return AmbientSoliton.gaussian(self.n + 1)

    def surface_defect(self, point):
        return abs(float(np.dot(np.asarray(point, float), self.normal)))

    def unit_normal(self, point):
        return self.normal

    def mean_curvature_vector(self, point):
        return np.zeros(self.n + 1)

    def second_fundamental_norm_sq(self) -> float:
        return 0.0

    def to_dict(self):
        return {"variant": self.variant, "n": self.n, "normal": self.normal.tolist()}


@dataclass(frozen=True)
class SolitonSphereProduct(CatalogShape):
    """Product S^(n-k)_radius x S^k_sqrt(2(k-1)) inside the cylinder soliton.

    Only the radius of the Euclidean-factor sphere varies; the sphere factor
    radius is fixed by the ambient.  The matching ambient is
    CylinderSoliton(p = n+1-k, k).
    """

    n: int
    k: int
    radius: float
    variant: str = field(default="soliton_sphere_product", init=False)

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("cylinder-soliton shapes require k >= 2")
        if self.n - self.k < 1:
            raise ValueError("Euclidean-factor sphere must have dimension n-k >= 1")
        if self.radius <= 0:
            raise ValueError("radius must be strictly positive")

    @property
    def p(self) -> int:
        return self.n + 1 - self.k

    def ambient(self):
        return AmbientSoliton.cylinder(self.p, self.k)

    def surface_defect(self, point):
        xe = np.asarray(point, float)[: self.p]
        return abs(np.linalg.norm(xe) - self.radius)

    def unit_normal(self, point):
        point = np.asarray(point, float)
        nu = np.zeros(self.ambient().embedding_dim)
        xe = point[: self.p]
        nu[: self.p] = xe / np.linalg.norm(xe)
        return nu

    def mean_curvature_vector(self, point):
        return -((self.n - self.k) / self.radius) * self.unit_normal(point)

    def second_fundamental_norm_sq(self) -> float:
        return (self.n - self.k) / self.radius**2

    def to_dict(self):
        return {"variant": self.variant, "n": self.n, "k": self.k, "radius": self.radius}


@dataclass(frozen=True)
class SolitonHyperplaneProduct(CatalogShape):
    """Product of a hyperplane through the origin in R^(n+1-k) with the
    sphere factor of the cylinder soliton."""

    n: int
    k: int
    normal: np.ndarray
    variant: str = field(default="soliton_hyperplane_product", init=False)

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("cylinder-soliton shapes require k >= 2")
        if self.n + 1 - self.k < 1:
            raise ValueError("Euclidean factor must have dimension >= 1")
        normal = _unit_vector(_as_vector(self.normal, self.n + 1 - self.k, "normal"), "normal")
        object.__setattr__(self, "normal", normal)
        self.normal.setflags(write=False)

    @property
    def p(self) -> int:
        return self.n + 1 - self.k

    def ambient(self):
        return AmbientSoliton.cylinder(self.p, self.k)

    def surface_defect(self, point):
        xe = np.asarray(point, float)[: self.p]
        return abs(float(np.dot(xe, self.normal)))

    def unit_normal(self, point):
        nu = np.zeros(self.ambient().embedding_dim)
        nu[: self.p] = self.normal
        return nu

    def mean_curvature_vector(self, point):
        return np.zeros(self.ambient().embedding_dim)

    def second_fundamental_norm_sq(self) -> float:
        return 0.0

    def to_dict(self):
        return {"variant": self.variant, "n": self.n, "k": self.k,
                "normal": self.normal.tolist()}


def shrinker_residual(shape: CatalogShape, point) -> np.ndarray:
    """f-minimality residual H + (grad f)^perp at a surface point."""
    return shape.shrinker_residual(point)


def second_fundamental_norm(shape: CatalogShape, point=None) -> float:
    """|A|^2 from the principal curvatures of a catalog shape.

    For the soliton products only the Euclidean-factor sphere contributes a
    closed form relative to the flat embedding; that partial value is
    returned with a warning.
    """
    if point is not None:
        shape.check_on_surface(point)
    if isinstance(shape, (SolitonSphereProduct, SolitonHyperplaneProduct)):
        warnings.warn(
            "|A|^2 reported for the Euclidean-factor sphere only; the shape "
            "lives in a cylinder-soliton ambient",
            UserWarning,
            stacklevel=2,
        )
    return shape.second_fundamental_norm_sq()


_VARIANTS = {
    "round_sphere": lambda d: RoundSphere(int(d["n"]), np.asarray(d["center"], float), float(d["radius"])),
    "sphere_cylinder": lambda d: SphereCylinder(int(d["n"]), int(d["k"]), np.asarray(d["center"], float), float(d["radius"])),
    "hyperplane": lambda d: Hyperplane(int(d["n"]), np.asarray(d["normal"], float)),
    "soliton_sphere_product": lambda d: SolitonSphereProduct(int(d["n"]), int(d["k"]), float(d["radius"])),
    "soliton_hyperplane_product": lambda d: SolitonHyperplaneProduct(int(d["n"]), int(d["k"]), np.asarray(d["normal"], float)),
}


def shape_from_dict(d: dict) -> CatalogShape:
    try:
        builder = _VARIANTS[d["variant"]]
    except KeyError as exc:
        raise ValueError(f"unknown shape variant {d.get('variant')!r}") from exc
    return builder(d)


def shape_to_dict(shape: CatalogShape) -> dict:
    return shape.to_dict()


# ---------------------------------------------------------------------------
# The sphere collection swept in the intersection theorem
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SphereFamilyMember:
    """Member S^n(t p, sqrt(2n + t^2)) of the sweeping collection.

    ``t = math.inf`` is a distinct flag for the limiting hyperplane
    <x, p> = 0; it is never approximated by a large finite t.
    """

    n: int
    direction: np.ndarray
    t: float

    def __post_init__(self):
        direction = _unit_vector(np.asarray(self.direction, float), "direction")
        object.__setattr__(self, "direction", direction)
        self.direction.setflags(write=False)
        if not (self.t >= 0):
            raise ValueError("parameter t must be >= 0 (math.inf flags the hyperplane)")

    @property
    def is_hyperplane(self) -> bool:
        return math.isinf(self.t)

    @property
    def center(self) -> np.ndarray:
        if self.is_hyperplane:
            raise ValueError("the hyperplane member has no center")
        return self.t * self.direction

    @property
    def radius(self) -> float:
        if self.is_hyperplane:
            raise ValueError("the hyperplane member has no radius")
        return math.sqrt(2.0 * self.n + self.t**2)

    def defining_values(self, points) -> np.ndarray:
        """g(x) = |x - tp|^2 - (2n + t^2), or <x, p> for the hyperplane."""
        points = np.atleast_2d(np.asarray(points, float))
        if self.is_hyperplane:
            return points @ self.direction
        d = points - self.center
        return np.einsum("ij,ij->i", d, d) - self.radius**2


# ---------------------------------------------------------------------------
# Rigidity roots of the parametric families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShapeFamily:
    """Parametric family searched for f-minimal members.

    ``sphere_cylinder`` varies (center, radius) of S^k(v, r) x R^(n-k);
    ``soliton_sphere_product`` varies the Euclidean-factor radius only.
    ``fixed_radius`` restricts the sphere-cylinder family to one radius.
    ``frame`` optionally rotates the coordinate frame (an orthogonal matrix
    on the sphere-factor coordinates) used when verifying candidates.
    """

    kind: str
    n: int
    k: int
    fixed_radius: float | None = None
    frame: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("sphere_cylinder", "soliton_sphere_product"):
            raise ValueError(f"unknown family kind {self.kind!r}")
        if self.frame is not None:
            frame = np.asarray(self.frame, float)
            if frame.shape[0] != frame.shape[1]:
                raise ValueError("frame must be a square orthogonal matrix")
            if np.max(np.abs(frame.T @ frame - np.eye(frame.shape[0]))) > 1e-10:
                raise ValueError("frame must be orthogonal")
            object.__setattr__(self, "frame", frame)

    def member(self, radius: float, center=None) -> CatalogShape:
        if self.kind == "sphere_cylinder":
            center = np.zeros(self.k + 1) if center is None else np.asarray(center, float)
            return SphereCylinder(self.n, self.k, center, radius)
        return SolitonSphereProduct(self.n, self.k, radius)


def sample_surface_points(shape: CatalogShape, count: int, seed: int = 0) -> np.ndarray:
    """Deterministic random points exactly on a catalog shape."""
    rng = np.random.default_rng(seed)
    amb = shape.ambient()

    def sphere_points(dim, radius, center=None):
        z = rng.standard_normal((count, dim))
        z /= np.linalg.norm(z, axis=1)[:, None]
        pts = radius * z
        return pts if center is None else pts + center

    if isinstance(shape, RoundSphere):
        return sphere_points(shape.n + 1, shape.radius, shape.center)
    if isinstance(shape, SphereCylinder):
        pts = np.empty((count, shape.n + 1))
        pts[:, : shape.k + 1] = sphere_points(shape.k + 1, shape.radius, shape.center)
        pts[:, shape.k + 1:] = 2.0 * rng.standard_normal((count, shape.n - shape.k))
        return pts
    if isinstance(shape, Hyperplane):
        z = 2.0 * rng.standard_normal((count, shape.n + 1))
        z -= np.outer(z @ shape.normal, shape.normal)
        return z
    if isinstance(shape, SolitonSphereProduct):
        pts = np.empty((count, amb.embedding_dim))
        pts[:, : shape.p] = sphere_points(shape.p, shape.radius)
        pts[:, shape.p:] = sphere_points(shape.k + 1, amb.sphere_radius)
        return pts
    if isinstance(shape, SolitonHyperplaneProduct):
        pts = np.empty((count, amb.embedding_dim))
        z = 2.0 * rng.standard_normal((count, shape.p))
        z -= np.outer(z @ shape.normal, shape.normal)
        pts[:, : shape.p] = z
        pts[:, shape.p:] = sphere_points(shape.k + 1, amb.sphere_radius)
        return pts
    raise ValueError(f"cannot sample points on {shape.variant}")


def residual_sup_norm(shape: CatalogShape, samples: int = 64, seed: int = 0) -> float:
    """Sup norm of the shrinker residual over deterministic surface samples."""
    pts = sample_surface_points(shape, samples, seed=seed)
    return max(np.linalg.norm(shape.shrinker_residual(x)) for x in pts)


def rigidity_roots(family: ShapeFamily, samples: int = 64, seed: int = 0) -> list[dict]:
    """Parameter values at which the family's shrinker residual vanishes.

    The closed-form candidates are {center = 0, radius = sqrt(2k)} for the
    sphere-cylinder family and {radius = sqrt(2(n-k))} for the soliton sphere
    product; each returned root is re-verified by sampling the residual at
    >= 32 surface points.  An empty list is a valid outcome, e.g. for a
    sphere-cylinder family restricted to a non-root radius.
    """
    samples = max(32, samples)
    if family.kind == "sphere_cylinder":
        root_radius = math.sqrt(2.0 * family.k)
        if family.fixed_radius is not None and abs(family.fixed_radius - root_radius) > ON_SURFACE_TOL:
            return []
        root = {"center": np.zeros(family.k + 1), "radius": root_radius}
    else:
        root_radius = math.sqrt(2.0 * (family.n - family.k))
        if family.fixed_radius is not None and abs(family.fixed_radius - root_radius) > ON_SURFACE_TOL:
            return []
        root = {"radius": root_radius}

    shape = family.member(root_radius, root.get("center"))
    pts = sample_surface_points(shape, samples, seed=seed)
    if family.frame is not None:
        # rotating the frame of a centered family permutes sample points only
        dim = family.frame.shape[0]
        pts = pts.copy()
        pts[:, :dim] = pts[:, :dim] @ family.frame.T
    sup = max(np.linalg.norm(shape.shrinker_residual(x)) for x in pts)
    if sup > RESIDUAL_ROOT_TOL:
        raise AssertionError(f"closed-form root failed verification: sup residual {sup:.3g}")
    return [root]
