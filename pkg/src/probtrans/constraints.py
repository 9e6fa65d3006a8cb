"""Constraint sets K: sampling, distance to K, projections, and geodesics.

Each set is a small immutable object.  Capabilities that only some sets
have are exposed as ``project`` (``None`` when no projection exists) and
``geometry`` (``None`` unless K carries exp/log maps).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .errors import CapabilityError, DomainError, GeodesicBallError

CURVE_DOMAIN = (-10.0, 10.0)
DENSE_SAMPLES = 100_000
ANALYTIC_TOL = 1e-9


def _as_points(y, dim):
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != dim or y.ndim not in (1, 2):
        raise DomainError(f"expected points of dimension {dim}, got shape {y.shape}")
    return y


# -- projections -------------------------------------------------------------

def box_project(y):
    """Clamp each coordinate into [-1, 1]."""
    return np.clip(np.asarray(y, dtype=float), -1.0, 1.0)


def disk_project(y):
    """Metric projection onto the closed unit ball, ``y / max(1, |y|)``."""
    y = np.asarray(y, dtype=float)
    norm = np.linalg.norm(y, axis=-1, keepdims=True)
    return y / np.maximum(1.0, norm)


# -- geodesic structure ------------------------------------------------------

class EuclideanGeometry:
    """Flat geodesics: straight lines."""

    name = "euclidean"

    def dist(self, u, v):
        return np.linalg.norm(np.asarray(v, float) - np.asarray(u, float), axis=-1)

    def log(self, base, y):
        return np.asarray(y, float) - np.asarray(base, float)

    def exp(self, base, v):
        return np.asarray(base, float) + np.asarray(v, float)

    def project(self, y):
        return np.asarray(y, float)

    def check_spread(self, atoms):
        pass


class SphereGeometry:
    """Great-circle geodesics on the unit sphere (any ambient dimension)."""

    name = "sphere"

    def dist(self, u, v):
        c = np.sum(np.asarray(u, float) * np.asarray(v, float), axis=-1)
        return np.arccos(np.clip(c, -1.0, 1.0))

    def log(self, base, y):
        base = np.asarray(base, float)
        y = np.asarray(y, float)
        c = np.clip(np.sum(base * y, axis=-1, keepdims=True), -1.0, 1.0)
        theta = np.arccos(c)
        if np.any(np.pi - theta < 1e-12):
            raise GeodesicBallError("log map of an antipodal point is not unique")
        # theta / sin(theta) -> 1 as theta -> 0
        ratio = np.where(theta < 1e-8, 1.0 + theta**2 / 6.0, theta / np.sin(np.maximum(theta, 1e-300)))
        return ratio * (y - c * base)

    def exp(self, base, v):
        base = np.asarray(base, float)
        v = np.asarray(v, float)
        norm = np.linalg.norm(v, axis=-1, keepdims=True)
        sinc = np.where(norm < 1e-8, 1.0 - norm**2 / 6.0, np.sin(norm) / np.maximum(norm, 1e-300))
        out = np.cos(norm) * base + sinc * v
        return out / np.linalg.norm(out, axis=-1, keepdims=True)

    def project(self, y):
        y = np.asarray(y, float)
        return y / np.linalg.norm(y, axis=-1, keepdims=True)

    def check_spread(self, atoms):
        """Reject atom sets with a pairwise distance above pi/2."""
        atoms = np.asarray(atoms, float)
        d = self.dist(atoms[:, None, :], atoms[None, :, :])
        if np.max(d) > np.pi / 2 + 1e-12:
            raise GeodesicBallError(
                f"atoms span a geodesic distance of {np.max(d):.4f} > pi/2; Frechet mean not guaranteed unique"
            )


def sphere_dist(u, v):
    return SphereGeometry().dist(u, v)


def sphere_log(base, y):
    return SphereGeometry().log(base, y)


def sphere_exp(base, v):
    return SphereGeometry().exp(base, v)


# -- constraint sets ---------------------------------------------------------

class ConstraintSet:
    """Base class; subclasses fill in ``sample`` and ``distance``."""

    kind: str = ""
    dim: int = 0
    tolerance: float = ANALYTIC_TOL
    geometry = None
    project = None

    def sample(self, rng, count: int) -> np.ndarray:
        raise NotImplementedError

    def distance(self, y):
        raise NotImplementedError

    def contains(self, y, tol=None):
        tol = self.tolerance if tol is None else tol
        return np.asarray(self.distance(y)) <= tol

    def require_geometry(self):
        if self.geometry is None:
            raise CapabilityError(f"{self.kind} set has no geodesic structure")
        return self.geometry

    def to_dict(self) -> dict:
        return {"kind": self.kind}


class BoxSet(ConstraintSet):
    """The square [-1, 1]^2."""

    kind = "square"
    dim = 2
    geometry = EuclideanGeometry()

    def sample(self, rng, count):
        # particles: uniform on [-2, 2]^2 pushed onto K
        return box_project(rng.uniform(-2.0, 2.0, size=(count, 2)))

    def distance(self, y):
        y = _as_points(y, 2)
        return np.linalg.norm(y - box_project(y), axis=-1)

    def project(self, y):
        return box_project(_as_points(y, 2))


class DiskSet(ConstraintSet):
    """The closed unit disk."""

    kind = "disk"
    dim = 2
    geometry = EuclideanGeometry()

    def sample(self, rng, count):
        return disk_project(rng.uniform(-2.0, 2.0, size=(count, 2)))

    def distance(self, y):
        y = _as_points(y, 2)
        return np.maximum(0.0, np.linalg.norm(y, axis=-1) - 1.0)

    def project(self, y):
        return disk_project(_as_points(y, 2))


class SphereSet(ConstraintSet):
    """The unit sphere S^2 in R^3."""

    kind = "sphere"
    dim = 3
    geometry = SphereGeometry()

    def sample(self, rng, count):
        g = rng.standard_normal((count, 3))
        return g / np.linalg.norm(g, axis=1, keepdims=True)

    def distance(self, y):
        y = _as_points(y, 3)
        return np.abs(np.linalg.norm(y, axis=-1) - 1.0)

    def project(self, y):
        y = _as_points(y, 3)
        return y / np.linalg.norm(y, axis=-1, keepdims=True)


@dataclass(frozen=True)
class CurveSpec:
    """A planar curve t -> rho(t) on the parameter interval [-10, 10].

    ``kind`` is ``"rose"`` for ``(2 cos(t)^2 + 1) (cos(t/3), sin(t/3))`` or
    ``"variety"`` for a random homeomorphism applied to
    ``sinc(t + 1) (cos(t/2), sin(t/2))``.  The homeomorphism is a stack of
    ``z -> tanh(M z)`` layers with invertible ``M``.
    """

    kind: str
    layers: tuple = ()

    def __post_init__(self):
        if self.kind not in ("rose", "variety"):
            raise DomainError(f"unknown curve kind {self.kind!r}")
        for m in self.layers:
            if abs(np.linalg.det(np.asarray(m))) < 0.1:
                raise DomainError("homeomorphism matrix is too close to singular")

    @classmethod
    def random_variety(cls, rng, n_layers=3, min_det=0.1):
        layers = []
        while len(layers) < n_layers:
            m = rng.standard_normal((2, 2))
            if abs(np.linalg.det(m)) >= min_det:
                layers.append(tuple(map(tuple, m)))
        return cls("variety", tuple(layers))

    def homeomorphism(self, z):
        z = np.asarray(z, float)
        for m in self.layers:
            z = np.tanh(z @ np.asarray(m).T)
        return z

    def inverse_homeomorphism(self, w):
        w = np.asarray(w, float)
        for m in reversed(self.layers):
            w = np.arctanh(w) @ np.linalg.inv(np.asarray(m)).T
        return w

    def base_curve(self, t):
        t = np.asarray(t, float)
        if self.kind == "rose":
            r = 2.0 * np.cos(t) ** 2 + 1.0
            return np.stack([r * np.cos(t / 3.0), r * np.sin(t / 3.0)], axis=-1)
        # np.sinc is normalized: sinc(x) = sin(pi x) / (pi x)
        r = np.sinc((t + 1.0) / np.pi)
        return np.stack([r * np.cos(t / 2.0), r * np.sin(t / 2.0)], axis=-1)

    def __call__(self, t):
        t = np.asarray(t, float)
        lo, hi = CURVE_DOMAIN
        if np.any(t < lo) or np.any(t > hi) or np.any(~np.isfinite(t)):
            raise DomainError(f"curve parameter outside [{lo}, {hi}]")
        return self.homeomorphism(self.base_curve(t))

    def to_dict(self):
        return {"kind": self.kind, "layers": [[list(r) for r in m] for m in self.layers]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], tuple(tuple(tuple(float(v) for v in r) for r in m) for m in d.get("layers", [])))


def curve_eval(spec: CurveSpec, t):
    return spec(t)


def _golden_section(f, lo, hi, iters=60):
    """Vectorised golden-section minimisation of ``f`` over ``[lo, hi]``."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = np.array(lo, float), np.array(hi, float)
    for _ in range(iters):
        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
        left = f(c) < f(d)
        a, b = np.where(left, a, c), np.where(left, d, b)
    t = (a + b) / 2.0
    return t, f(t)


class CurveSet(ConstraintSet):
    """Image of a :class:`CurveSpec` over [-10, 10].

    Distances come from a dense parameter grid, refined by golden-section
    search on the bracketing grid cells.
    """

    dim = 2

    def __init__(self, spec: CurveSpec, n_dense: int = DENSE_SAMPLES):
        self.spec = spec
        self.kind = spec.kind
        self.n_dense = n_dense

    @cached_property
    def _dense(self):
        t = np.linspace(*CURVE_DOMAIN, self.n_dense)
        pts = self.spec(t)
        return t, pts, cKDTree(pts)

    @cached_property
    def resolution(self) -> float:
        """Largest gap between consecutive dense samples."""
        _, pts, _ = self._dense
        return float(np.max(np.linalg.norm(np.diff(pts, axis=0), axis=1)))

    @property
    def tolerance(self):
        return 2.0 * self.resolution

    def sample(self, rng, count):
        return self.spec(rng.uniform(*CURVE_DOMAIN, size=count))

    def nearest_parameter(self, y):
        y = _as_points(y, 2)
        t, _, tree = self._dense
        _, idx = tree.query(y)
        step = t[1] - t[0]
        lo = np.maximum(t[idx] - step, CURVE_DOMAIN[0])
        hi = np.minimum(t[idx] + step, CURVE_DOMAIN[1])
        target = y if y.ndim == 2 else y[None, :]
        lo, hi = np.atleast_1d(lo), np.atleast_1d(hi)
        best_t, best_d = _golden_section(
            lambda s: np.linalg.norm(self.spec.homeomorphism(self.spec.base_curve(s)) - target, axis=-1), lo, hi
        )
        return (best_t, best_d) if y.ndim == 2 else (best_t[0], best_d[0])

    def distance(self, y):
        y = _as_points(y, 2)
        _, _, tree = self._dense
        coarse, _ = tree.query(y)
        _, fine = self.nearest_parameter(y)
        return np.minimum(coarse, fine)

    def to_dict(self):
        return {"kind": self.kind, "spec": self.spec.to_dict()}


class SampleBackedSet(ConstraintSet):
    """A set whose sampler draws from stored members (e.g. training outputs).

    Distances and geometry are delegated to ``base``.
    """

    def __init__(self, base: ConstraintSet, points):
        pts = np.asarray(points, float)
        if pts.ndim != 2 or pts.shape[1] != base.dim or len(pts) == 0:
            raise DomainError("sample-backed set needs a non-empty (count, dim) array")
        self.base = base
        self.points = pts
        self.kind = base.kind
        self.dim = base.dim
        self.geometry = base.geometry
        self.project = base.project

    @property
    def tolerance(self):
        return self.base.tolerance

    def sample(self, rng, count):
        replace = count > len(self.points)
        idx = rng.choice(len(self.points), size=count, replace=replace)
        return self.points[idx]

    def distance(self, y):
        return self.base.distance(y)

    def to_dict(self):
        return self.base.to_dict()


def generate(cset: ConstraintSet, rng, count: int) -> np.ndarray:
    """Draw ``count`` members of K."""
    if count < 1:
        raise DomainError("need at least one sample")
    return cset.sample(rng, count)


def distance_to_set(cset: ConstraintSet, y):
    return cset.distance(y)


def constraint_from_dict(d) -> ConstraintSet:
    kind = d["kind"]
    if kind == "square":
        return BoxSet()
    if kind == "disk":
        return DiskSet()
    if kind == "sphere":
        return SphereSet()
    if kind in ("rose", "variety"):
        return CurveSet(CurveSpec.from_dict(d.get("spec", {"kind": kind})))
    raise DomainError(f"unknown constraint set kind {kind!r}")
