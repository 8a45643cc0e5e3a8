"""Fibre-wise star-shaped bodies, support functions and polar duality.

A ``StarBody`` is stored as radii over a fixed direction set. When the radial function is
known in closed form it is kept alongside the samples and used for local refinement of
support values; bodies known only through samples behave as the polytope through their
boundary points.
"""
import csv
import itertools
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial import ConvexHull

from .directions import angular_spacing, direction_set, normalize, refine_max
from .utils import DomainError, require_nonzero

logger = logging.getLogger(__name__)

MIN_SAMPLES = 256
CONVEXITY_TOL = 1e-9
RadialFunction = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class StarBody:
    """A star-shaped body around the origin, r(u) > 0 on unit directions u."""

    directions: np.ndarray
    radii: np.ndarray
    radial: Optional[RadialFunction] = None
    support: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.directions, dtype=float))
        r = np.asarray(self.radii, dtype=float).reshape(-1)
        if u.shape[0] != r.size:
            raise DomainError("Directions and radii have different lengths.", error_code=400)
        if u.shape[1] >= 2 and r.size < MIN_SAMPLES:
            raise DomainError(f"A star body needs at least {MIN_SAMPLES} directions.", error_code=400)
        if not np.all(np.isfinite(r)) or np.any(r <= 0.0):
            raise DomainError("Star body radii must be finite and strictly positive.", error_code=400)
        object.__setattr__(self, "directions", normalize(u))
        object.__setattr__(self, "radii", r)

    @classmethod
    def from_radial(cls, radial: RadialFunction, dimension: int, count: Optional[int] = None,
                    support: Optional[Callable] = None) -> "StarBody":
        u = direction_set(dimension, count)
        return cls(u, np.asarray(radial(u), dtype=float), radial=radial, support=support)

    @property
    def dimension(self) -> int:
        return self.directions.shape[1]

    @property
    def count(self) -> int:
        return self.directions.shape[0]

    @property
    def boundary(self) -> np.ndarray:
        return self.radii[:, None] * self.directions

    def radius(self, u: np.ndarray) -> np.ndarray:
        """Radial function at arbitrary unit directions."""
        u = normalize(np.atleast_2d(np.asarray(u, dtype=float)))
        if self.radial is not None:
            return np.asarray(self.radial(u), dtype=float)
        return self._sampled_radius(u)

    def _sampled_radius(self, u):
        if self.dimension == 1:
            return np.where(u[:, 0] >= 0.0, self._side(1.0), self._side(-1.0))
        if self.dimension == 2:
            return self._polygon_radius(u)
        nearest = np.argmax(u @ self.directions.T, axis=1)
        return self.radii[nearest]

    def _side(self, sign):
        return self.radii[np.argmax(sign * self.directions[:, 0])]

    def _polygon_radius(self, u):
        angles = np.mod(np.arctan2(self.directions[:, 1], self.directions[:, 0]), 2 * np.pi)
        order = np.argsort(angles)
        sorted_angles = angles[order]
        x = self.boundary[order]
        phi = np.mod(np.arctan2(u[:, 1], u[:, 0]), 2 * np.pi)
        i = (np.searchsorted(sorted_angles, phi, side="right") - 1) % len(order)
        j = (i + 1) % len(order)
        d = x[j] - x[i]
        num = x[i, 0] * d[:, 1] - x[i, 1] * d[:, 0]
        den = u[:, 0] * d[:, 1] - u[:, 1] * d[:, 0]
        safe = np.abs(den) > 1e-300
        return np.where(safe, num / np.where(safe, den, 1.0), np.linalg.norm(x[i], axis=1))

    def contains(self, x: np.ndarray, tol: float = CONVEXITY_TOL) -> np.ndarray:
        """Radial membership test for points x (rows)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        norms = np.linalg.norm(x, axis=1)
        inside = norms == 0.0
        nz = ~inside
        if np.any(nz):
            u = x[nz] / norms[nz, None]
            # polygons are exact in the plane; nearest-sample lookup is too coarse on S^2
            if self.dimension == 3 and self.radial is not None:
                bound = self.radius(u)
            else:
                bound = self._sampled_radius(u)
            inside[nz] = norms[nz] <= bound * (1.0 + tol)
        return inside

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="\n", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow([f"u{i + 1}" for i in range(self.dimension)] + ["radius"])
            for u, r in zip(self.directions, self.radii):
                writer.writerow([repr(float(c)) for c in u] + [repr(float(r))])

    @classmethod
    def from_csv(cls, path) -> "StarBody":
        with Path(path).open("r", encoding="utf-8") as handle:
            rows = [row for row in csv.reader(handle) if row and not row[0].startswith("#")]
        data = np.array([[float(c) for c in row] for row in rows[1:]])
        return cls(data[:, :-1], data[:, -1])


def unit_ball(dimension: int, count: Optional[int] = None, radius: float = 1.0) -> StarBody:
    return StarBody.from_radial(lambda u: np.full(len(u), radius), dimension, count,
                                support=lambda w: radius * np.linalg.norm(w, axis=-1))


def quadratic_body(matrix, count: Optional[int] = None) -> StarBody:
    """{v : v^T A v <= 1} for a symmetric positive definite A."""
    a = np.asarray(matrix, dtype=float)
    a_inv = np.linalg.inv(a)
    return StarBody.from_radial(
        lambda u: 1.0 / np.sqrt(np.einsum("qi,ij,qj->q", u, a, u)), a.shape[0], count,
        support=lambda w: np.sqrt(np.einsum("...i,ij,...j->...", w, a_inv, w)),
    )


def scaled(body: StarBody, factor: float) -> StarBody:
    if factor <= 0.0:
        raise DomainError("Scaling factor must be positive.", error_code=400)
    radial = None if body.radial is None else (lambda u: factor * body.radial(u))
    support = None if body.support is None else (lambda w: factor * body.support(w))
    return replace(body, radii=factor * body.radii, radial=radial, support=support)


def support_function(body: StarBody, w) -> np.ndarray:
    """h_K(w) = max_{v in K} v(w), for one direction (n,) or a batch (q, n)."""
    w = np.asarray(w, dtype=float)
    single = w.ndim == 1
    w = np.atleast_2d(w)
    norms = require_nonzero(w, "direction")
    if body.support is not None:
        values = np.asarray(body.support(w), dtype=float)
        return float(values[0]) if single else values
    unit = w / norms[:, None]
    scores = unit @ body.boundary.T
    best = np.argmax(scores, axis=1)
    values = scores[np.arange(len(unit)), best]
    if body.radial is not None and body.dimension > 1:

        def objective(dirs, index):
            return body.radial(dirs) * np.einsum("qi,qi->q", dirs, unit[index])

        values, _ = refine_max(objective, body.directions[best], angular_spacing(body.dimension, body.count))
    values = values * norms
    return float(values[0]) if single else values


def polar(body: StarBody) -> StarBody:
    """K° = {w : v(w) <= 1 for all v in K}, with radial function 1 / h_K."""
    h = support_function(body, body.directions)
    if np.any(h <= 0.0):
        raise DomainError("Support function is not positive: origin is not interior.", error_code=400)

    def radial(u):
        values = support_function(body, u)
        if np.any(values <= 0.0):
            raise DomainError("Support function is not positive: origin is not interior.", error_code=400)
        return 1.0 / values

    return StarBody(body.directions, 1.0 / h, radial=radial)


def convex_hull(body: StarBody) -> StarBody:
    """Star body of the convex hull of the boundary samples."""
    if body.dimension == 1:
        return body
    hull = ConvexHull(body.boundary)
    normals, offsets = hull.equations[:, :-1], -hull.equations[:, -1]
    vertices = body.boundary[hull.vertices]

    def radial(u):
        facing = u @ normals.T
        with np.errstate(divide="ignore"):
            hits = np.where(facing > 0.0, offsets[None, :] / facing, np.inf)
        return hits.min(axis=1)

    def support(w):
        return np.max(w @ vertices.T, axis=-1)

    return StarBody(body.directions, radial(body.directions), radial=radial, support=support)


def _pairs(m: int):
    offsets = sorted({1 << k for k in range(int(np.log2(max(m, 2))) + 1) if (1 << k) <= m // 2} | {m // 3})
    i = np.arange(m)
    return np.concatenate([np.column_stack([i, (i + k) % m]) for k in offsets if k > 0])


def is_convex(body: StarBody, tol: float = CONVEXITY_TOL) -> bool:
    """Midpoint test over sampled boundary pairs."""
    if body.dimension == 1:
        return True
    pairs = _pairs(body.count)
    x = body.boundary
    mid = 0.5 * (x[pairs[:, 0]] + x[pairs[:, 1]])
    inside = body.contains(mid, tol)
    if not np.all(inside):
        logger.debug("Midpoint test failed for %d of %d pairs", int(np.sum(~inside)), len(pairs))
    return bool(np.all(inside))


def hausdorff_distance(first: StarBody, second: StarBody, directions: Optional[np.ndarray] = None) -> float:
    """max_u |h_K1(u) - h_K2(u)|, valid for convex bodies only."""
    if first.dimension != second.dimension:
        raise DomainError("Bodies live in fibres of different dimension.", error_code=400)
    for body in (first, second):
        if not is_convex(body):
            raise DomainError("Hausdorff distance via support functions needs convex bodies.", error_code=400)
    if directions is None:
        directions = direction_set(first.dimension, max(first.count, second.count) if first.dimension > 1 else None)
    return float(np.max(np.abs(support_function(first, directions) - support_function(second, directions))))


@dataclass(frozen=True)
class Box:
    """An axis-aligned region; axes with lower == upper are held fixed."""

    lower: Sequence[float]
    upper: Sequence[float]

    def grid(self, step: float):
        axes = []
        for lo, hi in zip(self.lower, self.upper):
            if hi < lo:
                raise DomainError("Box upper bound below lower bound.", error_code=400)
            count = int(np.floor((hi - lo) / step + 1e-9)) + 1
            axes.append(lo + step * np.arange(count))
        return axes


def lipschitz_estimate(body_field: Callable[[np.ndarray], StarBody], region: Box, step: float,
                       directions: Optional[np.ndarray] = None) -> float:
    """Largest Hausdorff quotient between grid neighbours at distance ``step``."""
    if step <= 0.0:
        raise DomainError("Lipschitz step must be positive.", error_code=400)
    axes = region.grid(step)
    shape = tuple(len(a) for a in axes)
    bodies = {}

    def body_at(index):
        if index not in bodies:
            bodies[index] = body_field(np.array([axes[k][i] for k, i in enumerate(index)]))
        return bodies[index]

    worst = 0.0
    for index in itertools.product(*(range(s) for s in shape)):
        for k in range(len(shape)):
            if index[k] + 1 >= shape[k]:
                continue
            neighbour = index[:k] + (index[k] + 1,) + index[k + 1:]
            quotient = hausdorff_distance(body_at(index), body_at(neighbour), directions) / step
            worst = max(worst, quotient)
    logger.debug("Lipschitz estimate %.6g over %d nodes", worst, len(bodies))
    return worst
