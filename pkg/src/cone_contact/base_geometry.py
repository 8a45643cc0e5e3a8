"""Flat base manifolds, Finsler metric families and their fibre-wise algebra.

All metric evaluations broadcast over leading batch axes: ``t`` has shape ``S``,
``p`` and ``w`` have shape ``S + (n,)``.
"""
import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid

from .directions import angular_spacing, direction_set, refine_max
from .utils import (
    AdmissibilityError,
    DomainError,
    NumericalError,
    StrongConvexityWarning,
    as_array,
    require_nonzero,
)

logger = logging.getLogger(__name__)

FD_RELATIVE_STEP = 1e-4
# admissibility is sampled on |t| <= ADMISSIBILITY_WINDOW, the largest integrator horizon
ADMISSIBILITY_WINDOW = 10.0
ADMISSIBILITY_TIME_STEP = 0.05
FieldLike = Union[Callable[[np.ndarray, np.ndarray], np.ndarray], Sequence, np.ndarray, float]


class Topology(str, Enum):
    TORUS = "torus"
    EUCLIDEAN = "euclidean"


@dataclass(frozen=True)
class BaseManifold:
    """A flat torus [0, L)^n or Euclidean R^n with n in {1, 2, 3}."""

    dimension: int
    topology: Topology = Topology.EUCLIDEAN
    periods: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise DomainError(f"Base dimension must be 1, 2 or 3, got {self.dimension}.", error_code=400)
        object.__setattr__(self, "topology", Topology(self.topology))
        if self.topology is Topology.TORUS:
            periods = np.asarray(self.periods if self.periods is not None else 2 * np.pi, float)
            if periods.ndim > 1 or periods.size not in (1, self.dimension):
                raise DomainError(f"Expected {self.dimension} torus periods, got {periods.size}.", error_code=400)
            periods = np.broadcast_to(periods, (self.dimension,))
            if np.any(periods <= 0.0) or not np.all(np.isfinite(periods)):
                raise DomainError("Torus periods must be strictly positive.", error_code=400)
            object.__setattr__(self, "periods", tuple(float(x) for x in periods))

    @property
    def is_torus(self) -> bool:
        return self.topology is Topology.TORUS

    def wrap(self, coords) -> np.ndarray:
        coords = np.asarray(coords, dtype=float)
        if not self.is_torus:
            return coords
        periods = np.asarray(self.periods)
        wrapped = np.mod(coords, periods)
        # mod can round up to exactly L
        return np.where(wrapped >= periods, 0.0, wrapped)

    def displacement(self, a, b) -> np.ndarray:
        """b - a, taking the shortest representative on tori."""
        d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
        if self.is_torus:
            periods = np.asarray(self.periods)
            d = d - periods * np.round(d / periods)
        return d

    def point(self, coords) -> "BasePoint":
        coords = np.asarray(coords, dtype=float).reshape(self.dimension)
        return BasePoint(self.wrap(coords))


@dataclass(frozen=True, eq=False)
class BasePoint:
    coords: np.ndarray


@dataclass(frozen=True, eq=False)
class TangentVector:
    base: BasePoint
    components: np.ndarray


@dataclass(frozen=True, eq=False)
class Covector:
    base: BasePoint
    components: np.ndarray

    def pair(self, w) -> float:
        return float(np.dot(self.components, as_array(w)))


@dataclass(frozen=True, eq=False)
class SpacetimeEvent:
    t: float
    p: BasePoint


@dataclass(frozen=True, eq=False)
class SpacetimeVector:
    w0: float
    w: np.ndarray

    @property
    def components(self) -> np.ndarray:
        return np.concatenate([[self.w0], as_array(self.w)])


@dataclass(frozen=True, eq=False)
class SpacetimeCurve:
    """A sampled curve s -> (t(s), p(s)) in R x Sigma (p unwrapped)."""

    s: np.ndarray
    t: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        t = np.broadcast_to(np.asarray(self.t, dtype=float), s.shape)
        p = np.asarray(self.p, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if s.ndim != 1 or s.size < 2:
            raise DomainError("A sampled curve needs at least 2 samples.", error_code=400)
        if np.any(np.diff(s) <= 0.0):
            raise DomainError("Curve parameter must be strictly increasing.", error_code=400)
        if p.shape[0] != s.size:
            raise DomainError("Curve samples have inconsistent lengths.", error_code=400)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "t", np.array(t))
        object.__setattr__(self, "p", p)

    @classmethod
    def from_function(cls, func: Callable[[float], Tuple[float, Sequence[float]]], s0: float, s1: float,
                      samples: int) -> "SpacetimeCurve":
        s = np.linspace(s0, s1, samples)
        events = [func(x) for x in s]
        return cls(s, np.array([e[0] for e in events]), np.array([np.atleast_1d(e[1]) for e in events]))

    def velocities(self) -> Tuple[np.ndarray, np.ndarray]:
        w0 = np.gradient(self.t, self.s)
        w = np.gradient(self.p, self.s, axis=0)
        return w0, w


class MetricKind(str, Enum):
    EUCLIDEAN = "euclidean"
    RIEMANNIAN = "riemannian"
    RANDERS = "randers"
    CUSTOM = "custom"


def constant_field(value, shape: Tuple[int, ...]) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    value = np.asarray(value, dtype=float)
    if value.shape != shape:
        raise DomainError(f"Coefficient has shape {value.shape}, expected {shape}.", error_code=400)

    def field_(t, p):
        lead = np.broadcast_shapes(np.shape(t), np.shape(p)[:-1])
        return np.broadcast_to(value, lead + shape)

    field_.constant = True
    return field_


def _as_field(value: FieldLike, shape: Tuple[int, ...]):
    if callable(value):
        return value
    return constant_field(value, shape)


def _admissibility_samples(n: int, times=None, points=None):
    if times is None:
        count = int(round(2.0 * ADMISSIBILITY_WINDOW / ADMISSIBILITY_TIME_STEP)) + 1
        times = np.linspace(-ADMISSIBILITY_WINDOW, ADMISSIBILITY_WINDOW, count)
    times = np.asarray(times, dtype=float)
    if points is None:
        axis = np.linspace(0.0, 2.0 * np.pi, 4, endpoint=False)
        points = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
    tt, idx = np.meshgrid(times, np.arange(len(points)), indexing="ij")
    return tt.ravel(), np.asarray(points, dtype=float)[idx.ravel()]


@dataclass(frozen=True, eq=False)
class FinslerFamily:
    """A time-dependent Finsler metric F_t on Sigma.

    ``a`` and ``b`` are fields ``(t, p) -> S+(n,n)`` / ``S+(n,)``; ``func`` is a vectorized
    custom norm ``(t, p, w) -> S``.
    """

    kind: MetricKind
    dimension: int
    a: Optional[Callable] = None
    b: Optional[Callable] = None
    func: Optional[Callable] = None
    dual_directions: int = 512
    description: str = field(default="")

    @classmethod
    def euclidean(cls, dimension: int) -> "FinslerFamily":
        return cls(MetricKind.EUCLIDEAN, dimension, description="euclidean")

    @classmethod
    def riemannian(cls, a: FieldLike, dimension: Optional[int] = None, validate: bool = True,
                   **sample_kw) -> "FinslerFamily":
        n = dimension or np.asarray(a).shape[0]
        fam = cls(MetricKind.RIEMANNIAN, n, a=_as_field(a, (n, n)), description="riemannian")
        if validate:
            fam.validate(**sample_kw)
        return fam

    @classmethod
    def randers(cls, a: FieldLike, b: FieldLike, dimension: Optional[int] = None, validate: bool = True,
                **sample_kw) -> "FinslerFamily":
        n = dimension or np.asarray(b).shape[0]
        fam = cls(MetricKind.RANDERS, n, a=_as_field(a, (n, n)), b=_as_field(b, (n,)), description="randers")
        if validate:
            fam.validate(**sample_kw)
        return fam

    @classmethod
    def custom(cls, func: Callable, dimension: int, dual_directions: int = 512,
               description: str = "custom") -> "FinslerFamily":
        return cls(MetricKind.CUSTOM, dimension, func=func, dual_directions=dual_directions,
                   description=description)

    def validate(self, times=None, points=None) -> None:
        """Check positive definiteness of A and the randers condition |b|_{A^-1} < 1 at samples.

        By default the samples are |t| <= ADMISSIBILITY_WINDOW every ADMISSIBILITY_TIME_STEP, over a
        4-per-axis lattice of [0, 2 pi)^n.
        """
        if self.kind not in (MetricKind.RIEMANNIAN, MetricKind.RANDERS):
            return
        t, p = _admissibility_samples(self.dimension, times, points)
        a = self.a(t, p)
        if not np.allclose(a, np.swapaxes(a, -1, -2), atol=1e-12):
            raise AdmissibilityError("Metric coefficient A must be symmetric.", error_code=400)
        if np.any(np.linalg.eigvalsh(a)[..., 0] <= 0.0):
            raise AdmissibilityError("Metric coefficient A must be positive definite.", error_code=400)
        if self.kind is MetricKind.RANDERS:
            b = self.b(t, p)
            b_norm2 = np.einsum("...i,...i->...", b, np.linalg.solve(a, b[..., None])[..., 0])
            worst = float(np.sqrt(np.max(b_norm2)))
            if worst >= 1.0:
                raise AdmissibilityError(
                    f"randers admissibility violated: |b| = {worst:.6g} >= 1 in the A-metric", error_code=400
                )

    def _batch(self, t, p, w):
        t = np.asarray(t, dtype=float)
        p = np.asarray(p, dtype=float)
        w = np.asarray(w, dtype=float)
        n = self.dimension
        if p.shape[-1:] != (n,) or w.shape[-1:] != (n,):
            raise DomainError(f"Expected {n}-dimensional points and vectors.", error_code=400)
        lead = np.broadcast_shapes(t.shape, p.shape[:-1], w.shape[:-1])
        return (np.broadcast_to(t, lead), np.broadcast_to(p, lead + (n,)), np.broadcast_to(w, lead + (n,)))

    def norm(self, t, p, w, allow_zero: bool = False) -> np.ndarray:
        """F_t(p, w); with ``allow_zero`` the zero vector maps to 0."""
        t, p, w = self._batch(t, p, w)
        zero = np.linalg.norm(w, axis=-1) == 0.0
        if allow_zero and np.any(zero):
            safe = np.where(zero[..., None], 1.0, w)
            return np.where(zero, 0.0, self._norm(t, p, safe))
        require_nonzero(w, "tangent vector")
        return self._norm(t, p, w)

    def _norm(self, t, p, w):
        if self.kind is MetricKind.EUCLIDEAN:
            return np.linalg.norm(w, axis=-1)
        if self.kind is MetricKind.CUSTOM:
            return np.asarray(self.func(t, p, w), dtype=float)
        a = self.a(t, p)
        alpha = np.sqrt(np.einsum("...i,...ij,...j->...", w, a, w))
        if self.kind is MetricKind.RIEMANNIAN:
            return alpha
        return alpha + np.einsum("...i,...i->...", self.b(t, p), w)

    def dual(self, t, p, v) -> Tuple[np.ndarray, np.ndarray]:
        """F*_t(p, v) and its gradient in v (the unit vector saturating v)."""
        t, p, v = self._batch(t, p, v)
        require_nonzero(v, "covector")
        if self.kind is MetricKind.EUCLIDEAN:
            value = np.linalg.norm(v, axis=-1)
            return value, v / value[..., None]
        if self.kind is MetricKind.CUSTOM:
            return self._sampled_dual(t, p, v)
        a = self.a(t, p)
        if self.kind is MetricKind.RIEMANNIAN:
            a_inv_v = np.linalg.solve(a, v[..., None])[..., 0]
            value = np.sqrt(np.einsum("...i,...i->...", v, a_inv_v))
            return value, a_inv_v / value[..., None]
        # randers: the unit sphere is the navigation ellipse of M = A - b b^T
        b = self.b(t, p)
        m = a - b[..., :, None] * b[..., None, :]
        m_inv_v = np.linalg.solve(m, v[..., None])[..., 0]
        m_inv_b = np.linalg.solve(m, b[..., None])[..., 0]
        k = 1.0 + np.einsum("...i,...i->...", b, m_inv_b)
        root = np.sqrt(k * np.einsum("...i,...i->...", v, m_inv_v))
        value = root - np.einsum("...i,...i->...", v, m_inv_b)
        return value, k[..., None] * m_inv_v / root[..., None] - m_inv_b

    def _sampled_dual(self, t, p, v):
        n = self.dimension
        u = direction_set(n, self.dual_directions)
        spacing = angular_spacing(n, len(u))
        lead = v.shape[:-1]
        flat_t, flat_p, flat_v = t.reshape(-1), p.reshape(-1, n), v.reshape(-1, n)
        values = np.empty(flat_t.shape)
        maximizers = np.empty(flat_v.shape)
        for i in range(flat_t.size):
            ti, pi, vi = flat_t[i], flat_p[i], flat_v[i]

            def objective(dirs, _index, ti=ti, pi=pi, vi=vi):
                return dirs @ vi / self._norm(np.full(len(dirs), ti), np.broadcast_to(pi, dirs.shape), dirs)

            sampled = objective(u, None)
            best = int(np.argmax(sampled))
            value, u_star = refine_max(objective, u[best:best + 1], spacing)
            if value[0] <= 0.0 or not np.isfinite(value[0]):
                raise NumericalError("Dual norm refinement produced a non-positive maximum.",
                                     residual=float(value[0]))
            values[i] = value[0]
            w_star = u_star[0] / self._norm(ti, pi, u_star[0])
            maximizers[i] = w_star
        return values.reshape(lead), maximizers.reshape(lead + (n,))


def eval_F(fam: FinslerFamily, t, p, w) -> np.ndarray:
    """F_t(p, w); raises DomainError on zero vectors."""
    return _scalar(fam.norm(t, as_array(p), as_array(w)))


def dual_norm(fam: FinslerFamily, t, p, v) -> np.ndarray:
    """F*_t(p, v) = max{v(w) : F_t(p, w) <= 1}."""
    return _scalar(fam.dual(t, as_array(p), as_array(v))[0])


def dual_gradient(fam: FinslerFamily, t, p, v) -> np.ndarray:
    return fam.dual(t, as_array(p), as_array(v))[1]


def _scalar(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def fd_fundamental_tensor(fam: FinslerFamily, t, p, w, rel_step: float = FD_RELATIVE_STEP) -> np.ndarray:
    """Half the central-difference Hessian of F^2 in w."""
    t, p, w = fam._batch(t, as_array(p), as_array(w))
    require_nonzero(w, "tangent vector")
    n = fam.dimension
    h = rel_step * np.maximum(1.0, np.linalg.norm(w, axis=-1))[..., None]
    eye = np.eye(n)

    def f2(x):
        return fam._norm(t, p, x) ** 2

    hess = np.empty(w.shape[:-1] + (n, n))
    for i in range(n):
        for j in range(i, n):
            ei, ej = h * eye[i], h * eye[j]
            value = (f2(w + ei + ej) - f2(w + ei - ej) - f2(w - ei + ej) + f2(w - ei - ej)) / (4.0 * h[..., 0] ** 2)
            hess[..., i, j] = value
            hess[..., j, i] = value
    return 0.5 * hess


def fundamental_tensor(fam: FinslerFamily, t, p, w) -> np.ndarray:
    """g_w = 1/2 Hess_w(F^2); warns with StrongConvexityWarning when not positive definite."""
    p, w = as_array(p), as_array(w)
    if fam.kind is MetricKind.CUSTOM:
        g = fd_fundamental_tensor(fam, t, p, w)
    else:
        tb, pb, wb = fam._batch(t, p, w)
        require_nonzero(wb, "tangent vector")
        n = fam.dimension
        if fam.kind is MetricKind.EUCLIDEAN:
            g = np.broadcast_to(np.eye(n), wb.shape[:-1] + (n, n)).copy()
        else:
            a = fam.a(tb, pb)
            if fam.kind is MetricKind.RIEMANNIAN:
                g = np.array(a, dtype=float)
            else:
                b = fam.b(tb, pb)
                alpha = np.sqrt(np.einsum("...i,...ij,...j->...", wb, a, wb))
                ell = np.einsum("...ij,...j->...i", a, wb) / alpha[..., None]
                ratio = (alpha + np.einsum("...i,...i->...", b, wb)) / alpha
                g = ratio[..., None, None] * (a - ell[..., :, None] * ell[..., None, :]) + (
                    (ell + b)[..., :, None] * (ell + b)[..., None, :]
                )
    if np.any(np.linalg.eigvalsh(0.5 * (g + np.swapaxes(g, -1, -2)))[..., 0] <= 0.0):
        warnings.warn("Fundamental tensor is not positive definite at a sampled ray.", StrongConvexityWarning,
                      stacklevel=2)
    return g


def legendre(fam: FinslerFamily, t, p, w) -> np.ndarray:
    """The Legendre transform w -> g_w(w, .) = grad_w(F^2 / 2)."""
    p, w = as_array(p), as_array(w)
    tb, pb, wb = fam._batch(t, p, w)
    require_nonzero(wb, "tangent vector")
    if fam.kind is MetricKind.EUCLIDEAN:
        return np.array(wb)
    if fam.kind is MetricKind.RIEMANNIAN:
        return np.einsum("...ij,...j->...i", fam.a(tb, pb), wb)
    if fam.kind is MetricKind.RANDERS:
        a, b = fam.a(tb, pb), fam.b(tb, pb)
        alpha = np.sqrt(np.einsum("...i,...ij,...j->...", wb, a, wb))
        value = alpha + np.einsum("...i,...i->...", b, wb)
        return value[..., None] * (np.einsum("...ij,...j->...i", a, wb) / alpha[..., None] + b)
    h = FD_RELATIVE_STEP * np.maximum(1.0, np.linalg.norm(wb, axis=-1))[..., None]
    grad = np.empty(wb.shape)
    for i in range(fam.dimension):
        e = h * np.eye(fam.dimension)[i]
        grad[..., i] = (fam._norm(tb, pb, wb + e) ** 2 - fam._norm(tb, pb, wb - e) ** 2) / (4.0 * h[..., 0])
    return grad


def lorentz_norm(fam: FinslerFamily, t, p, w0, w) -> np.ndarray:
    """L(w0, w) = w0^2 - F_t(p, w)^2, with L(w0, 0) = w0^2."""
    return np.asarray(w0, dtype=float) ** 2 - fam.norm(t, p, w, allow_zero=True) ** 2


def energy(fam: FinslerFamily, curve: SpacetimeCurve) -> float:
    """E_L(gamma) = 1/2 int L(gamma') ds by the composite trapezoid rule."""
    if not isinstance(curve, SpacetimeCurve):
        raise DomainError("energy expects a SpacetimeCurve.", error_code=400)
    w0, w = curve.velocities()
    lagrangian = lorentz_norm(fam, curve.t, curve.p, w0, w)
    return float(0.5 * trapezoid(lagrangian, curve.s))
