"""Cogeodesic flows on T*Sigma, positive paths of contactomorphisms and cone geodesics.

Rays are carried as unit Euclidean covectors together with a cumulative scale, so the
projectivized flow never depends on the representative and raw covectors stay recoverable.
"""
import abc
import csv
import logging
import math
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .base_geometry import FinslerFamily, MetricKind, fundamental_tensor, legendre
from .convex_duality import StarBody, support_function
from .utils import DomainError, IntegrationError, PathNotPositiveError, as_array, require_nonzero

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-3
DEFAULT_HORIZON = 10.0
GRADIENT_STEP = 1e-6
SCALE_BOUNDS = (1e-8, 1e8)
UNIT_TOL = 1e-8


def _central_gradient(func: Callable[[np.ndarray], np.ndarray], x: np.ndarray, rel_step: float = GRADIENT_STEP):
    x = np.asarray(x, dtype=float)
    h = rel_step * np.maximum(1.0, np.linalg.norm(x, axis=-1))
    grad = np.empty(x.shape)
    for i in range(x.shape[-1]):
        e = np.zeros(x.shape)
        e[..., i] = h
        grad[..., i] = (func(x + e) - func(x - e)) / (2.0 * h)
    return grad


def _broadcast(t, p, v):
    t, p, v = np.asarray(t, dtype=float), np.asarray(p, dtype=float), np.asarray(v, dtype=float)
    lead = np.broadcast_shapes(t.shape, p.shape[:-1], v.shape[:-1])
    n = v.shape[-1]
    return np.broadcast_to(t, lead), np.broadcast_to(p, lead + (n,)), np.broadcast_to(v, lead + (n,))


class ContactHamiltonian(abc.ABC):
    """A 1-homogeneous time-dependent Hamiltonian H_t on T*Sigma minus the zero section.

    Positive Hamiltonians generate positive paths; their unit co-balls {H_t <= 1} are the
    co-balls K_t of the induced cone.
    """

    dimension: int
    positive: bool = True
    description: str = ""

    @abc.abstractmethod
    def value(self, t, p, v) -> np.ndarray:
        ...

    def velocity(self, t, p, v) -> np.ndarray:
        """dH/dv, the base velocity of the flow."""
        return _central_gradient(lambda x: self.value(t, p, x), v)

    def p_gradient(self, t, p, v) -> np.ndarray:
        return _central_gradient(lambda x: self.value(t, x, v), p)

    def vector_field(self, t, p, v) -> Tuple[np.ndarray, np.ndarray]:
        return self.velocity(t, p, v), -self.p_gradient(t, p, v)

    def co_ball(self, t, p, count: Optional[int] = None) -> StarBody:
        """{v : H_t(p, v) <= 1}."""
        if not self.positive:
            raise PathNotPositiveError("Only positive Hamiltonians have unit co-balls.", error_code=400)
        p = np.asarray(p, dtype=float)
        return StarBody.from_radial(lambda u: 1.0 / self.value(t, p, u), self.dimension, count)

    def tangent_norm(self, t, p, w) -> np.ndarray:
        """h_{K_t(p)}(w); cone geodesic velocities are its unit vectors."""
        t, p, w = _broadcast(t, p, w)
        flat_t, flat_p, flat_w = t.reshape(-1), p.reshape(-1, self.dimension), w.reshape(-1, self.dimension)
        values = np.array([support_function(self.co_ball(ti, pi), wi) for ti, pi, wi in zip(flat_t, flat_p, flat_w)])
        return values.reshape(t.shape)


class DualFinslerHamiltonian(ContactHamiltonian):
    """H_t = F*_t, the generator of the path induced by the cone of F_t."""

    def __init__(self, finsler: FinslerFamily):
        self.finsler = finsler
        self.dimension = finsler.dimension
        self.description = f"dual:{finsler.description}"

    def value(self, t, p, v):
        return self.finsler.dual(t, p, v)[0]

    def velocity(self, t, p, v):
        return self.finsler.dual(t, p, v)[1]

    def co_ball(self, t, p, count=None):
        fam, p = self.finsler, np.asarray(p, dtype=float)
        exact = fam.kind is not MetricKind.CUSTOM
        return StarBody.from_radial(
            lambda u: 1.0 / fam.dual(t, p, u)[0], fam.dimension, count,
            support=(lambda w: fam.norm(t, p, w)) if exact else None,
        )

    def tangent_norm(self, t, p, w):
        return self.finsler.norm(t, p, w)


class GaugeHamiltonian(ContactHamiltonian):
    """H_t(p, v) = |v| / r_t(p, v/|v|) for a positive co-ball radius function r."""

    def __init__(self, radius: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray], dimension: int,
                 description: str = "gauge"):
        self.radius = radius
        self.dimension = dimension
        self.description = description

    @classmethod
    def from_angle(cls, radius: Callable, dimension: int = 2, description: str = "gauge") -> "GaugeHamiltonian":
        """Build from r(t, p, theta) with theta the polar angle of the covector direction."""
        if dimension not in (1, 2):
            raise DomainError("Angular co-ball radii need a base of dimension 1 or 2.", error_code=400)

        def by_direction(t, p, u):
            theta = np.arctan2(u[..., 1], u[..., 0]) if dimension == 2 else np.where(u[..., 0] >= 0.0, 0.0, np.pi)
            return radius(t, p, theta)

        return cls(by_direction, dimension, description)

    def value(self, t, p, v):
        t, p, v = _broadcast(t, p, v)
        norms = require_nonzero(v, "covector")
        r = np.asarray(self.radius(t, p, v / norms[..., None]), dtype=float)
        if np.any(r <= 0.0) or not np.all(np.isfinite(r)):
            raise PathNotPositiveError("Co-ball radius must be finite and positive.", error_code=400)
        return norms / r

    def co_ball(self, t, p, count=None):
        p = np.asarray(p, dtype=float)
        return StarBody.from_radial(
            lambda u: np.asarray(self.radius(*_broadcast(t, p, u)), dtype=float), self.dimension, count
        )


class TimeReversedHamiltonian(ContactHamiltonian):
    """-H_{-t}: generates psi_t = phi_{-t}, a negative path."""

    positive = False

    def __init__(self, inner: ContactHamiltonian):
        self.inner = inner
        self.dimension = inner.dimension
        self.description = f"reversed:{inner.description}"

    def value(self, t, p, v):
        return -self.inner.value(-np.asarray(t, dtype=float), p, v)

    def velocity(self, t, p, v):
        return -self.inner.velocity(-np.asarray(t, dtype=float), p, v)

    def p_gradient(self, t, p, v):
        return -self.inner.p_gradient(-np.asarray(t, dtype=float), p, v)


class Normalization(str, Enum):
    UNIT_EUCLIDEAN = "unit-euclidean"
    UNIT_DUAL = "unit-dual-finsler"
    RAW = "raw"


@dataclass(frozen=True, eq=False)
class RayPoint:
    """A point of ST*Sigma through one covector representative."""

    p: np.ndarray
    v: np.ndarray
    normalization: Normalization = Normalization.RAW
    time: Optional[float] = None

    def __post_init__(self):
        p = np.atleast_1d(as_array(self.p)).astype(float)
        v = np.atleast_1d(as_array(self.v)).astype(float)
        if p.shape != v.shape:
            raise DomainError("Ray base point and covector differ in dimension.", error_code=400)
        require_nonzero(v, "covector")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "v", v)

    @classmethod
    def unit_euclidean(cls, p, v) -> "RayPoint":
        v = as_array(v)
        return cls(p, v / require_nonzero(v, "covector"), Normalization.UNIT_EUCLIDEAN)

    @classmethod
    def unit_dual(cls, hamiltonian: ContactHamiltonian, t: float, p, v) -> "RayPoint":
        p, v = as_array(p), as_array(v)
        h = float(hamiltonian.value(t, p, v))
        if h <= 0.0:
            raise PathNotPositiveError("Cannot normalize against a non-positive Hamiltonian.", error_code=400)
        return cls(p, v / h, Normalization.UNIT_DUAL, time=t)

    @property
    def direction(self) -> np.ndarray:
        return self.v / np.linalg.norm(self.v)

    def check(self, hamiltonian: Optional[ContactHamiltonian] = None, tol: float = UNIT_TOL) -> None:
        if self.normalization is Normalization.UNIT_EUCLIDEAN:
            off = abs(np.linalg.norm(self.v) - 1.0)
        elif self.normalization is Normalization.UNIT_DUAL and hamiltonian is not None:
            off = abs(float(hamiltonian.value(self.time or 0.0, self.p, self.v)) - 1.0)
        else:
            return
        if off > tol:
            raise DomainError(f"Ray representative is off its {self.normalization.value} sphere by {off:.3g}.",
                              error_code=400)


def ray_angle(v1, v2) -> np.ndarray:
    """Angle between covector directions, accurate for small angles."""
    u1 = np.asarray(v1, dtype=float)
    u2 = np.asarray(v2, dtype=float)
    u1 = u1 / np.linalg.norm(u1, axis=-1, keepdims=True)
    u2 = u2 / np.linalg.norm(u2, axis=-1, keepdims=True)
    chord = np.linalg.norm(u1 - u2, axis=-1)
    return 2.0 * np.arcsin(np.clip(0.5 * chord, 0.0, 1.0))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Dense samples of a batch of rays: ``p``/``v`` are (k, q, n), ``scale`` and ``h`` are (k, q)."""

    t: np.ndarray
    p: np.ndarray
    v: np.ndarray
    scale: np.ndarray
    h: np.ndarray
    blowup_time: np.ndarray

    @property
    def covectors(self) -> np.ndarray:
        return self.v * self.scale[..., None]

    @property
    def h_residual(self) -> np.ndarray:
        """Drift of H_t at the raw covector from its initial value."""
        return self.h - self.h[0]

    @property
    def blown_up(self) -> np.ndarray:
        return np.isfinite(self.blowup_time)

    def ray(self, index: int) -> Tuple[np.ndarray, np.ndarray]:
        return self.p[:, index], self.covectors[:, index]

    def to_csv(self, path, ray: int = 0, comment: Optional[str] = None) -> None:
        n = self.p.shape[-1]
        with Path(path).open("w", newline="\n", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            if comment:
                handle.write(f"# {comment}\n")
            writer.writerow(["t"] + [f"p{i + 1}" for i in range(n)] + [f"v{i + 1}" for i in range(n)] + ["H_residual"])
            _, covectors = self.ray(ray)
            times = self.t if self.t.ndim == 1 else self.t[:, ray]
            for k, t in enumerate(times):
                writer.writerow([repr(float(t))] + [repr(float(x)) for x in self.p[k, ray]]
                                + [repr(float(x)) for x in covectors[k]] + [repr(float(self.h_residual[k, ray]))])


def _rk4_step(ham: ContactHamiltonian, t, p, v, h):
    hv = np.asarray(h)[..., None]
    k1p, k1v = ham.vector_field(t, p, v)
    k2p, k2v = ham.vector_field(t + 0.5 * h, p + 0.5 * hv * k1p, v + 0.5 * hv * k1v)
    k3p, k3v = ham.vector_field(t + 0.5 * h, p + 0.5 * hv * k2p, v + 0.5 * hv * k2v)
    k4p, k4v = ham.vector_field(t + h, p + hv * k3p, v + hv * k3v)
    return (p + hv / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p),
            v + hv / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v))


def _guarded_step(ham, t, p, v, h):
    """One step; rows whose evaluation fails come back as NaN."""
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        try:
            return _rk4_step(ham, t, p, v, h)
        except (DomainError, np.linalg.LinAlgError, FloatingPointError):
            if len(p) == 1:
                return np.full(p.shape, np.nan), np.full(v.shape, np.nan)
            rows = [_guarded_step(ham, t[i:i + 1], p[i:i + 1], v[i:i + 1], h[i:i + 1]) for i in range(len(p))]
            return np.concatenate([r[0] for r in rows]), np.concatenate([r[1] for r in rows])


def integrate_rays(ham: ContactHamiltonian, p, v, t0, t1, step: float = DEFAULT_STEP,
                   record: bool = True, strict: bool = True) -> Trajectory:
    """Integrate p' = dH/dv, v' = -dH/dp for a batch of rays with the classical RK4 scheme.

    ``t0`` and ``t1`` may be per-ray arrays; every ray then takes the same number of steps,
    none longer than ``step``, and ``Trajectory.t`` holds one row of times per sample.
    Representatives are renormalized to unit Euclidean norm after every step. With ``strict``
    a blow-up raises IntegrationError; otherwise blown rays are frozen and reported.
    """
    if step <= 0.0:
        raise DomainError("Integration step must be positive.", error_code=400)
    p = np.array(np.atleast_2d(as_array(p)), dtype=float)
    v = np.array(np.atleast_2d(as_array(v)), dtype=float)
    norms = require_nonzero(v, "covector")
    scale = norms.copy()
    v = v / norms[:, None]
    q = len(p)
    per_ray = np.ndim(t0) > 0 or np.ndim(t1) > 0
    start = np.broadcast_to(np.asarray(t0, dtype=float), (q,)).copy()
    span = np.broadcast_to(np.asarray(t1, dtype=float), (q,)) - start
    steps = int(math.ceil(np.max(np.abs(span)) / step - 1e-9))
    h = span / steps if steps else np.zeros(q)
    alive = np.ones(q, dtype=bool)
    blowup_time = np.full(q, np.inf)

    def stamp(t):
        return t.copy() if per_ray else float(t[0])

    def hamiltonian_values(t, p, v, scale):
        out = np.full(q, np.nan)
        rows = np.flatnonzero(alive)
        try:
            out[rows] = ham.value(t[rows], p[rows], v[rows]) * scale[rows]
        except DomainError:
            # undefined rows stay NaN; the next step freezes them
            for i in rows:
                try:
                    out[i] = ham.value(t[i:i + 1], p[i:i + 1], v[i:i + 1])[0] * scale[i]
                except DomainError:
                    pass
        return out

    times = [stamp(start)]
    ps, vs, scales, hs = [p.copy()], [v.copy()], [scale.copy()], [hamiltonian_values(start, p, v, scale)]
    for k in range(steps):
        if not np.any(alive):
            break
        t = start + k * h
        p_new, v_new = p.copy(), v.copy()
        p_new[alive], v_new[alive] = _guarded_step(ham, t[alive], p[alive], v[alive], h[alive])
        new_norms = np.linalg.norm(v_new, axis=1)
        new_scale = scale * new_norms
        ok = np.all(np.isfinite(p_new), axis=1) & np.isfinite(new_norms) & (new_norms > 0.0)
        ok &= (new_scale >= SCALE_BOUNDS[0]) & (new_scale <= SCALE_BOUNDS[1])
        failed = alive & ~ok
        if np.any(failed):
            last_state = np.concatenate([p, v * scale[:, None]], axis=1)
            if strict:
                raise IntegrationError(f"Flow left the admissible region after t = {t[failed][0]:.6g}.",
                                       last_state=last_state, last_time=float(t[failed][0]))
            logger.debug("Freezing %d blown-up rays", int(failed.sum()))
            blowup_time[failed] = t[failed]
            alive &= ~failed
        p[alive] = p_new[alive]
        v[alive] = v_new[alive] / new_norms[alive, None]
        scale[alive] = new_scale[alive]
        if record or k == steps - 1:
            now = start + (k + 1) * h
            times.append(stamp(now))
            ps.append(p.copy())
            vs.append(v.copy())
            scales.append(scale.copy())
            hs.append(hamiltonian_values(now, p, v, scale))
    if not record:
        times, ps, vs, scales, hs = times[-1:], ps[-1:], vs[-1:], scales[-1:], hs[-1:]
    return Trajectory(np.array(times), np.array(ps), np.array(vs), np.array(scales), np.array(hs), blowup_time)


@dataclass(eq=False)
class PositivePath:
    """The path of contactomorphisms generated by a contact Hamiltonian, as a two-time propagator."""

    hamiltonian: ContactHamiltonian
    step: float = DEFAULT_STEP
    horizon: float = DEFAULT_HORIZON
    label: str = ""
    _cache: dict = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        if self.step <= 0.0 or self.horizon <= 0.0:
            raise DomainError("Path step and horizon must be positive.", error_code=400)
        self.label = self.label or self.hamiltonian.description

    @property
    def dimension(self) -> int:
        return self.hamiltonian.dimension

    @property
    def positive(self) -> bool:
        return self.hamiltonian.positive

    def _check_times(self, *times):
        for t in times:
            if np.max(np.abs(t)) > self.horizon + 1e-12:
                raise DomainError(f"Time {np.max(np.abs(t)):.6g} is outside the horizon |t| <= {self.horizon}.",
                                  error_code=400)

    def transport(self, s: float, t: float, p, v, strict: bool = True) -> Tuple[np.ndarray, np.ndarray]:
        """Phi_{s->t} on a batch of rays (s, t scalars or per ray); returns base points and raw covectors."""
        self._check_times(s, t)
        traj = integrate_rays(self.hamiltonian, p, v, s, t, self.step, record=False, strict=strict)
        return traj.p[-1], traj.covectors[-1]

    def trajectory(self, p, v, t0: float, t1: float, strict: bool = True) -> Trajectory:
        self._check_times(t0, t1)
        p = np.atleast_2d(np.asarray(p, dtype=float))
        v = np.atleast_2d(np.asarray(v, dtype=float))
        key = (t0, t1, strict, p.tobytes(), v.tobytes())
        with self._lock:
            cached = self._cache.get(key)
        if cached is None:
            cached = integrate_rays(self.hamiltonian, p, v, t0, t1, self.step, strict=strict)
            with self._lock:
                self._cache.setdefault(key, cached)
        return cached

    def reversed(self) -> "PositivePath":
        return PositivePath(TimeReversedHamiltonian(self.hamiltonian), self.step, self.horizon,
                            label=f"reversed:{self.label}")

    def with_step(self, step: float) -> "PositivePath":
        return PositivePath(self.hamiltonian, step, self.horizon, self.label)


def integrate_cogeodesic(fam: FinslerFamily, ray: RayPoint, t0: float, t1: float,
                         step: float = DEFAULT_STEP) -> Trajectory:
    """Cogeodesic flow of H_t = F*_t from (t0, ray) to t1."""
    if max(abs(t0), abs(t1)) > DEFAULT_HORIZON:
        raise DomainError(f"Integration is limited to |t| <= {DEFAULT_HORIZON}.", error_code=400)
    return integrate_rays(DualFinslerHamiltonian(fam), ray.p, ray.v, t0, t1, step)


def path_transport(path: PositivePath, s: float, t: float, ray: RayPoint) -> RayPoint:
    p, v = path.transport(s, t, ray.p, ray.v)
    return RayPoint(p[0], v[0], Normalization.RAW, time=t)


def path_apply(path: PositivePath, t: float, ray: RayPoint) -> RayPoint:
    return path_transport(path, 0.0, t, ray)


def inverse_path_apply(path: PositivePath, t: float, ray: RayPoint) -> RayPoint:
    return path_transport(path, t, 0.0, ray)


@dataclass(frozen=True, eq=False)
class ConeGeodesic:
    """t -> (t, p(t)) on a uniform t-grid with spatial velocity dp/dt."""

    t: np.ndarray
    p: np.ndarray
    velocity: np.ndarray
    covector: Optional[np.ndarray] = None

    def null_residual(self, hamiltonian: ContactHamiltonian) -> np.ndarray:
        """h_{K_t}(w~) - 1 per sample; vanishes along cone geodesics."""
        return hamiltonian.tangent_norm(self.t, self.p, self.velocity) - 1.0


def cone_geodesic_batch(path: PositivePath, p, v, t_min: float, t_max: float) -> List[ConeGeodesic]:
    """gamma_v(t) = (t, pi(phi_t(v))) for a batch of rays given at t = 0."""
    if t_min > t_max:
        raise DomainError("Empty geodesic interval.", error_code=400)
    ham = path.hamiltonian
    forward = path.trajectory(p, v, 0.0, max(t_max, 0.0))
    backward = path.trajectory(p, v, 0.0, min(t_min, 0.0))
    t = np.concatenate([backward.t[:0:-1], forward.t])
    ps = np.concatenate([backward.p[:0:-1], forward.p])
    vs = np.concatenate([backward.covectors[:0:-1], forward.covectors])
    keep = (t >= t_min - 1e-12) & (t <= t_max + 1e-12)
    t, ps, vs = t[keep], ps[keep], vs[keep]
    geodesics = []
    for i in range(ps.shape[1]):
        velocity = ham.velocity(t, ps[:, i], vs[:, i])
        geodesics.append(ConeGeodesic(t, ps[:, i], velocity, vs[:, i]))
    return geodesics


def cone_geodesic(path: PositivePath, ray: RayPoint, t_min: float, t_max: float) -> ConeGeodesic:
    return cone_geodesic_batch(path, ray.p, ray.v, t_min, t_max)[0]


def _lagrangian_acceleration(fam: FinslerFamily, x: np.ndarray, y: np.ndarray, fd_step: float) -> np.ndarray:
    """Euler-Lagrange equations of 1/2 (w0^2 - F_t(p, w)^2) solved for y'."""
    q, m = x.shape

    def lagrangian(xx):
        return y[:, 0] ** 2 - fam.norm(xx[:, 0], xx[:, 1:], y[:, 1:]) ** 2

    def momentum(xx):
        return np.column_stack([2.0 * y[:, 0], -2.0 * legendre(fam, xx[:, 0], xx[:, 1:], y[:, 1:])])

    hess = np.zeros((q, m, m))
    hess[:, 0, 0] = 2.0
    hess[:, 1:, 1:] = -2.0 * fundamental_tensor(fam, x[:, 0], x[:, 1:], y[:, 1:])
    dl_dx = np.empty((q, m))
    mixed = np.empty((q, m, m))
    for j in range(m):
        e = np.zeros(m)
        e[j] = fd_step
        dl_dx[:, j] = (lagrangian(x + e) - lagrangian(x - e)) / (2.0 * fd_step)
        mixed[:, :, j] = (momentum(x + e) - momentum(x - e)) / (2.0 * fd_step)
    rhs = dl_dx - np.einsum("qij,qj->qi", mixed, y)
    return np.linalg.solve(hess, rhs[..., None])[..., 0]


def lagrangian_geodesic_batch(fam: FinslerFamily, t0: float, p, w, t1: float, step: float = DEFAULT_STEP,
                              fd_step: float = 1e-5) -> List[ConeGeodesic]:
    """Null geodesics of L = dt^2 - F_t^2 from the spray, resampled on a uniform t-grid.

    ``w`` holds spatial velocities (w0 := F) or full null vectors (w0, w).
    """
    if t1 <= t0:
        raise DomainError("Lagrangian geodesics run forward in t.", error_code=400)
    p = np.atleast_2d(as_array(p)).astype(float)
    w = np.atleast_2d(as_array(w)).astype(float)
    n = fam.dimension
    t_start = np.full(len(p), float(t0))
    if w.shape[1] == n + 1:
        w0, w = w[:, 0], w[:, 1:]
        f = fam.norm(t_start, p, w)
        if np.any(np.abs(w0 - f) > 1e-8 * np.maximum(1.0, f)) or np.any(w0 <= 0.0):
            raise DomainError("Initial vector is not future-null.", error_code=400)
    else:
        w0 = fam.norm(t_start, p, w)
    x = np.column_stack([t_start, p])
    y = np.column_stack([w0, w])
    d_lambda = step / float(np.max(w0))
    samples_x, samples_y = [x.copy()], [y.copy()]
    limit = 20 * int(math.ceil((t1 - t0) / step)) + 10

    def rhs(x, y):
        acc = _lagrangian_acceleration(fam, x, y, fd_step)
        if not np.all(np.isfinite(acc)):
            raise np.linalg.LinAlgError("non-finite spray")
        return y, acc

    for _ in range(limit):
        if np.all(x[:, 0] >= t1):
            break
        try:
            with np.errstate(over="raise", invalid="raise", divide="raise"):
                k1x, k1y = rhs(x, y)
                k2x, k2y = rhs(x + 0.5 * d_lambda * k1x, y + 0.5 * d_lambda * k1y)
                k3x, k3y = rhs(x + 0.5 * d_lambda * k2x, y + 0.5 * d_lambda * k2y)
                k4x, k4y = rhs(x + d_lambda * k3x, y + d_lambda * k3y)
        except (np.linalg.LinAlgError, FloatingPointError, DomainError) as exc:
            raise IntegrationError(f"Degenerate fundamental tensor along the ray: {exc}",
                                   last_state=np.concatenate([x, y], axis=1), last_time=float(np.min(x[:, 0])))
        x = x + d_lambda / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        y = y + d_lambda / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
        if np.any(y[:, 0] <= 0.0):
            raise IntegrationError("Geodesic stopped moving forward in time.",
                                   last_state=np.concatenate([x, y], axis=1), last_time=float(np.min(x[:, 0])))
        samples_x.append(x.copy())
        samples_y.append(y.copy())
    else:
        raise IntegrationError("Lagrangian integration did not reach the final time.",
                               last_state=np.concatenate([x, y], axis=1), last_time=float(np.min(x[:, 0])))

    xs, ys = np.array(samples_x), np.array(samples_y)
    count = max(1, int(round((t1 - t0) / step)))
    grid = t0 + (t1 - t0) * np.arange(count + 1) / count
    geodesics = []
    for i in range(len(p)):
        ti = xs[:, i, 0]
        dp_dt = ys[:, i, 1:] / ys[:, i, :1]
        spline = CubicHermiteSpline(ti, xs[:, i, 1:], dp_dt, axis=0)
        geodesics.append(ConeGeodesic(grid, spline(grid), spline(grid, 1)))
    return geodesics


def lagrangian_geodesic(fam: FinslerFamily, t0: float, p, w, t1: float, step: float = DEFAULT_STEP) -> ConeGeodesic:
    return lagrangian_geodesic_batch(fam, t0, as_array(p).reshape(1, -1), as_array(w).reshape(1, -1), t1, step)[0]
