"""Contact forms on ST*Sigma, Reeb checks, positivity margins and skies.

Sign convention: margins are lambda evaluated on velocities in ST*Sigma. Skies are pulled
back to time 0, which reverses coorientation, so skies moving along future timelike curves
have negative margins.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional

import numpy as np
from pydantic import BaseModel
from scipy.linalg import null_space

from .base_geometry import BaseManifold, SpacetimeCurve
from .directions import direction_set
from .dynamics import ContactHamiltonian, Normalization, PositivePath, RayPoint, integrate_rays, ray_angle
from .utils import DomainError, as_array

logger = logging.getLogger(__name__)

SIGN_CONVENTION = "lambda on ST*Sigma at time 0; future causal curves give non-positive sky margins"
DALPHA_STEP = 1e-4
MARGIN_STEP = 1e-4
SPHERE_TOL = 1e-6
DEFAULT_SKY_SAMPLES = {1: 2, 2: 64, 3: 256}


def liouville_pairing(v, u) -> float:
    """lambda_v(u) = v(d pi(u)) for u = (dp, dv) tangent to T*Sigma."""
    v = as_array(v)
    u = as_array(u)
    return float(np.dot(v, u[: v.shape[-1]]))


@dataclass(frozen=True, eq=False)
class ContactSample:
    """A unit co-sphere representative at time t and an orthonormal frame of the co-sphere, rows (dp, dv)."""

    ray: RayPoint
    frame: np.ndarray
    time: float


def contact_sample(ham: ContactHamiltonian, t: float, ray: RayPoint) -> ContactSample:
    unit = RayPoint.unit_dual(ham, t, ray.p, ray.v)
    dh = np.concatenate([ham.p_gradient(t, unit.p, unit.v), ham.velocity(t, unit.p, unit.v)])
    return ContactSample(unit, null_space(dh[None, :]).T, t)


def _check_on_sphere(ham: ContactHamiltonian, t: float, sample: ContactSample) -> None:
    off = abs(float(ham.value(t, sample.ray.p, sample.ray.v)) - 1.0)
    if off > SPHERE_TOL:
        raise DomainError(f"Sample is off the unit co-sphere at t = {t} by {off:.3g}.", error_code=400)


def contact_form_eval(ham: ContactHamiltonian, t: float, sample: ContactSample, u) -> float:
    """alpha_t(u) through the Liouville form at the unit representative."""
    _check_on_sphere(ham, t, sample)
    return liouville_pairing(sample.ray.v, u)


def reeb_field(ham: ContactHamiltonian, t: float, sample: ContactSample) -> np.ndarray:
    p, v = sample.ray.p, sample.ray.v
    return np.concatenate([ham.velocity(t, p, v), -ham.p_gradient(t, p, v)])


def _alpha_at(z: np.ndarray, u: np.ndarray, n: int) -> float:
    return float(np.dot(z[n:], u[:n]))


def dalpha(sample: ContactSample, x, y, step: float = DALPHA_STEP) -> float:
    """d alpha(x, y) = x(alpha(y)) - y(alpha(x)) for constant coordinate fields, by central differences."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    n = sample.ray.p.size
    z = np.concatenate([sample.ray.p, sample.ray.v])
    x_of_y = (_alpha_at(z + step * x, y, n) - _alpha_at(z - step * x, y, n)) / (2.0 * step)
    y_of_x = (_alpha_at(z + step * y, x, n) - _alpha_at(z - step * y, x, n)) / (2.0 * step)
    return x_of_y - y_of_x


class ReebReport(BaseModel):
    time: float
    alpha_of_X: float
    max_dalpha_contraction: float


def verify_reeb_conditions(ham: ContactHamiltonian, t: float, sample: ContactSample,
                           vector_field: Optional[np.ndarray] = None, step: float = DALPHA_STEP) -> ReebReport:
    """alpha_t(X) and max_b |d alpha_t(X, b)| over the co-sphere frame, X the flow generator unless given."""
    _check_on_sphere(ham, t, sample)
    x = reeb_field(ham, t, sample) if vector_field is None else np.asarray(vector_field, dtype=float)
    contraction = max(abs(dalpha(sample, x, b, step)) for b in sample.frame)
    return ReebReport(time=t, alpha_of_X=liouville_pairing(sample.ray.v, x), max_dalpha_contraction=contraction)


def contact_volume(ham: ContactHamiltonian, t: float, sample: ContactSample) -> float:
    """alpha ∧ (d alpha)^{n-1} on the co-sphere frame, normalized by the Liouville field length."""
    _check_on_sphere(ham, t, sample)
    n = sample.ray.p.size
    liouville = np.concatenate([np.zeros(n), sample.ray.v])
    matrix = np.column_stack([liouville / np.linalg.norm(liouville), sample.frame.T])
    return math.factorial(n - 1) * abs(float(np.linalg.det(matrix)))


def ray_distance(manifold: BaseManifold, first: RayPoint, second: RayPoint) -> float:
    return float(np.linalg.norm(manifold.displacement(first.p, second.p)) + ray_angle(first.v, second.v))


def positivity_margins(path: PositivePath, t: float, p, v, normalization: Normalization = Normalization.UNIT_DUAL,
                       delta: float = MARGIN_STEP) -> np.ndarray:
    """lambda(d/dt phi_t(v)) for a batch of rays given at time 0."""
    ham = path.hamiltonian
    pt, vt = path.transport(0.0, t, p, v)
    ahead = integrate_rays(ham, pt, vt, t, t + delta, step=delta, record=False)
    behind = integrate_rays(ham, pt, vt, t, t - delta, step=delta, record=False)
    dp = (ahead.p[-1] - behind.p[-1]) / (2.0 * delta)
    if normalization is Normalization.UNIT_DUAL:
        rep = vt / np.abs(ham.value(t, pt, vt))[:, None]
    else:
        rep = vt / np.linalg.norm(vt, axis=1, keepdims=True)
    return np.einsum("qi,qi->q", rep, dp)


def positivity_margin(path: PositivePath, t: float, ray: RayPoint,
                      normalization: Normalization = Normalization.UNIT_DUAL) -> float:
    return float(positivity_margins(path, t, ray.p, ray.v, normalization)[0])


@dataclass(frozen=True, eq=False)
class Sky:
    """Rays at time 0 of the cone geodesics through (t, p), one per covector sample."""

    t: float
    point: np.ndarray
    p: np.ndarray
    v: np.ndarray

    def rays(self) -> List[RayPoint]:
        return [RayPoint(pi, vi) for pi, vi in zip(self.p, self.v)]


def _sky_covectors(n: int, m: Optional[int], covectors) -> np.ndarray:
    if covectors is not None:
        return np.atleast_2d(np.asarray(covectors, dtype=float))
    return direction_set(n, m or DEFAULT_SKY_SAMPLES[n])


def sky(path: PositivePath, event, m: Optional[int] = None, covectors=None) -> Sky:
    """{phi_t^{-1}(p, u_i)}; ``event`` is a SpacetimeEvent or a (t, p) pair."""
    t, point = (event.t, as_array(event.p)) if hasattr(event, "t") else (event[0], as_array(event[1]))
    point = np.atleast_1d(point).astype(float)
    u = _sky_covectors(path.dimension, m, covectors)
    p0, v0 = path.transport(t, 0.0, np.broadcast_to(point, u.shape), u)
    return Sky(float(t), point, p0, v0)


class SkyVerdict(str, Enum):
    TIMELIKE = "timelike-consistent"
    CAUSAL = "causal-consistent"
    NOT_CAUSAL = "not causal"


class SkyIsotopyReport(BaseModel):
    min_margin: float
    max_margin: float
    min_abs_margin: float
    verdict: SkyVerdict
    sign_convention: str = SIGN_CONVENTION
    s: List[float]
    margins: List[List[float]]


@dataclass(frozen=True, eq=False)
class SkyIsotopy:
    curve: SpacetimeCurve
    p: np.ndarray
    v: np.ndarray
    margins: np.ndarray

    def sky_at(self, index: int) -> Sky:
        return Sky(float(self.curve.t[index]), self.curve.p[index], self.p[index], self.v[index])


def sky_isotopy(path: PositivePath, curve: SpacetimeCurve, m: Optional[int] = None, covectors=None) -> SkyIsotopy:
    """Skies along a curve, pulled back to time 0 in one batched sweep, with their lambda-margins.

    ``covectors`` is one (m, n) set shared by every sample or a (k, m, n) stack, one set per sample.
    """
    k = curve.s.size
    u = _sky_covectors(path.dimension, m, covectors)
    if u.ndim == 3 and len(u) != k:
        raise DomainError("Per-sample sky covectors must match the curve samples.", error_code=400)
    u = np.broadcast_to(u, (k,) + u.shape[-2:])
    rays = u.shape[1]
    starts = np.repeat(curve.t, rays)
    points = np.repeat(curve.p, rays, axis=0)
    p0, v0 = path.transport(starts, 0.0, points, u.reshape(k * rays, -1))
    p0, v0 = p0.reshape(k, rays, -1), v0.reshape(k, rays, -1)
    velocity = np.gradient(p0, curve.s, axis=0)
    rep = v0 / np.abs(path.hamiltonian.value(0.0, p0, v0))[..., None]
    margins = np.einsum("kri,kri->kr", rep, velocity)
    return SkyIsotopy(curve, p0, v0, margins)


def sky_isotopy_positivity(path: PositivePath, curve: SpacetimeCurve, m: Optional[int] = None,
                           tol: float = SPHERE_TOL, covectors=None) -> SkyIsotopyReport:
    isotopy = sky_isotopy(path, curve, m, covectors)
    margins = isotopy.margins
    if np.all(margins < -tol):
        verdict = SkyVerdict.TIMELIKE
    elif np.all(margins <= tol):
        verdict = SkyVerdict.CAUSAL
    else:
        verdict = SkyVerdict.NOT_CAUSAL
    logger.info("Sky isotopy over %d samples: %s", len(margins), verdict.value)
    return SkyIsotopyReport(
        min_margin=float(margins.min()),
        max_margin=float(margins.max()),
        min_abs_margin=float(np.abs(margins).min()),
        verdict=verdict,
        s=[float(x) for x in curve.s],
        margins=margins.tolist(),
    )
