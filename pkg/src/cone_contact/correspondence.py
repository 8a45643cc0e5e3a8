"""Cone structures to positive paths and back, with roundtrip and crossing checks."""
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field
from scipy.interpolate import CubicSpline

from .base_geometry import BaseManifold, FinslerFamily
from .cone_structures import ConeStructure, LorentzFinslerSpace, cone_slice
from .contact_layer import positivity_margins
from .convex_duality import StarBody, hausdorff_distance
from .directions import direction_set
from .dynamics import (
    DEFAULT_HORIZON,
    DEFAULT_STEP,
    DualFinslerHamiltonian,
    PositivePath,
    integrate_rays,
)
from .utils import DomainError, PathNotPositiveError

logger = logging.getLogger(__name__)

GAUGE_TOL = 1e-12
GAUGE_LIMIT = 1e12
CO_BALL_MODES = ("generator", "flow")


def path_from_cone(cone: ConeStructure, step: float = DEFAULT_STEP, horizon: float = DEFAULT_HORIZON) -> PositivePath:
    """The path generated by H_t = F*_t, the Reeb flow of the co-sphere forms alpha_t."""
    return PositivePath(DualFinslerHamiltonian(cone.finsler), step, horizon, label=f"path:{cone.finsler.description}")


def _gauge(member, w: np.ndarray, tol: float = GAUGE_TOL, max_iter: int = 400) -> np.ndarray:
    """inf {s > 0 : (s, w) in C} by vectorized bisection on a membership oracle."""
    lo = np.zeros(len(w))
    hi = np.ones(len(w))
    while True:
        inside = member(np.column_stack([hi, w]))
        if np.all(inside):
            break
        if np.max(hi) > GAUGE_LIMIT:
            raise DomainError("Cone slice does not contain the origin in its interior.", error_code=400)
        lo = np.where(inside, lo, hi)
        hi = np.where(inside, hi, 2.0 * hi)
    for _ in range(max_iter):
        if np.all(hi - lo <= tol * hi):
            return hi
        mid = 0.5 * (lo + hi)
        inside = member(np.column_stack([mid, w]))
        hi = np.where(inside, mid, hi)
        lo = np.where(inside, lo, mid)
    return hi


def finsler_from_cone_slices(cone, dimension: Optional[int] = None) -> FinslerFamily:
    """Recover F_t as the gauge of the slices, querying the cone only through membership."""
    n = dimension or cone.base.dimension
    vectorized = isinstance(cone, ConeStructure)

    def func(t, p, w):
        t, p, w = np.broadcast_arrays(np.asarray(t, float)[..., None], np.asarray(p, float), np.asarray(w, float))
        lead = w.shape[:-1]
        flat_t, flat_p, flat_w = t[..., 0].reshape(-1), p.reshape(-1, n), w.reshape(-1, n)
        if vectorized:
            values = _gauge(lambda sv: cone.contains(flat_t, flat_p, sv, tol=0.0), flat_w)
        else:
            values = np.array([
                _gauge(lambda sv, ti=ti, pi=pi: cone.contains(ti, pi, sv, tol=0.0), wi[None, :])[0]
                for ti, pi, wi in zip(flat_t, flat_p, flat_w)
            ])
        return values.reshape(lead)

    return FinslerFamily.custom(func, n, description="gauge")


def _flow_margins(path: PositivePath, t: float, p: np.ndarray, u: np.ndarray) -> np.ndarray:
    """alpha(X_t) at unit Euclidean covectors, X_t the central time difference of the propagator."""
    delta = path.step
    points = np.broadcast_to(p, u.shape)
    ahead = integrate_rays(path.hamiltonian, points, u, t, t + delta, step=delta, record=False)
    behind = integrate_rays(path.hamiltonian, points, u, t, t - delta, step=delta, record=False)
    return np.einsum("qi,qi->q", u, ahead.p[-1] - behind.p[-1]) / (2.0 * delta)


def flow_co_ball(path: PositivePath, t: float, p, count: Optional[int] = None) -> StarBody:
    """K_t^f measured from the flow: radius 1 / alpha(X_t^f) at unit covectors."""
    p = np.asarray(p, dtype=float)
    n = path.dimension
    u = direction_set(n, count)
    margins = _flow_margins(path, t, p, u)
    if np.any(margins <= 0.0):
        raise PathNotPositiveError(f"path not positive: margin {margins.min():.3g} at t = {t}.", error_code=400)
    radii = 1.0 / margins
    if n == 1:
        def radial(w):
            return np.where(w[:, 0] >= 0.0, radii[np.argmax(u[:, 0])], radii[np.argmin(u[:, 0])])
    elif n == 2:
        theta = np.mod(np.arctan2(u[:, 1], u[:, 0]), 2.0 * np.pi)
        order = np.argsort(theta)
        spline = CubicSpline(np.append(theta[order], theta[order][0] + 2.0 * np.pi),
                             np.append(radii[order], radii[order][0]), bc_type="periodic")

        def radial(w):
            return spline(np.mod(np.arctan2(w[:, 1], w[:, 0]), 2.0 * np.pi))
    else:
        def radial(w):
            return 1.0 / _flow_margins(path, t, p, w)
    return StarBody(u, radii, radial=radial)


def _require_positive(path: PositivePath, base: BaseManifold, times: Optional[Sequence[float]] = None) -> None:
    """Positivity margins on 8 directions at the origin and the default slice-grid points."""
    n = path.dimension
    u = direction_set(n, 8 if n > 1 else None)
    grid = SliceGrid.default(base, times=3, points=4)
    times = grid.times if times is None else times
    points = np.vstack([np.zeros(n), np.asarray(grid.points, dtype=float)])
    p = np.repeat(points, len(u), axis=0)
    v = np.tile(u, (len(points), 1))
    for t in times:
        if abs(t) > path.horizon:
            continue
        margins = positivity_margins(path, t, p, v)
        if not np.all(margins > 0.0):
            worst = int(np.argmin(np.where(np.isnan(margins), -np.inf, margins)))
            raise PathNotPositiveError(f"path not positive: margin {margins[worst]:.3g} at t = {t}, "
                                       f"p = {p[worst].tolist()}.", error_code=400)


def cone_from_path(path: PositivePath, base: Optional[BaseManifold] = None, co_ball: str = "generator",
                   count: Optional[int] = None, check_times: Optional[Sequence[float]] = None) -> LorentzFinslerSpace:
    """C_f = union of s (d_t + (K_t^f)°) with G_f = w0 - h_{K_t^f}(w).

    ``co_ball`` selects how K_t^f is read: from the generator (exact) or measured from the flow.
    """
    if co_ball not in CO_BALL_MODES:
        raise DomainError(f"Unknown co-ball mode {co_ball!r}.", error_code=400)
    base = base or BaseManifold(path.dimension)
    _require_positive(path, base, check_times)
    if co_ball == "generator":
        def field_(t, p):
            return path.hamiltonian.co_ball(t, p, count)
    else:
        def field_(t, p):
            return flow_co_ball(path, t, p, count)
    return LorentzFinslerSpace(base, field_, label=f"{co_ball}:{path.label}", path=path)


@dataclass(frozen=True)
class SliceGrid:
    """Fibres (t, p) at which slices are compared."""

    times: Sequence[float]
    points: Sequence[Sequence[float]]

    @classmethod
    def default(cls, base: BaseManifold, times: int = 5, points: int = 8, t_max: float = 1.0) -> "SliceGrid":
        extent = np.asarray(base.periods if base.is_torus else (1.0,) * base.dimension)
        generators = np.array([1, 3, 5][: base.dimension])
        k = np.arange(points)[:, None]
        lattice = np.mod(generators * k, points) / points * extent
        return cls(tuple(np.linspace(0.0, t_max, times)), tuple(map(tuple, lattice)))


class RoundtripCell(BaseModel):
    t: float
    p: List[float]
    hausdorff: float
    g_error: float


class RoundtripReport(BaseModel):
    """Slice and G discrepancies between a cone and the cone of its induced path."""

    label: str = ""
    co_ball: str = "flow"
    step: float
    directions: Optional[int] = None
    tolerance: float
    seed: int = 0
    cells: List[RoundtripCell] = Field(default_factory=list)
    max_hausdorff: float = 0.0
    max_g_error: float = 0.0
    passed: bool = False


def roundtrip_check(cone: ConeStructure, grid: Optional[SliceGrid] = None, step: float = DEFAULT_STEP,
                    directions: Optional[int] = None, tolerance: float = 1e-3, samples: int = 64, seed: int = 0,
                    co_ball: str = "flow") -> RoundtripReport:
    """path_from_cone then cone_from_path; compares slices by Hausdorff distance and G by sampling."""
    grid = grid or SliceGrid.default(cone.base)
    rng = np.random.default_rng(seed)
    path = path_from_cone(cone, step)
    space = cone_from_path(path, base=cone.base, co_ball=co_ball, count=directions)
    n = cone.base.dimension
    report = RoundtripReport(label=space.label, co_ball=co_ball, step=step, directions=directions,
                             tolerance=tolerance, seed=seed)
    for t in grid.times:
        for point in grid.points:
            p = np.asarray(point, dtype=float)
            distance = hausdorff_distance(space.slice(t, p), cone_slice(cone, t, p, directions))
            w = rng.normal(size=(samples, n))
            f = cone.finsler.norm(t, p, w)
            sv = np.column_stack([f + np.abs(rng.normal(size=samples)), w])
            g_error = float(np.max(np.abs(space.G(t, p, sv) - (sv[:, 0] - f))))
            report.cells.append(RoundtripCell(t=float(t), p=[float(x) for x in p], hausdorff=distance,
                                              g_error=g_error))
            logger.debug("Roundtrip cell t=%.3g p=%s: hausdorff %.3g, G %.3g", t, p, distance, g_error)
    report.max_hausdorff = max(c.hausdorff for c in report.cells)
    report.max_g_error = max(c.g_error for c in report.cells)
    report.passed = report.max_hausdorff <= tolerance and report.max_g_error <= tolerance
    logger.info("Roundtrip %s: max hausdorff %.3g, max G error %.3g", space.label, report.max_hausdorff,
                report.max_g_error)
    return report


class RayCrossing(BaseModel):
    ray: int
    crossings: int
    min_causal_residual: float
    blown_up: bool


class CrossingReport(BaseModel):
    """Evidence, not proof, about Cauchy crossings of the extremals of C_f."""

    label: str = "experimental"
    experimental: bool = True
    horizon: float
    surface: str = "t = 0"
    rays: List[RayCrossing] = Field(default_factory=list)
    single_crossing_fraction: float = 0.0
    blown_up: int = 0


Surface = Callable[[np.ndarray], np.ndarray]


def _sweep(path: PositivePath, p, v, horizon: float, segments: int):
    """Sequential transports over [0, +-horizon].

    Returns the segment times and states, every integrator sample of the base points, and the
    blow-up mask. Rays that blew up are NaN from the blow-up on.
    """
    times = np.linspace(0.0, horizon, segments + 1)
    states = [(p, v)]
    dense_t, dense_p = [np.zeros(1)], [p[None].copy()]
    blown = np.zeros(len(p), dtype=bool)
    for a, b in zip(times[:-1], times[1:]):
        alive = ~blown
        ps, vs = np.full(p.shape, np.nan), np.full(v.shape, np.nan)
        if np.any(alive):
            traj = integrate_rays(path.hamiltonian, states[-1][0][alive], states[-1][1][alive], a, b, path.step,
                                  strict=False)
            ps[alive], vs[alive] = traj.p[-1], traj.covectors[-1]
            track = traj.p[1:].copy()
            # frozen rays stop moving at their blow-up time
            track[np.abs(traj.t[1:, None] - a) > np.abs(traj.blowup_time[None, :] - a)] = np.nan
            samples = np.full((len(track),) + p.shape, np.nan)
            samples[:, alive] = track
            dense_t.append(traj.t[1:])
            dense_p.append(samples)
            blown[alive] = traj.blown_up
        ps[blown], vs[blown] = np.nan, np.nan
        states.append((ps, vs))
    return times, states, np.concatenate(dense_t), np.concatenate(dense_p), blown


def _count_crossings(offsets: np.ndarray) -> int:
    """Sign changes of t - sigma(p) along one extremal, skipping exact zeros and missing samples."""
    signs = np.sign(offsets[np.isfinite(offsets)])
    signs = signs[signs != 0.0]
    return int(np.sum(signs[1:] != signs[:-1]))


def cauchy_crossing_probe(space: LorentzFinslerSpace, rays=None, horizon: float = 5.0, count: int = 200,
                          seed: int = 0, segments: int = 10, surface: Optional[Surface] = None,
                          surface_label: Optional[str] = None) -> CrossingReport:
    """Follow t -> (t, pi(f_t(v))) over [-T, T], counting crossings of the hypersurface
    {t = sigma(p)} (the slice {t = 0} by default) and recording blow-ups and the minimum of
    G_f(1, w~) at the segment ends.

    Crossings are sign changes of t - sigma(p) between integrator samples. A spacelike graph is
    crossed once by every extremal that reaches it; steep surfaces can be crossed several times.
    """
    path = space.path
    if path is None:
        raise DomainError("The crossing probe needs a space induced by a path.", error_code=400)
    if horizon > path.horizon:
        raise DomainError(f"Probe horizon {horizon} exceeds the path horizon.", error_code=400)
    n = path.dimension
    if rays is None:
        rng = np.random.default_rng(seed)
        extent = np.asarray(space.base.periods if space.base.is_torus else (1.0,) * n)
        p = rng.uniform(0.0, 1.0, size=(count, n)) * extent
        v = rng.normal(size=(count, n))
    else:
        p, v = (np.atleast_2d(np.asarray(x, dtype=float)) for x in rays)
    ham = path.hamiltonian
    forward_t, forward, forward_dense_t, forward_dense_p, forward_blown = _sweep(path, p, v, horizon, segments)
    backward_t, backward, backward_dense_t, backward_dense_p, backward_blown = _sweep(
        path, p, v, -horizon, segments)
    # stitch [-T, 0) and [0, T] together
    times = np.concatenate([backward_t[:0:-1], forward_t])
    states = backward[:0:-1] + forward
    dense_t = np.concatenate([backward_dense_t[:0:-1], forward_dense_t])
    dense_p = np.concatenate([backward_dense_p[:0:-1], forward_dense_p])
    blown = forward_blown | backward_blown

    finite = np.all(np.isfinite(dense_p), axis=-1)
    offsets = np.full(finite.shape, np.nan)
    heights = np.zeros(int(finite.sum())) if surface is None else surface(dense_p[finite])
    offsets[finite] = np.broadcast_to(dense_t[:, None], finite.shape)[finite] - heights

    label = surface_label or ("t = 0" if surface is None else "t = sigma(p)")
    report = CrossingReport(horizon=horizon, surface=label)
    for i in range(len(p)):
        residuals = []
        for t, (ps, vs) in zip(times, states):
            if not np.all(np.isfinite(ps[i])):
                continue
            w = ham.velocity(t, ps[i], vs[i])
            residuals.append(space.G(t, ps[i], np.concatenate([[1.0], w])))
        report.rays.append(RayCrossing(ray=i, crossings=_count_crossings(offsets[:, i]),
                                       min_causal_residual=float(min(residuals)), blown_up=bool(blown[i])))
    report.blown_up = int(blown.sum())
    single = [r.crossings == 1 and not r.blown_up for r in report.rays]
    report.single_crossing_fraction = float(np.mean(single)) if single else 0.0
    logger.info("Crossing probe (experimental) of %s over %d rays: %.1f%% single crossings, %d blow-ups",
                report.surface, len(report.rays), 100.0 * report.single_crossing_fraction, report.blown_up)
    return report
