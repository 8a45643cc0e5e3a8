"""Cone structures on R x Sigma and locally Lipschitz Lorentz-Finsler spaces."""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, List, Optional

import numpy as np
from pydantic import BaseModel, Field

from .base_geometry import BaseManifold, FinslerFamily, MetricKind
from .convex_duality import Box, StarBody, is_convex, lipschitz_estimate, polar, support_function
from .directions import direction_set
from .utils import DomainError, as_array

logger = logging.getLogger(__name__)

NULL_TOL = 1e-9


class CausalCharacter(str, Enum):
    FUTURE_TIMELIKE = "future-timelike"
    FUTURE_NULL = "future-null"
    PAST_TIMELIKE = "past-timelike"
    PAST_NULL = "past-null"
    NON_CAUSAL = "non-causal"

    @property
    def is_causal(self) -> bool:
        return self is not CausalCharacter.NON_CAUSAL

    @property
    def is_future(self) -> bool:
        return self in (CausalCharacter.FUTURE_TIMELIKE, CausalCharacter.FUTURE_NULL)

    @property
    def opposite(self) -> "CausalCharacter":
        """The character of -v."""
        if not self.is_causal:
            return self
        old, new = ("future", "past") if self.is_future else ("past", "future")
        return CausalCharacter(self.value.replace(old, new))


@dataclass(frozen=True, eq=False)
class ConeStructure:
    """The splitting cone C = {w0 >= F_t(w)} defined by L = dt^2 - F_t^2."""

    base: BaseManifold
    finsler: FinslerFamily

    def __post_init__(self):
        if self.base.dimension != self.finsler.dimension:
            raise DomainError("Metric family and base manifold disagree on dimension.", error_code=400)

    def contains(self, t, p, sv, tol: float = NULL_TOL) -> np.ndarray:
        """Vectorized membership of spacetime vectors (rows (w0, w)) in C."""
        sv = np.atleast_2d(as_array(sv))
        w0, w = sv[:, 0], sv[:, 1:]
        f = self.finsler.norm(t, as_array(p), w, allow_zero=True)
        scale = np.linalg.norm(sv, axis=1)
        return (w0 > 0.0) & (w0 - f >= -tol * scale)

    def dual_co_ball(self, t, p, count: Optional[int] = None) -> StarBody:
        """{v : F*_t(p, v) <= 1}."""
        fam, p = self.finsler, as_array(p)
        exact = fam.kind is not MetricKind.CUSTOM
        return StarBody.from_radial(
            lambda u: 1.0 / fam.dual(t, p, u)[0], fam.dimension, count,
            support=(lambda w: fam.norm(t, p, w)) if exact else None,
        )


def classify(cone: ConeStructure, t, p, sv) -> CausalCharacter:
    sv = as_array(sv).reshape(-1)
    if not np.all(np.isfinite(sv)) or np.linalg.norm(sv) == 0.0:
        raise DomainError("Cannot classify the zero vector.", error_code=400)
    w0, w = sv[0], sv[1:]
    if np.linalg.norm(w) == 0.0:
        return CausalCharacter.FUTURE_TIMELIKE if w0 > 0.0 else CausalCharacter.PAST_TIMELIKE
    if w0 == 0.0:
        return CausalCharacter.NON_CAUSAL
    tol = NULL_TOL * np.linalg.norm(sv)
    future = w0 > 0.0
    gap = abs(w0) - float(cone.finsler.norm(t, as_array(p), w if future else -w))
    if gap > tol:
        return CausalCharacter.FUTURE_TIMELIKE if future else CausalCharacter.PAST_TIMELIKE
    if gap >= -tol:
        return CausalCharacter.FUTURE_NULL if future else CausalCharacter.PAST_NULL
    return CausalCharacter.NON_CAUSAL


def cone_slice(cone: ConeStructure, t, p, count: Optional[int] = None) -> StarBody:
    """The unit Finsler ball {w : F_t(p, w) <= 1} = ({dt = 1} ∩ C) - ∂_t."""
    fam, p = cone.finsler, as_array(p)
    exact = fam.kind is not MetricKind.CUSTOM
    return StarBody.from_radial(
        lambda u: 1.0 / fam.norm(t, p, u), fam.dimension, count,
        support=(lambda w: fam.dual(t, p, w)[0]) if exact else None,
    )


@dataclass(frozen=True, eq=False)
class LorentzFinslerSpace:
    """A cone given fibre-wise by a co-ball K_t(p), with G = w0 - max_{v in K} v(w)."""

    base: BaseManifold
    co_ball: Callable[[float, np.ndarray], StarBody]
    label: str = ""
    # the positive path this space was induced by, if any
    path: Optional[Any] = None

    @property
    def dimension(self) -> int:
        return self.base.dimension

    def G(self, t, p, sv) -> np.ndarray:
        sv = np.asarray(sv, dtype=float)
        single = sv.ndim == 1
        sv = np.atleast_2d(sv)
        w0, w = sv[:, 0], sv[:, 1:]
        nonzero = np.linalg.norm(w, axis=1) > 0.0
        h = np.zeros(len(sv))
        if np.any(nonzero):
            h[nonzero] = support_function(self.co_ball(t, as_array(p)), w[nonzero])
        values = w0 - h
        return float(values[0]) if single else values

    def contains(self, t, p, sv, tol: float = NULL_TOL) -> np.ndarray:
        sv = np.atleast_2d(np.asarray(sv, dtype=float))
        scale = np.linalg.norm(sv, axis=1)
        return (scale > 0.0) & (np.atleast_1d(self.G(t, p, sv)) >= -tol * scale)

    def slice(self, t, p) -> StarBody:
        """C ∩ {dt = 1} - ∂_t, the polar of the co-ball."""
        return polar(self.co_ball(t, as_array(p)))


def lorentz_finsler_space(cone: ConeStructure) -> LorentzFinslerSpace:
    return LorentzFinslerSpace(cone.base, cone.dual_co_ball, label=f"cone:{cone.finsler.description}")


def G_eval(space: LorentzFinslerSpace, t, p, sv) -> float:
    return space.G(t, p, as_array(sv).reshape(-1))


def doubled_slice(space: LorentzFinslerSpace, t, p, count: Optional[int] = None) -> StarBody:
    """C^× ∩ {dt = 1} = {(a, w) : h_K(w) + |a| <= 1}, the polar of A = ∪_{|λ|<=1} (K + λ ds)."""
    n = space.dimension
    if n + 1 > 3:
        raise DomainError("Doubled slices are available for base dimension n <= 2.", error_code=400)
    co_ball = space.co_ball(t, as_array(p))
    slice_ = polar(co_ball)

    def part(fn, beta):
        out = np.zeros(len(beta))
        nz = np.linalg.norm(beta, axis=1) > 0.0
        if np.any(nz):
            out[nz] = fn(beta[nz])
        return out

    def radial(u):
        return 1.0 / (np.abs(u[:, 0]) + part(lambda b: support_function(co_ball, b), u[:, 1:]))

    def support(x):
        x = np.atleast_2d(x)
        return np.maximum(np.abs(x[:, 0]), part(lambda b: support_function(slice_, b), x[:, 1:]))

    return StarBody.from_radial(radial, n + 1, count, support=support)


class Violation(BaseModel):
    name: str
    location: List[float]
    magnitude: float


class SliceVerdict(BaseModel):
    location: List[float]
    convex: bool


class LorentzFinslerReport(BaseModel):
    """Numerical witness that (R x Sigma, C, G) is a locally Lipschitz Lorentz-Finsler space."""

    label: str = ""
    homogeneity_violation: float = 0.0
    concavity_violation: float = 0.0
    slices: List[SliceVerdict] = Field(default_factory=list)
    lipschitz_estimate: Optional[float] = None
    violations: List[Violation] = Field(default_factory=list)

    def passed(self, tol: float = 1e-6) -> bool:
        return (
            self.homogeneity_violation <= tol
            and self.concavity_violation <= tol
            and all(v.convex for v in self.slices)
            and self.lipschitz_estimate is not None
            and np.isfinite(self.lipschitz_estimate)
        )


def _cone_samples(rng, co_ball: StarBody, count: int) -> np.ndarray:
    w = rng.normal(size=(count, co_ball.dimension))
    w0 = support_function(co_ball, w) + np.abs(rng.normal(size=count))
    return np.column_stack([w0, w])


def check_lorentz_finsler_space(space: LorentzFinslerSpace, region: Box, step: float, pairs: int = 500,
                                seed: int = 0, directions: Optional[int] = None) -> LorentzFinslerReport:
    """Sample homogeneity and concavity of G, slice convexity, and the Lipschitz constant of C^×.

    ``region`` is a box over (t, p); fibres are sampled on its grid with spacing ``step``.
    """
    rng = np.random.default_rng(seed)
    report = LorentzFinslerReport(label=space.label)
    axes = region.grid(step)
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    for node in nodes:
        t, p = float(node[0]), node[1:]
        location = [float(x) for x in node]
        co_ball = space.co_ball(t, p)

        sv = _cone_samples(rng, co_ball, pairs)
        lam = rng.uniform(0.0, 10.0, size=pairs) + 1e-3
        homogeneity = np.abs(space.G(t, p, lam[:, None] * sv) - lam * space.G(t, p, sv))
        other = _cone_samples(rng, co_ball, pairs)
        midpoint = 0.5 * (space.G(t, p, sv) + space.G(t, p, other)) - space.G(t, p, 0.5 * (sv + other))
        concavity = np.maximum(midpoint, 0.0)
        report.homogeneity_violation = max(report.homogeneity_violation, float(homogeneity.max()))
        report.concavity_violation = max(report.concavity_violation, float(concavity.max()))
        if concavity.max() > 0.0:
            report.violations.append(Violation(name="concavity", location=location,
                                               magnitude=float(concavity.max())))

        convex = is_convex(space.slice(t, p))
        report.slices.append(SliceVerdict(location=location, convex=convex))
        if not convex:
            report.violations.append(Violation(name="nonconvex_slice", location=location, magnitude=1.0))

    lower = [0.0] + list(region.lower)
    upper = [step] + list(region.upper)
    dirs = None if directions is None else direction_set(space.dimension + 1, directions)
    try:
        report.lipschitz_estimate = lipschitz_estimate(
            lambda x: doubled_slice(space, float(x[1]), x[2:], count=directions), Box(lower, upper), step, dirs
        )
    except DomainError as exc:
        logger.warning("Doubled slice check failed: %s", exc)
        report.violations.append(Violation(name="nonconvex_doubled_slice", location=lower, magnitude=1.0))
    logger.info("Lorentz-Finsler check %s: homogeneity %.3g, concavity %.3g, Lipschitz %s", space.label,
                report.homogeneity_violation, report.concavity_violation, report.lipschitz_estimate)
    return report
