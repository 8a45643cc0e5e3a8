"""Scenario files: TOML documents validated by pydantic models, with a small expression grammar
for time- and position-dependent coefficients.
"""
import ast
import logging
import operator
import re

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, FrozenSet, Iterable, List, Literal, Optional, Tuple, Union

import numpy as np
import tomli_w
from pydantic import (BaseModel, ConfigDict, Field, ValidationError, ValidationInfo, field_validator,
                      model_validator)

from .base_geometry import BaseManifold, FinslerFamily, Topology
from .cone_structures import ConeStructure
from .correspondence import path_from_cone
from .dynamics import GaugeHamiltonian, PositivePath
from .utils import ScenarioError

logger = logging.getLogger(__name__)

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt, "abs": np.abs}
CONSTANTS = {"pi": np.pi, "e": np.e}
BINARY = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv,
          ast.Pow: operator.pow}
UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
COORDINATES = ("x", "y", "z")
TANGENTS = ("w1", "w2", "w3")


@dataclass(frozen=True)
class Expression:
    source: str
    tree: ast.AST
    variables: FrozenSet[str]

    @property
    def is_constant(self) -> bool:
        return not self.variables

    def __call__(self, **values):
        return _evaluate(self.tree, values)


def _evaluate(node, values):
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        return CONSTANTS[node.id] if node.id in CONSTANTS else values[node.id]
    if isinstance(node, ast.BinOp):
        return BINARY[type(node.op)](_evaluate(node.left, values), _evaluate(node.right, values))
    if isinstance(node, ast.UnaryOp):
        return UNARY[type(node.op)](_evaluate(node.operand, values))
    return FUNCTIONS[node.func.id](_evaluate(node.args[0], values))


def _check_node(node, allowed: FrozenSet[str], used: set, source: str):
    def reject(what):
        raise ScenarioError(f"Expression {source!r}: {what} is not allowed.")

    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            reject(f"literal {node.value!r}")
    elif isinstance(node, ast.Name):
        if node.id in CONSTANTS:
            return
        if node.id not in allowed:
            reject(f"name {node.id!r}")
        used.add(node.id)
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in BINARY:
            reject(f"operator {type(node.op).__name__}")
        _check_node(node.left, allowed, used, source)
        _check_node(node.right, allowed, used, source)
    elif isinstance(node, ast.UnaryOp):
        if type(node.op) not in UNARY:
            reject(f"operator {type(node.op).__name__}")
        _check_node(node.operand, allowed, used, source)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
            reject("this function")
        if len(node.args) != 1 or node.keywords:
            reject(f"calling {node.func.id} with other than one argument")
        _check_node(node.args[0], allowed, used, source)
    else:
        reject(type(node).__name__)


def parse_expression(source: Union[str, float, int], allowed: Iterable[str]) -> Expression:
    """Parse numbers, pi, e, + - * / **, unary minus and sin cos exp sqrt abs over ``allowed`` names."""
    text = repr(float(source)) if isinstance(source, (int, float)) else str(source)
    try:
        tree = ast.parse(text.strip(), mode="eval").body
    except SyntaxError as exc:
        raise ScenarioError(f"Expression {text!r} does not parse: {exc.msg}.")
    used: set = set()
    _check_node(tree, frozenset(allowed), used, text)
    return Expression(text, tree, frozenset(used))


def _checked(entry, allowed, key: str, section: str = "metric") -> None:
    try:
        parse_expression(entry, allowed)
    except ScenarioError as exc:
        exc.loc = (section, key)
        raise


Expr = Union[float, str]


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TaskName(str, Enum):
    GEODESICS = "geodesics"
    ROUNDTRIP = "roundtrip"
    POSITIVITY = "positivity"
    SKIES = "skies"
    LIPSCHITZ = "lipschitz"
    PROBE = "probe"


CONE_TASKS = {TaskName.GEODESICS, TaskName.ROUNDTRIP}


class ManifoldConfig(StrictModel):
    dimension: int = Field(2, ge=1, le=3)
    topology: Topology = Topology.EUCLIDEAN
    periods: Optional[List[float]] = None

    @field_validator("periods")
    @classmethod
    def _check_periods(cls, value, info: ValidationInfo):
        if value is None:
            return value
        n = info.data.get("dimension")
        if n is not None and len(value) != n:
            raise ValueError(f"expected {n} periods, got {len(value)}")
        if not all(np.isfinite(x) and x > 0.0 for x in value):
            raise ValueError("torus periods must be positive and finite")
        return value


class MetricConfig(StrictModel):
    kind: Literal["euclidean", "riemannian", "randers", "custom", "gauge"]
    a: Optional[List[List[Expr]]] = None
    b: Optional[List[Expr]] = None
    norm: Optional[str] = None
    radius: Optional[str] = None
    dual_directions: int = Field(512, ge=256)

    @model_validator(mode="after")
    def _check_fields(self):
        needed = {"riemannian": ("a",), "randers": ("a", "b"), "custom": ("norm",), "gauge": ("radius",)}
        for name in needed.get(self.kind, ()):
            if getattr(self, name) is None:
                raise ValueError(f"metric kind {self.kind!r} needs {name!r}")
        return self


class IntegratorConfig(StrictModel):
    step: float = Field(1e-3, gt=0.0)
    horizon: float = Field(10.0, gt=0.0, le=10.0)


class GridConfig(StrictModel):
    times: int = Field(5, ge=1)
    t_max: float = 1.0
    points: int = Field(8, ge=1)
    directions: Optional[int] = Field(None, ge=256)
    g_samples: int = Field(64, ge=1)
    rays: int = Field(20, ge=1)
    geodesic_t_max: float = Field(1.0, gt=0.0)
    sky_samples: Optional[int] = Field(None, ge=2)
    sky_curve_samples: int = Field(11, ge=3)
    sky_t_max: float = Field(1.0, gt=0.0)
    lipschitz_step: float = Field(0.5, gt=0.0)
    lipschitz_t_max: float = Field(0.5, ge=0.0)
    lipschitz_extent: float = Field(0.5, ge=0.0)
    lipschitz_pairs: int = Field(200, ge=1)
    lipschitz_directions: Optional[int] = Field(None, ge=256)
    probe_rays: int = Field(200, ge=1)
    probe_horizon: float = Field(5.0, gt=0.0)
    probe_segments: int = Field(10, ge=1)
    # height sigma(x, y, z) of the hypersurface {t = sigma} whose crossings are counted
    probe_surface: Expr = 0.0


class ToleranceConfig(StrictModel):
    geodesic: float = 1e-4
    null: float = 1e-5
    roundtrip: float = 1e-3
    reeb: float = 1e-5
    dalpha: float = 1e-4
    volume: float = 1e-8
    sky: float = 1e-5
    sky_timelike_margin: float = 0.1
    homogeneity: float = 1e-6
    concavity: float = 1e-6
    lipschitz_drift: float = 0.1

    def scaled(self, factor: float) -> "ToleranceConfig":
        values = {name: value * factor for name, value in self.model_dump().items()}
        values["volume"] = self.volume / factor
        values["sky_timelike_margin"] = self.sky_timelike_margin / factor
        return ToleranceConfig(**values)


class Scenario(StrictModel):
    name: str
    seed: int = 0
    tasks: List[TaskName] = Field(default_factory=lambda: list(TaskName))
    manifold: ManifoldConfig = Field(default_factory=ManifoldConfig)
    metric: MetricConfig
    integrator: IntegratorConfig = Field(default_factory=IntegratorConfig)
    grid: GridConfig = Field(default_factory=GridConfig)
    tolerances: ToleranceConfig = Field(default_factory=ToleranceConfig)

    @field_validator("tasks", mode="before")
    @classmethod
    def _expand_all(cls, value):
        if value == "all" or value == ["all"]:
            return list(TaskName)
        return value

    @model_validator(mode="after")
    def _check_consistency(self):
        n = self.manifold.dimension
        metric = self.metric
        coords = COORDINATES[:n]
        if metric.a is not None:
            if len(metric.a) != n or any(len(row) != n for row in metric.a):
                raise ValueError(f"metric.a must be a {n}x{n} table")
            for row in metric.a:
                for entry in row:
                    _checked(entry, ("t",) + coords, "a")
        if metric.b is not None:
            if len(metric.b) != n:
                raise ValueError(f"metric.b must have {n} entries")
            for entry in metric.b:
                _checked(entry, ("t",) + coords, "b")
        if metric.norm is not None:
            _checked(metric.norm, ("t",) + coords + TANGENTS[:n], "norm")
        if metric.radius is not None:
            _checked(metric.radius, ("t", "theta") + coords, "radius")
        if metric.kind == "gauge":
            if n > 2:
                raise ValueError("gauge Hamiltonians are available for dimensions 1 and 2")
            bad = sorted(t.value for t in CONE_TASKS.intersection(self.tasks))
            if bad:
                raise ValueError(f"tasks {bad} need a cone structure, not a gauge Hamiltonian")
        _checked(self.grid.probe_surface, coords, "probe_surface", section="grid")
        if TaskName.LIPSCHITZ in self.tasks and n > 2:
            raise ValueError("the lipschitz task needs base dimension n <= 2")
        return self

    def with_overrides(self, seed: Optional[int] = None, step: Optional[float] = None,
                       tol_scale: Optional[float] = None) -> "Scenario":
        update = {}
        if seed is not None:
            update["seed"] = seed
        if step is not None:
            update["integrator"] = self.integrator.model_copy(update={"step": step})
        if tol_scale is not None:
            update["tolerances"] = self.tolerances.scaled(tol_scale)
        return self.model_copy(update=update)


_TOML_POSITION = re.compile(r"at line (\d+), column (\d+)")


def locate_key(text: str, loc: Tuple) -> Tuple[Optional[int], Optional[int]]:
    """1-based line and column of the TOML key named by a pydantic error location."""
    keys = [str(k) for k in loc if isinstance(k, str)]
    if not keys:
        return None, None
    lines = text.splitlines()
    start = 0
    if len(keys) > 1:
        for i, line in enumerate(lines):
            if line.strip() == f"[{keys[0]}]":
                start = i
                break
    pattern = re.compile(rf"^\s*{re.escape(keys[-1])}\s*=")
    for i in range(start, len(lines)):
        if pattern.match(lines[i]):
            return i + 1, lines[i].index(keys[-1]) + 1
    for i, line in enumerate(lines):
        if line.strip() == f"[{keys[-1]}]":
            return i + 1, 1
    return None, None


def parse_scenario(text: str) -> Scenario:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        match = _TOML_POSITION.search(str(exc))
        line, column = (int(match.group(1)), int(match.group(2))) if match else (None, None)
        raise ScenarioError(f"Scenario is not valid TOML: {exc}", line=line, column=column)
    try:
        return Scenario.model_validate(data)
    except ScenarioError as exc:
        line, column = locate_key(text, getattr(exc, "loc", ()))
        raise ScenarioError(Exception.__str__(exc), line=line, column=column)
    except ValidationError as exc:
        first = exc.errors()[0]
        line, column = locate_key(text, first["loc"])
        where = ".".join(str(k) for k in first["loc"]) or "scenario"
        raise ScenarioError(f"Invalid scenario field {where}: {first['msg']}", line=line, column=column)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"Cannot read scenario {path}: {exc}")
    scenario = parse_scenario(text)
    logger.info("Loaded scenario %s from %s", scenario.name, path)
    return scenario


def dump_scenario(scenario: Scenario) -> str:
    return tomli_w.dumps(scenario.model_dump(mode="json", exclude_none=True))


def build_manifold(config: ManifoldConfig) -> BaseManifold:
    periods = tuple(config.periods) if config.periods is not None else None
    return BaseManifold(config.dimension, config.topology, periods)


def _variables(n: int, t, p) -> Dict[str, np.ndarray]:
    values = {"t": t}
    for i, name in enumerate(COORDINATES[:n]):
        values[name] = p[..., i]
    return values


def _matrix_field(entries, n: int):
    exprs = [[parse_expression(e, ("t",) + COORDINATES[:n]) for e in row] for row in entries]
    if all(e.is_constant for row in exprs for e in row):
        return np.array([[e() for e in row] for row in exprs])

    def field_(t, p):
        t, p = np.asarray(t, dtype=float), np.asarray(p, dtype=float)
        lead = np.broadcast_shapes(t.shape, p.shape[:-1])
        values = _variables(n, np.broadcast_to(t, lead), np.broadcast_to(p, lead + (n,)))
        out = np.empty(lead + (n, n))
        for i, row in enumerate(exprs):
            for j, e in enumerate(row):
                out[..., i, j] = np.broadcast_to(e(**values), lead)
        return out

    return field_


def _vector_field(entries, n: int):
    exprs = [parse_expression(e, ("t",) + COORDINATES[:n]) for e in entries]
    if all(e.is_constant for e in exprs):
        return np.array([e() for e in exprs])

    def field_(t, p):
        t, p = np.asarray(t, dtype=float), np.asarray(p, dtype=float)
        lead = np.broadcast_shapes(t.shape, p.shape[:-1])
        values = _variables(n, np.broadcast_to(t, lead), np.broadcast_to(p, lead + (n,)))
        return np.stack([np.broadcast_to(e(**values), lead) for e in exprs], axis=-1)

    return field_


def build_surface(scenario: Scenario) -> Tuple[Optional[Callable[[np.ndarray], np.ndarray]], str]:
    """The probe hypersurface height sigma(p) and its label; None for the slice {t = 0}."""
    n = scenario.manifold.dimension
    expr = parse_expression(scenario.grid.probe_surface, COORDINATES[:n])
    if expr.is_constant and expr() == 0.0:
        return None, "t = 0"

    def height(p):
        p = np.asarray(p, dtype=float)
        return np.broadcast_to(expr(**_variables(n, 0.0, p)), p.shape[:-1])

    return height, f"t = {expr.source}"


def build_metric(scenario: Scenario) -> FinslerFamily:
    """The Finsler family of a cone scenario; raises AdmissibilityError on inadmissible data."""
    n = scenario.manifold.dimension
    metric = scenario.metric
    if metric.kind == "gauge":
        raise ScenarioError("A gauge scenario has no Finsler family.")
    if metric.kind == "euclidean":
        return FinslerFamily.euclidean(n)
    if metric.kind == "riemannian":
        return FinslerFamily.riemannian(_matrix_field(metric.a, n), dimension=n)
    if metric.kind == "randers":
        return FinslerFamily.randers(_matrix_field(metric.a, n), _vector_field(metric.b, n), dimension=n)
    norm = parse_expression(metric.norm, ("t",) + COORDINATES[:n] + TANGENTS[:n])

    def func(t, p, w):
        values = _variables(n, t, p)
        values.update({name: w[..., i] for i, name in enumerate(TANGENTS[:n])})
        return np.broadcast_to(norm(**values), w.shape[:-1])

    return FinslerFamily.custom(func, n, dual_directions=metric.dual_directions, description=f"custom:{metric.norm}")


def build_path(scenario: Scenario, base: Optional[BaseManifold] = None) -> Tuple[Optional[ConeStructure], PositivePath]:
    """The cone (None for gauge scenarios) and the positive path of a scenario."""
    base = base or build_manifold(scenario.manifold)
    step, horizon = scenario.integrator.step, scenario.integrator.horizon
    if scenario.metric.kind == "gauge":
        n = scenario.manifold.dimension
        radius = parse_expression(scenario.metric.radius, ("t", "theta") + COORDINATES[:n])

        def by_angle(t, p, theta):
            values = _variables(n, t, p)
            values["theta"] = theta
            return np.broadcast_to(radius(**values), np.shape(theta))

        ham = GaugeHamiltonian.from_angle(by_angle, n, description=f"gauge:{scenario.metric.radius}")
        return None, PositivePath(ham, step, horizon, label=scenario.name)
    cone = ConeStructure(base, build_metric(scenario))
    return cone, path_from_cone(cone, step, horizon)
