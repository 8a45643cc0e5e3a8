"""Run the tasks of a scenario in sequence, gate them against tolerances and write their artifacts."""
import logging
import time
from pathlib import Path
from typing import Callable, Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, Field

from .artifacts import ARTIFACT_FILES, header_line, render_csv, render_json, write_utf8_file
from .base_geometry import SpacetimeCurve
from .cone_structures import check_lorentz_finsler_space, doubled_slice
from .contact_layer import (DEFAULT_SKY_SAMPLES, SkyVerdict, contact_sample, contact_volume, positivity_margins,
                            sky_isotopy_positivity, verify_reeb_conditions)
from .convex_duality import Box, lipschitz_estimate
from .correspondence import SliceGrid, cauchy_crossing_probe, cone_from_path, roundtrip_check
from .directions import direction_set
from .dynamics import RayPoint, cone_geodesic, cone_geodesic_batch, lagrangian_geodesic_batch
from .scenario import COORDINATES, Scenario, TaskName, build_manifold, build_path, build_surface
from .utils import ConeContactError

logger = logging.getLogger(__name__)

# estimates below this are treated as zero when comparing step sizes
LIPSCHITZ_FLOOR = 1e-9


class TaskOutcome(BaseModel):
    task: TaskName
    passed: bool
    gated: bool = True
    checks: Dict[str, float] = Field(default_factory=dict)
    failures: List[str] = Field(default_factory=list)
    artifact: str = ""
    seconds: float = 0.0


class RunSummary(BaseModel):
    scenario: str
    seed: int
    output_dir: str
    outcomes: List[TaskOutcome] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(o.passed for o in self.outcomes)

    def failure_lines(self) -> List[str]:
        return [f"{o.task.value}: {failure}" for o in self.outcomes for failure in o.failures]


def _gate(failures: List[str], name: str, value: float, limit: float, below: bool = True) -> None:
    ok = value <= limit if below else value >= limit
    if not ok or not np.isfinite(value):
        relation = ">" if below else "<"
        failures.append(f"{name} {value:.3g} {relation} {limit:.3g}")


class ScenarioRunner:
    """Builds the cone and path of a scenario once and runs its tasks one after another."""

    def __init__(self, scenario: Scenario, output_dir):
        self.scenario = scenario
        self.output_dir = Path(output_dir)
        self.tolerances = scenario.tolerances
        self.base = build_manifold(scenario.manifold)
        self.cone, self.path = build_path(scenario, self.base)
        self.n = self.base.dimension
        self.coordinates = list(COORDINATES[: self.n])

        self._handlers: Dict[TaskName, Callable[[], TaskOutcome]] = {
            TaskName.GEODESICS: self.run_geodesics,
            TaskName.ROUNDTRIP: self.run_roundtrip,
            TaskName.POSITIVITY: self.run_positivity,
            TaskName.SKIES: self.run_skies,
            TaskName.LIPSCHITZ: self.run_lipschitz,
            TaskName.PROBE: self.run_probe,
        }
        self.tasks: List[Tuple[TaskName, Callable[[], TaskOutcome]]] = []
        self.create_tasks()

    def create_tasks(self):
        self.tasks = [(name, self._handlers[name]) for name in self.scenario.tasks]

    @property
    def comment(self) -> str:
        return header_line(self.scenario.name, self.scenario.seed)

    def _rng(self, task: TaskName) -> np.random.Generator:
        # one stream per task so a task's data does not depend on which other tasks run
        return np.random.default_rng([self.scenario.seed, list(TaskName).index(task)])

    def _extent(self) -> np.ndarray:
        return np.asarray(self.base.periods if self.base.is_torus else (1.0,) * self.n)

    def _sample_rays(self, task: TaskName, count: int) -> Tuple[np.ndarray, np.ndarray]:
        rng = self._rng(task)
        p = rng.uniform(0.0, 1.0, size=(count, self.n)) * self._extent()
        v = rng.normal(size=(count, self.n))
        return p, v

    def _write(self, task: TaskName, content: str) -> str:
        path = write_utf8_file(self.output_dir / ARTIFACT_FILES[task.value], content)
        return str(path)

    def task_callback(self, outcome: TaskOutcome):
        if outcome.passed:
            logger.info("Task %s passed in %.1fs (%s)", outcome.task.value, outcome.seconds,
                        ", ".join(f"{k}={v:.3g}" for k, v in sorted(outcome.checks.items())))
        else:
            for failure in outcome.failures:
                logger.warning("Task %s failed: %s", outcome.task.value, failure)

    def kickoff(self) -> RunSummary:
        summary = RunSummary(scenario=self.scenario.name, seed=self.scenario.seed, output_dir=str(self.output_dir))
        logger.info("Running scenario %s (%s) with tasks %s", self.scenario.name, self.path.label,
                    ", ".join(name.value for name, _ in self.tasks))
        for name, handler in self.tasks:
            started = time.perf_counter()
            try:
                outcome = handler()
            except ConeContactError as exc:
                outcome = TaskOutcome(task=name, passed=False, failures=[str(exc)])
            outcome.seconds = time.perf_counter() - started
            self.task_callback(outcome)
            summary.outcomes.append(outcome)
        return summary

    def run_geodesics(self) -> TaskOutcome:
        """Cone geodesics from the flow against null geodesics of the Lagrangian spray."""
        grid, tol = self.scenario.grid, self.tolerances
        p, v = self._sample_rays(TaskName.GEODESICS, grid.rays)
        t_max = grid.geodesic_t_max
        flow = cone_geodesic_batch(self.path, p, v, 0.0, t_max)
        start = np.array([g.velocity[0] for g in flow])
        spray = lagrangian_geodesic_batch(self.cone.finsler, 0.0, p, start, t_max, self.path.step)

        rows = []
        spray_error = null_error = 0.0
        for i, (g, s) in enumerate(zip(flow, spray)):
            residual = g.null_residual(self.path.hamiltonian)
            on_flow_grid = np.column_stack([np.interp(g.t, s.t, s.p[:, j]) for j in range(self.n)])
            distance = np.linalg.norm(on_flow_grid - g.p, axis=1)
            spray_error = max(spray_error, float(distance.max()))
            null_error = max(null_error, float(np.abs(residual).max()))
            for k in range(len(g.t)):
                rows.append([i, float(g.t[k]), *map(float, g.p[k]), float(residual[k]), float(distance[k])])
        header = ["ray", "t"] + self.coordinates + ["null_residual", "spray_distance"]
        artifact = self._write(TaskName.GEODESICS, render_csv(header, rows, self.comment))

        failures: List[str] = []
        _gate(failures, "spray distance", spray_error, tol.geodesic)
        _gate(failures, "null residual", null_error, tol.null)
        return TaskOutcome(task=TaskName.GEODESICS, passed=not failures, failures=failures, artifact=artifact,
                           checks={"spray_distance": spray_error, "null_residual": null_error})

    def run_roundtrip(self) -> TaskOutcome:
        grid, tol = self.scenario.grid, self.tolerances
        slices = SliceGrid.default(self.base, grid.times, grid.points, grid.t_max)
        report = roundtrip_check(self.cone, slices, step=self.path.step, directions=grid.directions,
                                 tolerance=tol.roundtrip, samples=grid.g_samples, seed=self.scenario.seed)
        rows = [[c.t, *c.p, c.hausdorff, c.g_error] for c in report.cells]
        header = ["t"] + self.coordinates + ["hausdorff", "g_error"]
        artifact = self._write(TaskName.ROUNDTRIP, render_csv(header, rows, self.comment))

        failures: List[str] = []
        _gate(failures, "slice Hausdorff distance", report.max_hausdorff, tol.roundtrip)
        _gate(failures, "G discrepancy", report.max_g_error, tol.roundtrip)
        return TaskOutcome(task=TaskName.ROUNDTRIP, passed=not failures, failures=failures, artifact=artifact,
                           checks={"max_hausdorff": report.max_hausdorff, "max_g_error": report.max_g_error})

    def run_positivity(self) -> TaskOutcome:
        """Positivity margins of the path and its reversal, Reeb conditions and contact volume along the flow."""
        grid, tol = self.scenario.grid, self.tolerances
        ham = self.path.hamiltonian
        reversed_path = self.path.reversed()
        p, v = self._sample_rays(TaskName.POSITIVITY, grid.rays)

        rows = []
        min_margin = min_volume = np.inf
        max_reversed = -np.inf
        reeb_error = contraction = 0.0
        for t in np.linspace(0.0, grid.t_max, grid.times):
            t = float(t)
            margins = positivity_margins(self.path, t, p, v)
            reversed_margins = positivity_margins(reversed_path, t, p, v)
            pt, vt = self.path.transport(0.0, t, p, v)
            for i in range(len(p)):
                sample = contact_sample(ham, t, RayPoint(pt[i], vt[i]))
                reeb = verify_reeb_conditions(ham, t, sample)
                volume = contact_volume(ham, t, sample)
                rows.append([t, i, float(margins[i]), float(reversed_margins[i]), reeb.alpha_of_X,
                             reeb.max_dalpha_contraction, volume])
                reeb_error = max(reeb_error, abs(reeb.alpha_of_X - 1.0))
                contraction = max(contraction, reeb.max_dalpha_contraction)
                min_volume = min(min_volume, volume)
            min_margin = min(min_margin, float(margins.min()))
            max_reversed = max(max_reversed, float(reversed_margins.max()))
        header = ["t", "ray", "margin", "reversed_margin", "alpha_of_X", "dalpha_contraction", "contact_volume"]
        artifact = self._write(TaskName.POSITIVITY, render_csv(header, rows, self.comment))

        failures: List[str] = []
        if not min_margin > 0.0:
            failures.append(f"positivity margin {min_margin:.3g} is not positive")
        if not max_reversed < 0.0:
            failures.append(f"reversed path margin {max_reversed:.3g} is not negative")
        _gate(failures, "|alpha(X) - 1|", reeb_error, tol.reeb)
        _gate(failures, "d alpha contraction", contraction, tol.dalpha)
        if not min_volume > tol.volume:
            failures.append(f"contact volume {min_volume:.3g} <= {tol.volume:.3g}")
        return TaskOutcome(task=TaskName.POSITIVITY, passed=not failures, failures=failures, artifact=artifact,
                           checks={"min_margin": min_margin, "max_reversed_margin": max_reversed,
                                   "reeb_error": reeb_error, "dalpha_contraction": contraction,
                                   "min_contact_volume": min_volume})

    def _null_curve(self, samples: int, t_max: float, m: int):
        """A cone geodesic from the first sampled ray with its tangent covector as ray 0 of every sky."""
        p, v = self._sample_rays(TaskName.SKIES, 1)
        geodesic = cone_geodesic(self.path, RayPoint(p[0], v[0]), 0.0, t_max)
        index = np.unique(np.round(np.linspace(0, len(geodesic.t) - 1, samples)).astype(int))
        curve = SpacetimeCurve(geodesic.t[index], geodesic.t[index], geodesic.p[index])
        others = direction_set(self.n, m)
        covectors = np.concatenate([geodesic.covector[index][:, None, :],
                                    np.broadcast_to(others, (len(index),) + others.shape)], axis=1)
        return curve, covectors

    def run_skies(self) -> TaskOutcome:
        """Sky isotopies along a static timelike curve and along a cone geodesic."""
        grid, tol = self.scenario.grid, self.tolerances
        m = grid.sky_samples or DEFAULT_SKY_SAMPLES[self.n]
        p, _ = self._sample_rays(TaskName.SKIES, 1)
        s = np.linspace(0.0, grid.sky_t_max, grid.sky_curve_samples)
        timelike = sky_isotopy_positivity(self.path, SpacetimeCurve(s, s, np.repeat(p, len(s), axis=0)), m,
                                          tol=tol.sky)
        curve, covectors = self._null_curve(grid.sky_curve_samples, grid.sky_t_max, m)
        null = sky_isotopy_positivity(self.path, curve, tol=tol.sky, covectors=covectors)
        tangent = float(np.max(np.abs(np.asarray(null.margins)[:, 0])))

        rows = []
        for label, report in (("timelike", timelike), ("null", null)):
            for k, s_k in enumerate(report.s):
                rows.extend([label, s_k, r, margin] for r, margin in enumerate(report.margins[k]))
        payload_header = ["curve", "s", "ray", "margin"]
        artifact = self._write(TaskName.SKIES, render_csv(payload_header, rows, self.comment))

        failures: List[str] = []
        if timelike.verdict is not SkyVerdict.TIMELIKE:
            failures.append(f"timelike curve sky verdict is {timelike.verdict.value!r}")
        _gate(failures, "timelike sky margin", timelike.min_abs_margin, tol.sky_timelike_margin, below=False)
        _gate(failures, "null curve tangent-ray margin", tangent, tol.sky)
        logger.info("Null curve sky verdict (recorded): %s", null.verdict.value)
        return TaskOutcome(task=TaskName.SKIES, passed=not failures, failures=failures, artifact=artifact,
                           checks={"timelike_min_abs_margin": timelike.min_abs_margin,
                                   "null_tangent_margin": tangent, "null_max_margin": null.max_margin})

    def run_lipschitz(self) -> TaskOutcome:
        """Lorentz-Finsler check of the cone induced by the path, with a half-step Lipschitz estimate."""
        grid, tol = self.scenario.grid, self.tolerances
        space = cone_from_path(self.path, self.base, co_ball="generator")
        extent = np.minimum(self._extent(), grid.lipschitz_extent)
        region = Box([0.0] + [0.0] * self.n, [grid.lipschitz_t_max] + list(extent))
        report = check_lorentz_finsler_space(space, region, grid.lipschitz_step, pairs=grid.lipschitz_pairs,
                                             seed=self.scenario.seed, directions=grid.lipschitz_directions)
        half = 0.5 * grid.lipschitz_step
        dirs = None if grid.lipschitz_directions is None else direction_set(self.n + 1, grid.lipschitz_directions)
        half_estimate = lipschitz_estimate(
            lambda x: doubled_slice(space, float(x[1]), x[2:], count=grid.lipschitz_directions),
            Box([0.0] + list(region.lower), [half] + list(region.upper)), half, dirs,
        )
        estimate = report.lipschitz_estimate
        if estimate is None:
            drift = float("nan")
        else:
            drift = abs(half_estimate - estimate) / max(estimate, half_estimate, LIPSCHITZ_FLOOR)
        payload = {
            "scenario": self.scenario.name,
            "seed": self.scenario.seed,
            "step": grid.lipschitz_step,
            "half_step_estimate": half_estimate,
            "relative_drift": drift,
            "report": report.model_dump(mode="json"),
        }
        artifact = self._write(TaskName.LIPSCHITZ, render_json(payload))

        failures: List[str] = []
        _gate(failures, "homogeneity violation", report.homogeneity_violation, tol.homogeneity)
        _gate(failures, "concavity violation", report.concavity_violation, tol.concavity)
        if not all(v.convex for v in report.slices):
            failures.append("a slice of the induced cone is not convex")
        if estimate is None or not np.isfinite(estimate):
            failures.append("no finite Lipschitz estimate for the doubled cone")
        else:
            _gate(failures, "Lipschitz estimate drift under step halving", drift, tol.lipschitz_drift)
        return TaskOutcome(task=TaskName.LIPSCHITZ, passed=not failures, failures=failures, artifact=artifact,
                           checks={"homogeneity": report.homogeneity_violation,
                                   "concavity": report.concavity_violation,
                                   "lipschitz": float("nan") if estimate is None else estimate,
                                   "relative_drift": drift})

    def run_probe(self) -> TaskOutcome:
        """Experimental crossing probe; asserted only for cones of Finsler families."""
        grid = self.scenario.grid
        space = cone_from_path(self.path, self.base, co_ball="generator")
        surface, label = build_surface(self.scenario)
        report = cauchy_crossing_probe(space, horizon=grid.probe_horizon, count=grid.probe_rays,
                                       seed=self.scenario.seed, segments=grid.probe_segments, surface=surface,
                                       surface_label=label)
        payload = {"scenario": self.scenario.name, "seed": self.scenario.seed, "report": report.model_dump(mode="json")}
        artifact = self._write(TaskName.PROBE, render_json(payload))

        gated = self.cone is not None
        failures: List[str] = []
        if gated and report.single_crossing_fraction < 1.0:
            failures.append(f"single-crossing fraction {report.single_crossing_fraction:.3f} < 1")
        return TaskOutcome(task=TaskName.PROBE, passed=not failures, gated=gated, failures=failures,
                           artifact=artifact, checks={"single_crossing_fraction": report.single_crossing_fraction,
                                                      "blown_up": float(report.blown_up)})


def run_scenario(scenario: Scenario, output_dir) -> RunSummary:
    return ScenarioRunner(scenario, output_dir).kickoff()
