import numpy as np
import pytest

from cone_contact.base_geometry import BaseManifold, Topology
from cone_contact.cone_structures import LorentzFinslerSpace
from cone_contact.convex_duality import convex_hull, hausdorff_distance, is_convex, polar, unit_ball
from cone_contact.correspondence import (SliceGrid, cauchy_crossing_probe, cone_from_path, finsler_from_cone_slices,
                                         flow_co_ball, roundtrip_check)
from cone_contact.dynamics import ContactHamiltonian, GaugeHamiltonian, PositivePath
from cone_contact.utils import DomainError, PathNotPositiveError

SMALL_GRID = SliceGrid((0.0, 0.5), ((0.0, 0.0), (0.3, 0.7)))


def test_default_slice_grid(plane):
    grid = SliceGrid.default(plane, times=3, points=4, t_max=2.0)
    assert grid.times == pytest.approx((0.0, 1.0, 2.0))
    assert len(grid.points) == 4
    assert grid.points[1] == pytest.approx((0.25, 0.75))


def test_default_slice_grid_spans_the_torus():
    torus = BaseManifold(2, Topology.TORUS, periods=(2 * np.pi, 2 * np.pi))
    grid = SliceGrid.default(torus, points=8)
    assert np.max(grid.points) < 2 * np.pi
    assert np.max(grid.points) > np.pi


def test_minkowski_roundtrip(minkowski_cone):
    report = roundtrip_check(minkowski_cone, SMALL_GRID, step=1e-3, directions=256, tolerance=1e-9, samples=16)
    assert report.passed
    assert len(report.cells) == 4
    assert report.max_hausdorff <= 1e-9
    assert report.max_g_error <= 1e-9


def test_generator_mode_roundtrip(wave_cone):
    report = roundtrip_check(wave_cone, SMALL_GRID, directions=256, tolerance=1e-8, co_ball="generator")
    assert report.co_ball == "generator"
    assert report.passed


@pytest.mark.slow
def test_randers_wave_roundtrip(wave_cone):
    grid = SliceGrid((0.0, 0.5, 1.0), ((0.0, 0.0), (0.3, 0.7)))
    report = roundtrip_check(wave_cone, grid, step=1e-3, directions=256, tolerance=1e-3)
    assert report.passed


@pytest.mark.slow
def test_roundtrip_error_shrinks_with_the_step(wave_cone):
    grid = SliceGrid((0.5,), ((0.0, 0.0),))
    coarse = roundtrip_check(wave_cone, grid, step=4e-2, directions=256)
    fine = roundtrip_check(wave_cone, grid, step=2e-2, directions=256)
    assert fine.max_hausdorff < coarse.max_hausdorff / 3.0


def test_flow_co_ball_matches_generator(wave_path):
    measured = flow_co_ball(wave_path, 0.4, [0.1, 0.2], count=256)
    exact = wave_path.hamiltonian.co_ball(0.4, [0.1, 0.2], count=256)
    assert hausdorff_distance(measured, exact) <= 1e-5


def test_finsler_recovered_from_slices(wave_cone, randers_wave, rng):
    recovered = finsler_from_cone_slices(wave_cone)
    w = rng.normal(size=(6, 2))
    np.testing.assert_allclose(recovered.norm(1.2, [0.3, -0.2], w), randers_wave.norm(1.2, [0.3, -0.2], w),
                               rtol=1e-9)


def test_finsler_recovered_from_a_space(wave_path, randers_wave):
    space = cone_from_path(wave_path)
    recovered = finsler_from_cone_slices(space)
    w = np.array([[1.0, 0.0], [-0.5, 2.0]])
    np.testing.assert_allclose(recovered.norm(0.3, [0.0, 0.0], w), randers_wave.norm(0.3, [0.0, 0.0], w),
                               rtol=1e-8)


def test_negative_path_is_rejected(minkowski_path):
    with pytest.raises(PathNotPositiveError, match="path not positive"):
        cone_from_path(minkowski_path.reversed())
    with pytest.raises(DomainError):
        cone_from_path(minkowski_path, co_ball="sampled")


class DentedHamiltonian(ContactHamiltonian):
    """|v| (0.6 - x): positive at the origin, negative for x > 0.6."""

    def __init__(self):
        self.dimension = 2
        self.description = "dented"

    def value(self, t, p, v):
        return np.linalg.norm(np.asarray(v, dtype=float), axis=-1) * (0.6 - np.asarray(p, dtype=float)[..., 0])


def test_negativity_away_from_the_origin_is_rejected():
    with pytest.raises(PathNotPositiveError, match=r"at t = 0\.0, p = \[0\.75, 0\.25\]"):
        cone_from_path(PositivePath(DentedHamiltonian()))


def test_cone_of_a_gauge_path_contains_its_null_directions():
    ham = GaugeHamiltonian.from_angle(lambda t, p, theta: 1.0 + 0.5 * np.cos(3.0 * theta))
    space = cone_from_path(PositivePath(ham))
    assert space.path is not None
    assert space.label.startswith("generator:")
    assert space.contains(0.0, [0.0, 0.0], [[1.0, 0.0, 0.0], [1.0, 10.0, 0.0]]).tolist() == [True, False]


@pytest.mark.parametrize("t", [0.0, 1.3])
def test_slice_of_a_petal_gauge_is_the_polar_of_its_convex_hull(t):
    ham = GaugeHamiltonian.from_angle(lambda t, p, theta: 1.0 + 0.5 * np.cos(3.0 * theta + t))
    p = np.array([0.2, -0.1])
    petal = ham.co_ball(t, p, 512)
    assert not is_convex(petal)
    hull = convex_hull(petal)
    slice_ = cone_from_path(PositivePath(ham)).slice(t, p)
    assert hausdorff_distance(slice_, polar(hull)) <= 5e-3
    # the polar of the slice is the hull, not the petal: between two tips the hull reaches past the dent
    between = np.array([[np.cos(np.pi / 3 - t / 3), np.sin(np.pi / 3 - t / 3)]])
    assert petal.radius(between)[0] == pytest.approx(0.5, abs=1e-6)
    assert polar(slice_).radius(between)[0] > 0.7


def test_minkowski_extremals_cross_the_slice_once(minkowski_path):
    space = cone_from_path(minkowski_path)
    report = cauchy_crossing_probe(space, horizon=2.0, count=12, seed=3, segments=4)
    assert report.experimental
    assert report.single_crossing_fraction == 1.0
    assert report.blown_up == 0
    assert max(abs(r.min_causal_residual) for r in report.rays) <= 1e-9


def test_steep_surface_is_crossed_several_times(minkowski_path):
    # x = t meets t = 2 sin(x) at t = 0 and t = +-1.895; x = 0 meets it only at t = 0
    space = cone_from_path(minkowski_path)
    rays = ([[0.0, 0.0], [0.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]])
    report = cauchy_crossing_probe(space, rays=rays, horizon=5.0, segments=5,
                                   surface=lambda p: 2.0 * np.sin(p[..., 0]), surface_label="t = 2*sin(x)")
    assert [r.crossings for r in report.rays] == [3, 1]
    assert report.single_crossing_fraction == 0.5
    assert report.surface == "t = 2*sin(x)"
    flat = cauchy_crossing_probe(space, rays=rays, horizon=5.0, segments=5)
    assert [r.crossings for r in flat.rays] == [1, 1]
    assert flat.surface == "t = 0"


def test_gentle_surface_is_crossed_once(minkowski_path):
    space = cone_from_path(minkowski_path)
    report = cauchy_crossing_probe(space, horizon=3.0, count=12, seed=5, segments=3,
                                   surface=lambda p: 0.2 * np.sin(p[..., 0]))
    assert report.single_crossing_fraction == 1.0
    assert report.surface == "t = sigma(p)"


def test_crossing_count_records_blowups():
    # r = 1 - t on p > 0: rays moving right leave the admissible region at t = 1
    ham = GaugeHamiltonian.from_angle(lambda t, p, theta: 1.0 - t * (p[..., 0] > 0.0), dimension=1)
    space = cone_from_path(PositivePath(ham), base=BaseManifold(1), check_times=(0.0,))
    report = cauchy_crossing_probe(space, rays=([[0.5], [-0.5]], [[1.0], [-1.0]]), horizon=2.0, segments=4)
    assert [r.blown_up for r in report.rays] == [True, False]
    assert report.blown_up == 1
    assert report.rays[1].crossings == 1
    assert report.single_crossing_fraction == 0.5


def test_crossing_count_needs_a_path(minkowski_path):
    space = LorentzFinslerSpace(BaseManifold(2), lambda t, p: unit_ball(2))
    with pytest.raises(DomainError, match="path"):
        cauchy_crossing_probe(space)
    with pytest.raises(DomainError, match="horizon"):
        cauchy_crossing_probe(cone_from_path(minkowski_path), horizon=20.0)
