import numpy as np
import pytest

from cone_contact.convex_duality import (Box, StarBody, convex_hull, hausdorff_distance, is_convex,
                                         lipschitz_estimate, polar, quadratic_body, scaled, support_function,
                                         unit_ball)
from cone_contact.directions import direction_set
from cone_contact.utils import DomainError


def petal(count=512):
    return StarBody.from_radial(lambda u: 1.0 + 0.5 * np.cos(3.0 * np.arctan2(u[:, 1], u[:, 0])), 2, count)


@pytest.fixture
def ellipse():
    return quadratic_body(np.diag([4.0, 1.0]), count=512)


def test_support_of_unit_ball_is_euclidean_norm(rng):
    w = rng.normal(size=(20, 3))
    assert np.allclose(support_function(unit_ball(3), w), np.linalg.norm(w, axis=1))


def test_sampled_support_is_refined(ellipse, rng):
    sampled = StarBody(ellipse.directions, ellipse.radii, radial=ellipse.radial)
    w = rng.normal(size=(20, 2))
    assert np.allclose(support_function(sampled, w), support_function(ellipse, w), rtol=1e-9)


def test_bipolar_recovers_convex_body(ellipse):
    sampled = StarBody(ellipse.directions, ellipse.radii, radial=ellipse.radial)
    assert hausdorff_distance(polar(polar(sampled)), ellipse) <= 5e-3


def test_polar_of_ellipse_is_inverse_form_body(ellipse):
    assert hausdorff_distance(polar(ellipse), quadratic_body(np.diag([0.25, 1.0]), count=512)) <= 1e-3


def test_polar_of_petal_equals_polar_of_its_hull():
    star = petal()
    assert hausdorff_distance(polar(star), polar(convex_hull(star))) <= 5e-3


def test_convexity_verdicts(ellipse):
    assert is_convex(ellipse)
    assert not is_convex(petal())
    assert is_convex(convex_hull(petal()))
    assert is_convex(polar(petal()))


def test_hull_contains_body():
    star = petal()
    hull = convex_hull(star)
    assert np.all(hull.contains(star.boundary, tol=1e-9))
    assert np.all(hull.radii >= star.radii - 1e-12)


def test_hausdorff_distance_of_concentric_balls():
    assert hausdorff_distance(unit_ball(2), unit_ball(2, radius=1.5)) == pytest.approx(0.5)


def test_hausdorff_distance_needs_convex_bodies():
    with pytest.raises(DomainError):
        hausdorff_distance(petal(), unit_ball(2))


def test_scaled_body_scales_support(ellipse):
    w = direction_set(2, 16)
    assert np.allclose(support_function(scaled(ellipse, 2.0), w), 2.0 * support_function(ellipse, w))
    with pytest.raises(DomainError):
        scaled(ellipse, 0.0)


def test_star_body_validates_samples():
    with pytest.raises(DomainError):
        StarBody(direction_set(2, 16), np.ones(16))
    with pytest.raises(DomainError):
        StarBody(direction_set(2, 512), -np.ones(512))


def test_one_dimensional_bodies_are_intervals():
    interval = StarBody(np.array([[1.0], [-1.0]]), np.array([2.0, 0.5]))
    assert support_function(interval, np.array([[3.0], [-1.0]])) == pytest.approx([6.0, 0.5])
    assert polar(interval).radii == pytest.approx([0.5, 2.0])


def test_lipschitz_estimate_of_growing_balls():
    estimate = lipschitz_estimate(lambda x: unit_ball(2, radius=1.0 + 0.5 * x[0]), Box([0.0], [1.0]), 0.25)
    assert estimate == pytest.approx(0.5)


def test_box_grid_holds_flat_axes_fixed():
    axes = Box([0.0, 1.0], [0.5, 1.0]).grid(0.25)
    assert np.allclose(axes[0], [0.0, 0.25, 0.5])
    assert np.allclose(axes[1], [1.0])


def test_csv_round_trip_keeps_samples(ellipse, tmp_path):
    path = tmp_path / "ellipse.csv"
    ellipse.to_csv(path)
    loaded = StarBody.from_csv(path)
    assert np.allclose(loaded.radii, ellipse.radii)
    assert np.allclose(loaded.directions, ellipse.directions)


def random_quadratic_body(seed):
    m = np.random.default_rng(seed).normal(size=(2, 2))
    return quadratic_body(m @ m.T + 0.5 * np.eye(2), count=512)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_polar_reverses_inclusion(seed):
    body = random_quadratic_body(seed)
    outer = unit_ball(2, count=512, radius=1.01 * body.radii.max())
    u = direction_set(2, 257)
    assert np.all(body.radius(u) <= outer.radius(u))
    assert np.all(polar(outer).radius(u) <= polar(body).radius(u) * (1.0 + 1e-12))


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("factor", [0.25, 3.0])
def test_polar_of_scaled_body_is_inverse_scaled(seed, factor):
    body = random_quadratic_body(seed)
    expected = scaled(polar(body), 1.0 / factor)
    actual = polar(scaled(body, factor))
    u = direction_set(2, 257)
    np.testing.assert_allclose(actual.radius(u), expected.radius(u), rtol=1e-12)
    assert hausdorff_distance(actual, expected) <= 1e-7
