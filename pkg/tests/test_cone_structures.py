import numpy as np
import pytest

from cone_contact.base_geometry import BaseManifold, SpacetimeVector
from cone_contact.cone_structures import (CausalCharacter, ConeStructure, G_eval, LorentzFinslerSpace,
                                          check_lorentz_finsler_space, classify, cone_slice, doubled_slice,
                                          lorentz_finsler_space)
from cone_contact.convex_duality import Box, hausdorff_distance, polar, support_function, unit_ball
from cone_contact.utils import DomainError


@pytest.mark.parametrize("sv, expected", [
    ((1.0, 1.0, 0.0), CausalCharacter.FUTURE_NULL),
    ((2.0, 1.0, 0.0), CausalCharacter.FUTURE_TIMELIKE),
    ((1.0, 0.0, 0.0), CausalCharacter.FUTURE_TIMELIKE),
    ((-1.0, 0.0, 1.0), CausalCharacter.PAST_NULL),
    ((-3.0, 1.0, 1.0), CausalCharacter.PAST_TIMELIKE),
    ((0.0, 1.0, 0.0), CausalCharacter.NON_CAUSAL),
    ((1.0, 2.0, 0.0), CausalCharacter.NON_CAUSAL),
])
def test_classify_minkowski(minkowski_cone, sv, expected):
    assert classify(minkowski_cone, 0.0, [0.0, 0.0], np.array(sv)) is expected


def test_classify_sees_randers_asymmetry(plane, randers):
    cone = ConeStructure(plane, randers)
    assert classify(cone, 0.0, [0.0, 0.0], np.array([1.5, 1.0, 0.0])) is CausalCharacter.FUTURE_NULL
    assert classify(cone, 0.0, [0.0, 0.0], np.array([-0.5, 1.0, 0.0])) is CausalCharacter.PAST_NULL
    assert classify(cone, 0.0, [0.0, 0.0], np.array([1.0, 1.0, 0.0])) is CausalCharacter.NON_CAUSAL
    assert classify(cone, 0.0, [0.0, 0.0], SpacetimeVector(1.0, np.array([-1.0, 0.0]))).is_future


def test_classify_rejects_zero_vector(minkowski_cone):
    with pytest.raises(DomainError):
        classify(minkowski_cone, 0.0, [0.0, 0.0], np.zeros(3))


def test_cone_membership_is_vectorized(minkowski_cone):
    sv = np.array([[1.0, 0.5, 0.0], [1.0, 1.0, 0.0], [1.0, 2.0, 0.0], [-1.0, 0.0, 0.0]])
    assert minkowski_cone.contains(0.0, np.zeros(2), sv).tolist() == [True, True, False, False]


def test_cone_and_base_dimensions_must_agree(euclidean):
    with pytest.raises(DomainError):
        ConeStructure(BaseManifold(3), euclidean)


def test_cone_slice_is_finsler_unit_ball(plane, randers):
    body = cone_slice(ConeStructure(plane, randers), 0.0, np.zeros(2))
    assert body.radius(np.array([[1.0, 0.0], [-1.0, 0.0]])) == pytest.approx([2.0 / 3.0, 2.0])
    assert support_function(body, np.array([1.0, 0.0])) == pytest.approx(2.0 / 3.0)


def test_g_is_dt_minus_f_for_cone_spaces(wave_cone, rng):
    space = lorentz_finsler_space(wave_cone)
    w = rng.normal(size=(30, 2))
    sv = np.column_stack([np.abs(rng.normal(size=30)), w])
    f = wave_cone.finsler.norm(0.7, np.zeros(2), w)
    assert np.allclose(space.G(0.7, np.zeros(2), sv), sv[:, 0] - f, atol=1e-12)
    assert G_eval(space, 0.7, np.zeros(2), sv[0]) == pytest.approx(sv[0, 0] - f[0])


def test_g_of_pure_time_direction(wave_cone):
    space = lorentz_finsler_space(wave_cone)
    assert space.G(0.0, np.zeros(2), np.array([2.0, 0.0, 0.0])) == pytest.approx(2.0)
    assert space.contains(0.0, np.zeros(2), np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])).tolist() == [True, False]


def test_doubled_slice_of_minkowski_cone(minkowski_cone):
    space = lorentz_finsler_space(minkowski_cone)
    body = doubled_slice(space, 0.0, np.zeros(2), count=512)
    u = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [np.sqrt(0.5), np.sqrt(0.5), 0.0]])
    assert body.radius(u) == pytest.approx([1.0, 1.0, 1.0 / (2.0 * np.sqrt(0.5))])
    assert support_function(body, np.array([0.3, 0.4, 0.0])) == pytest.approx(0.4)


def test_doubled_slice_needs_small_base():
    space = LorentzFinslerSpace(BaseManifold(3), lambda t, p: unit_ball(3))
    with pytest.raises(DomainError):
        doubled_slice(space, 0.0, np.zeros(3))


def test_lorentz_finsler_check_on_minkowski(minkowski_cone):
    space = lorentz_finsler_space(minkowski_cone)
    report = check_lorentz_finsler_space(space, Box([0.0, 0.0, 0.0], [0.5, 0.5, 0.0]), 0.5, pairs=100,
                                         directions=256)
    assert report.passed(1e-9)
    assert report.lipschitz_estimate == pytest.approx(0.0, abs=1e-9)
    assert len(report.slices) == 4


@pytest.mark.slow
def test_lorentz_finsler_check_on_randers_wave(wave_cone):
    space = lorentz_finsler_space(wave_cone)
    region = Box([0.0, 0.0, 0.0], [1.0, 0.5, 0.5])
    report = check_lorentz_finsler_space(space, region, 0.5, pairs=200)
    assert report.homogeneity_violation <= 1e-6
    assert report.concavity_violation <= 1e-6
    assert all(s.convex for s in report.slices)
    assert np.isfinite(report.lipschitz_estimate)
    assert report.lipschitz_estimate <= 0.5


class SignNoiseSpace(LorentzFinslerSpace):
    """G plus 0.1 |w1| times a direction-dependent sign: homogeneous but not concave."""

    def G(self, t, p, sv):
        sv = np.atleast_2d(np.asarray(sv, dtype=float))
        w = sv[:, 1:]
        r = np.linalg.norm(w, axis=1)
        noise = np.sign(np.sin(50.0 * w[:, 0] / np.where(r > 0.0, r, 1.0)))
        return super().G(t, p, sv) + 0.1 * np.abs(w[:, 0]) * noise


def test_concavity_check_catches_corrupted_g(minkowski_cone):
    clean = lorentz_finsler_space(minkowski_cone)
    noisy = SignNoiseSpace(clean.base, clean.co_ball, label="noisy")
    report = check_lorentz_finsler_space(noisy, Box([0.0, 0.0, 0.0], [0.0, 0.0, 0.0]), 0.5, pairs=500,
                                         directions=256)
    assert report.homogeneity_violation <= 1e-9
    assert report.concavity_violation > 0.0
    assert any(v.name == "concavity" for v in report.violations)
    assert not report.passed(1e-6)


@pytest.mark.parametrize("fixture", ["minkowski_cone", "wave_cone", "randers", "anisotropic"])
def test_time_direction_is_future_timelike(fixture, request, plane, rng):
    value = request.getfixturevalue(fixture)
    cone = value if isinstance(value, ConeStructure) else ConeStructure(plane, value)
    for t, p in zip(rng.uniform(-3.0, 3.0, size=10), rng.normal(size=(10, 2))):
        assert classify(cone, t, p, np.array([1.0, 0.0, 0.0])) is CausalCharacter.FUTURE_TIMELIKE


def test_classify_is_time_antisymmetric(wave_cone, rng):
    t, p = 0.7, np.array([0.1, -0.2])
    w = rng.normal(size=(100, 2))
    null = np.column_stack([wave_cone.finsler.norm(t, p, w), w])
    vectors = np.vstack([rng.normal(size=(100, 3)), null])
    seen = set()
    for sv in vectors:
        character = classify(wave_cone, t, p, sv)
        assert classify(wave_cone, t, p, -sv) is character.opposite
        assert character.opposite.opposite is character
        seen.add(character)
    assert {CausalCharacter.FUTURE_NULL, CausalCharacter.NON_CAUSAL} <= seen


@pytest.mark.parametrize("t", [0.0, 0.7, 2.0])
def test_cone_slice_is_polar_of_dual_co_ball(wave_cone, t):
    p = np.array([0.3, -0.4])
    body = cone_slice(wave_cone, t, p, count=512)
    assert hausdorff_distance(body, polar(wave_cone.dual_co_ball(t, p, count=512))) <= 1e-3
