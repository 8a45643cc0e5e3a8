import numpy as np
import pytest

from cone_contact.base_geometry import (BaseManifold, FinslerFamily, SpacetimeCurve, Topology, dual_gradient,
                                        dual_norm, energy, eval_F, fd_fundamental_tensor, fundamental_tensor,
                                        legendre, lorentz_norm)
from cone_contact.directions import direction_set
from cone_contact.utils import AdmissibilityError, DomainError, StrongConvexityWarning


def brute_force_dual(fam, v, samples=65536):
    w = direction_set(2, samples)
    values = (v @ w.T) / fam.norm(0.0, np.zeros(2), w)[None, :]
    return values.max(axis=1)


@pytest.mark.parametrize("fixture", ["randers", "anisotropic"])
def test_dual_norm_matches_brute_force(fixture, request, rng):
    fam = request.getfixturevalue(fixture)
    v = rng.normal(size=(100, 2))
    exact = fam.dual(0.0, np.zeros(2), v)[0]
    assert np.max(np.abs(exact - brute_force_dual(fam, v)) / exact) < 1e-6


def test_randers_dual_closed_form_on_axis(randers):
    # unit ball of |w| + w1/2 reaches 2/3 along +x and 2 along -x
    assert dual_norm(randers, 0.0, [0.0, 0.0], [1.0, 0.0]) == pytest.approx(2.0 / 3.0)
    assert dual_norm(randers, 0.0, [0.0, 0.0], [-1.0, 0.0]) == pytest.approx(2.0)


def test_dual_gradient_is_unit_and_saturating(randers, rng):
    v = rng.normal(size=(50, 2))
    value, grad = randers.dual(0.0, np.zeros(2), v)
    assert np.allclose(randers.norm(0.0, np.zeros(2), grad), 1.0, atol=1e-12)
    assert np.allclose(np.einsum("qi,qi->q", v, grad), value, atol=1e-12)
    assert np.allclose(dual_gradient(randers, 0.0, [0.0, 0.0], v[0]), grad[0])


def test_sampled_dual_of_custom_norm_matches_closed_form(randers, rng):
    custom = FinslerFamily.custom(lambda t, p, w: randers.norm(t, p, w), 2)
    v = rng.normal(size=(5, 2))
    assert np.allclose(custom.dual(0.0, np.zeros(2), v)[0], randers.dual(0.0, np.zeros(2), v)[0], rtol=1e-8)


def test_eval_f_is_positively_homogeneous(randers):
    w = np.array([0.3, -1.2])
    assert eval_F(randers, 0.0, [0.0, 0.0], 3.0 * w) == pytest.approx(3.0 * eval_F(randers, 0.0, [0.0, 0.0], w))
    assert eval_F(randers, 0.0, [0.0, 0.0], [1.0, 0.0]) == pytest.approx(1.5)
    assert eval_F(randers, 0.0, [0.0, 0.0], [-1.0, 0.0]) == pytest.approx(0.5)


def test_zero_vector_is_rejected(randers):
    with pytest.raises(DomainError):
        eval_F(randers, 0.0, [0.0, 0.0], [0.0, 0.0])
    with pytest.raises(DomainError):
        dual_norm(randers, 0.0, [0.0, 0.0], [0.0, 0.0])


def test_randers_admissibility_is_enforced():
    with pytest.raises(AdmissibilityError, match="randers admissibility violated"):
        FinslerFamily.randers(np.eye(2), np.array([1.1, 0.0]))


def wind_between_integers(t, p):
    # vanishes at every integer time, peaks at 1.2 halfway between
    t = np.asarray(t, dtype=float)
    lead = np.broadcast_shapes(t.shape, np.shape(p)[:-1])
    return np.stack([np.broadcast_to(1.2 * np.sin(np.pi * t), lead), np.zeros(lead)], axis=-1)


def test_time_dependent_wind_is_checked_between_integer_times():
    with pytest.raises(AdmissibilityError, match="randers admissibility violated"):
        FinslerFamily.randers(np.eye(2), wind_between_integers, dimension=2)
    with pytest.raises(AdmissibilityError):
        FinslerFamily.randers(np.eye(2), wind_between_integers, dimension=2, times=[9.5])
    FinslerFamily.randers(np.eye(2), wind_between_integers, dimension=2, times=np.arange(-10.0, 11.0))


def test_non_definite_metric_is_rejected():
    with pytest.raises(AdmissibilityError):
        FinslerFamily.riemannian(np.diag([1.0, -1.0]))


def test_fundamental_tensor_closed_form_matches_finite_differences(randers, rng):
    w = rng.normal(size=(10, 2))
    exact = fundamental_tensor(randers, 0.0, np.zeros(2), w)
    approx = fd_fundamental_tensor(randers, 0.0, np.zeros(2), w)
    assert np.allclose(exact, approx, atol=1e-5)


def test_fundamental_tensor_of_riemannian_metric_is_its_matrix(anisotropic):
    g = fundamental_tensor(anisotropic, 0.0, [0.0, 0.0], [0.4, 0.7])
    assert np.allclose(g, np.diag([4.0, 1.0]))


def test_non_strongly_convex_norm_warns():
    square = FinslerFamily.custom(lambda t, p, w: np.max(np.abs(w), axis=-1), 2)
    with pytest.warns(StrongConvexityWarning):
        fundamental_tensor(square, 0.0, [0.0, 0.0], [1.0, 0.5])


def test_legendre_transform_is_metric_contraction(randers, rng):
    w = rng.normal(size=(10, 2))
    g = fundamental_tensor(randers, 0.0, np.zeros(2), w)
    assert np.allclose(legendre(randers, 0.0, np.zeros(2), w), np.einsum("qij,qj->qi", g, w), atol=1e-10)


def test_legendre_transform_of_unit_vector_is_its_dual_covector(randers):
    w = np.array([0.6, 0.8]) / randers.norm(0.0, np.zeros(2), np.array([0.6, 0.8]))
    covector = legendre(randers, 0.0, [0.0, 0.0], w)
    assert dual_norm(randers, 0.0, [0.0, 0.0], covector) == pytest.approx(1.0)


def test_lorentz_norm_vanishes_on_null_vectors(randers):
    w = np.array([[1.0, 0.0], [0.0, 2.0]])
    f = randers.norm(0.0, np.zeros(2), w)
    assert np.allclose(lorentz_norm(randers, 0.0, np.zeros(2), f, w), 0.0)
    assert lorentz_norm(randers, 0.0, np.zeros(2), 2.0, np.zeros(2)) == pytest.approx(4.0)


def test_energy_of_null_line_is_zero(euclidean):
    curve = SpacetimeCurve.from_function(lambda s: (s, (s, 0.0)), 0.0, 1.0, 50)
    assert energy(euclidean, curve) == pytest.approx(0.0, abs=1e-12)
    static = SpacetimeCurve.from_function(lambda s: (s, (0.0, 0.0)), 0.0, 1.0, 50)
    assert energy(euclidean, static) == pytest.approx(0.5)


def test_time_dependent_family_evaluates_per_time(randers_wave):
    t = np.array([0.0, np.pi / 2])
    values = randers_wave.norm(t, np.zeros((2, 2)), np.array([[1.0, 0.0], [1.0, 0.0]]))
    assert values == pytest.approx([1.0, 1.25])


def test_torus_wraps_and_takes_shortest_displacement():
    torus = BaseManifold(2, Topology.TORUS, (1.0, 2.0))
    assert np.allclose(torus.wrap([1.25, -0.5]), [0.25, 1.5])
    assert np.allclose(torus.displacement([0.9, 0.1], [0.1, 1.9]), [0.2, -0.2])
    assert np.allclose(torus.point([3.5, 0.0]).coords, [0.5, 0.0])


def test_base_manifold_rejects_bad_dimension():
    with pytest.raises(DomainError):
        BaseManifold(4)


def test_curve_requires_increasing_parameter():
    with pytest.raises(DomainError):
        SpacetimeCurve(np.array([0.0, 0.0]), np.array([0.0, 1.0]), np.zeros((2, 2)))


@pytest.mark.parametrize("periods", [(1.0, 2.0, 3.0), (1.0, -2.0), (1.0, np.inf)])
def test_torus_rejects_bad_periods(periods):
    with pytest.raises(DomainError):
        BaseManifold(2, Topology.TORUS, periods)


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("fixture", ["randers", "anisotropic"])
def test_legendre_transform_preserves_norm_and_pairing(fixture, request, seed):
    fam = request.getfixturevalue(fixture)
    w = np.random.default_rng(seed).normal(size=(40, 2))
    f = fam.norm(0.0, np.zeros(2), w)
    covectors = legendre(fam, 0.0, np.zeros(2), w)
    assert np.allclose(fam.dual(0.0, np.zeros(2), covectors)[0], f, rtol=1e-9)
    assert np.allclose(np.einsum("qi,qi->q", covectors, w), f ** 2, rtol=1e-9)
