"""Classification pipelines: residual field, recovery, automorphism checks."""

import numpy as np
import pytest

from weakinv import (Diffeomorphism, GroupMap, ManifoldPoint, SamplingPlan,
                     TangentVectorM, affine_field, check_automorphism,
                     classify_diffeomorphism, classify_vector_field, compose, exp,
                     inverse, left_action, left_trivialize, recover_group_map_at,
                     residual_field, rotation_action, scaling_action, so2, so3,
                     solve_group_velocity, se2, translation_action)
from weakinv.actions import radial_scaled_field
from weakinv.invariance import NONE, PARTIAL_ONLY, STRONG, WEAK, RankDeficiencyError

PLAN = SamplingPlan(seed=5, group_count=10, point_count=8, pair_count=15)
OFFSET_PLAN = SamplingPlan(seed=5, group_count=10, point_count=8, pair_count=15,
                           point_center=(1.75, 0.25), point_box=1.0)


def scalar_affine(a, b):
    action = translation_action(1, [0])
    V = affine_field(action.manifold, np.array([[b]]), np.array([a]))
    return action, V


# ---------------------------------------------------------------------------
# residual field
# ---------------------------------------------------------------------------

def test_residual_field_zero_for_rotation_symmetric_field():
    action = rotation_action(so2())
    V = affine_field(action.manifold, 0.7 * np.eye(2), np.zeros(2))
    for g in PLAN.group_elements(so2(), count=6):
        for p in OFFSET_PLAN.manifold_points(action.manifold, count=6):
            r = residual_field(V, action, g, p)
            np.testing.assert_allclose(r.dir, 0.0, atol=1e-13)


def test_residual_field_scalar_affine_oracle():
    # hand oracle: V(p + g) - V(p) = b g
    a, b = 1.0, 0.5
    action, V = scalar_affine(a, b)
    for gval in [0.3, -1.2, 2.0]:
        g = exp(action.group.algebra([gval]))
        p = ManifoldPoint(action.manifold, np.array([0.7]))
        r = residual_field(V, action, g, p)
        np.testing.assert_allclose(r.dir, [b * gval], atol=1e-14)


def test_residual_field_matrix_affine_oracle():
    # hand oracle: V(p + v) - V(p) = A v under translations of R^n
    rng = np.random.default_rng(1)
    A = rng.standard_normal((3, 3))
    b = rng.standard_normal(3)
    action = translation_action(3, [0, 1, 2])
    V = affine_field(action.manifold, A, b)
    for g in PLAN.group_elements(action.group, count=6):
        v = g.matrix[:3, 3]
        p = ManifoldPoint(action.manifold, np.array([0.2, -0.4, 1.0]))
        r = residual_field(V, action, g, p)
        np.testing.assert_allclose(r.dir, A @ v, atol=1e-13)


# ---------------------------------------------------------------------------
# group-velocity solve
# ---------------------------------------------------------------------------

def test_solve_zero_for_strong_field():
    action = rotation_action(so2())
    V = affine_field(action.manifold, -0.3 * np.eye(2), np.zeros(2))
    points = OFFSET_PLAN.manifold_points(action.manifold)
    g = exp(so2().algebra([0.9]))
    xi, consistency = solve_group_velocity(V, action, g, points)
    np.testing.assert_allclose(xi.coords, 0.0, atol=1e-12)
    assert consistency < 1e-12


def test_solve_scalar_affine_closed_form():
    a, b = 1.0, 0.5
    action, V = scalar_affine(a, b)
    points = PLAN.manifold_points(action.manifold)
    for gval in [0.4, -0.8]:
        g = exp(action.group.algebra([gval]))
        xi, consistency = solve_group_velocity(V, action, g, points)
        np.testing.assert_allclose(xi.coords, [b * gval], atol=1e-12)
        assert consistency < 1e-12


def test_solve_affine_rn_exact():
    rng = np.random.default_rng(7)
    A = rng.standard_normal((3, 3))
    action = translation_action(3, [0, 1, 2])
    V = affine_field(action.manifold, A, rng.standard_normal(3))
    points = PLAN.manifold_points(action.manifold)
    for g in PLAN.group_elements(action.group, count=5):
        xi, consistency = solve_group_velocity(V, action, g, points)
        np.testing.assert_allclose(xi.coords, A @ g.matrix[:3, 3], atol=1e-12)
        assert consistency < 1e-12


def test_solve_raises_on_rank_deficiency():
    action = rotation_action(so3())  # rank 2 < 3 everywhere
    V = affine_field(action.manifold, np.eye(3), np.zeros(3))
    points = PLAN.manifold_points(action.manifold, count=3)
    with pytest.raises(RankDeficiencyError):
        solve_group_velocity(V, action, exp(so3().algebra([0.1, 0.2, 0.3])), points)


def test_recovered_velocity_unique_across_point_batches():
    rng = np.random.default_rng(9)
    A = rng.standard_normal((3, 3))
    action = translation_action(3, [0, 1, 2])
    V = affine_field(action.manifold, A, rng.standard_normal(3))
    batch_a = SamplingPlan(seed=21).manifold_points(action.manifold)
    batch_b = SamplingPlan(seed=22).manifold_points(action.manifold)
    for g in PLAN.group_elements(action.group, count=5):
        xi_a, _ = solve_group_velocity(V, action, g, batch_a)
        xi_b, _ = solve_group_velocity(V, action, g, batch_b)
        assert np.max(np.abs(xi_a.coords - xi_b.coords)) < 1e-8


# ---------------------------------------------------------------------------
# vector-field classification
# ---------------------------------------------------------------------------

def test_classify_strong_rotationally_symmetric():
    action = rotation_action(so2())
    V = affine_field(action.manifold, 0.4 * np.eye(2), np.zeros(2))
    report = classify_vector_field(V, action, OFFSET_PLAN)
    assert report.classification == STRONG
    # strong certificate: the recovered group field is the zero field
    W = report.recovered_group_field
    for g in OFFSET_PLAN.group_elements(so2(), count=4):
        np.testing.assert_allclose(W.eval(g).matrix, 0.0, atol=1e-15)


def test_classify_weak_affine_under_translations():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((3, 3))
    action = translation_action(3, [0, 1, 2])
    V = affine_field(action.manifold, A, rng.standard_normal(3))
    report = classify_vector_field(V, action, PLAN)
    assert report.classification == WEAK
    assert report.checks["group_linear"].passed
    assert report.checks["group_linear"].max_residual < 1e-12
    W = report.recovered_group_field
    for g in PLAN.group_elements(action.group, count=5):
        np.testing.assert_allclose(left_trivialize(W, g).coords,
                                   A @ g.matrix[:3, 3], atol=1e-10)


def test_classify_none_symmetric_traceless_under_so2():
    # frozen oracle: at theta=pi/4, p=(1,0) the defect is (-1,-1), whose
    # orbit-tangent least-squares residual is exactly 1
    action = rotation_action(so2())
    S = np.diag([1.0, -1.0])
    V = affine_field(action.manifold, S, np.zeros(2))
    g = exp(so2().algebra([np.pi / 4]))
    p = ManifoldPoint(action.manifold, np.array([1.0, 0.0]))
    r = residual_field(V, action, g, p)
    np.testing.assert_allclose(r.dir, [-1.0, -1.0], atol=1e-12)
    from weakinv import generator_matrix
    G = generator_matrix(action, p)
    x, *_ = np.linalg.lstsq(G, r.dir, rcond=None)
    assert abs(np.linalg.norm(G @ x - r.dir) - 1.0) < 1e-12

    report = classify_vector_field(V, action, OFFSET_PLAN)
    assert report.classification == NONE


def test_classify_partial_only_radial_speed_under_scaling():
    # defect is orbit-tangent everywhere but its rate depends on |p|
    action = scaling_action(2)
    V = radial_scaled_field(action.manifold)
    report = classify_vector_field(V, action, OFFSET_PLAN)
    assert report.classification == PARTIAL_ONLY
    assert report.checks["orbit_tangency"].passed
    assert not report.checks["weak_consistency"].passed


def test_classify_restricted_when_not_infinitesimally_free():
    action = rotation_action(so3())
    rng = np.random.default_rng(11)
    V = affine_field(action.manifold, rng.standard_normal((3, 3)), np.zeros(3))
    report = classify_vector_field(V, action, PLAN)
    assert report.classification == NONE
    assert any("not infinitesimally free" in note for note in report.notes)


def test_classification_stable_across_seeds():
    action = translation_action(3, [0, 1, 2])
    rng = np.random.default_rng(13)
    V = affine_field(action.manifold, rng.standard_normal((3, 3)),
                     rng.standard_normal(3))
    labels = {classify_vector_field(V, action, PLAN.reseeded(s)).classification
              for s in (101, 202, 303)}
    assert labels == {WEAK}


def test_strong_fields_also_carry_the_weak_certificate():
    # a strongly invariant field is weakly invariant with the zero group field:
    # with the strong gate disabled, the weak certificate passes and the
    # recovered velocities vanish
    from weakinv import Tolerances
    action = rotation_action(so2())
    V = affine_field(action.manifold, 0.4 * np.eye(2), np.zeros(2))
    report = classify_vector_field(V, action, OFFSET_PLAN,
                                   Tolerances().override(strong=1e-300))
    assert report.classification == WEAK
    for _, xi_coords in report.group_velocity_table:
        assert np.max(np.abs(xi_coords)) < 1e-12


def test_strong_report_serializes():
    action = rotation_action(so2())
    V = affine_field(action.manifold, 0.4 * np.eye(2), np.zeros(2))
    report = classify_vector_field(V, action, OFFSET_PLAN)
    doc = report.to_json_dict()
    assert doc["classification"] == STRONG
    assert "strong_residual" in doc["checks"]
    assert doc["samples"]["seed"] == OFFSET_PLAN.seed
    assert len(doc["group_velocity_table"]) == OFFSET_PLAN.group_count


# ---------------------------------------------------------------------------
# diffeomorphism classification and group-map recovery
# ---------------------------------------------------------------------------

def _left_mult_diffeo(group, h0):
    action = left_action(group)
    h0_inv = inverse(h0)
    return Diffeomorphism(
        action.manifold,
        forward=lambda p: ManifoldPoint(action.manifold, h0.matrix @ p.value),
        inverse=lambda p: ManifoldPoint(action.manifold, h0_inv.matrix @ p.value),
        differential=lambda tv: TangentVectorM(
            ManifoldPoint(action.manifold, h0.matrix @ tv.base.value),
            h0.matrix @ tv.dir))


def test_recover_identity_map_returns_g():
    action = left_action(so3())
    f = Diffeomorphism(action.manifold, forward=lambda p: p, inverse=lambda p: p)
    points = PLAN.manifold_points(action.manifold, count=3)
    g = exp(so3().algebra([0.4, -0.2, 0.7]))
    h, match = recover_group_map_at(f, action, g, points)
    np.testing.assert_allclose(h.matrix, g.matrix, atol=1e-10)
    assert match < 1e-10


def test_recover_conjugation_oracle_so3():
    # oracle: left-multiplying by h0 conjugates the left action, so the
    # recovered element is h0 g h0^{-1} by direct matrix arithmetic
    group = so3()
    action = left_action(group)
    h0 = exp(group.algebra([0.3, 0.4, 0.0]))
    f = _left_mult_diffeo(group, h0)
    points = PLAN.manifold_points(action.manifold, count=3)
    for g in PLAN.group_elements(group, count=5):
        h, match = recover_group_map_at(f, action, g, points)
        expected = h0.matrix @ g.matrix @ h0.matrix.T
        np.testing.assert_allclose(h.matrix, expected, atol=1e-8)
        assert match < 1e-9


def test_recover_right_translation_commutes_se2():
    # right translations commute with the left action, so the map is identity
    group = se2()
    action = left_action(group)
    k = exp(group.algebra([0.5, -0.3, 0.8]))
    k_inv = inverse(k)
    f = Diffeomorphism(
        action.manifold,
        forward=lambda p: ManifoldPoint(action.manifold, p.value @ k.matrix),
        inverse=lambda p: ManifoldPoint(action.manifold, p.value @ k_inv.matrix))
    points = PLAN.manifold_points(action.manifold, count=3)
    for g in PLAN.group_elements(group, count=5):
        h, match = recover_group_map_at(f, action, g, points)
        np.testing.assert_allclose(h.matrix, g.matrix, atol=1e-9)
        assert match < 1e-9


def test_classify_diffeo_conjugation_is_weak():
    group = so3()
    action = left_action(group)
    h0 = exp(group.algebra([0.3, 0.4, 0.0]))
    f = _left_mult_diffeo(group, h0)
    plan = SamplingPlan(seed=5, group_count=6, point_count=3, pair_count=8)
    report = classify_diffeomorphism(f, action, plan)
    assert report.classification == WEAK
    assert report.checks["automorphism"].passed
    sigma = report.recovered_group_map
    g = exp(group.algebra([0.2, -0.5, 0.6]))
    np.testing.assert_allclose(sigma.eval(g).matrix,
                               h0.matrix @ g.matrix @ h0.matrix.T, atol=1e-8)


def test_classify_diffeo_identity_is_strong():
    action = left_action(so3())
    f = Diffeomorphism(action.manifold, forward=lambda p: p, inverse=lambda p: p)
    plan = SamplingPlan(seed=5, group_count=5, point_count=3, pair_count=6)
    report = classify_diffeomorphism(f, action, plan)
    assert report.classification == STRONG


def test_classify_diffeo_translation_shift_is_strong():
    action = translation_action(1, [0])
    f = Diffeomorphism(
        action.manifold,
        forward=lambda p: ManifoldPoint(action.manifold, p.value + 2.5),
        inverse=lambda p: ManifoldPoint(action.manifold, p.value - 2.5))
    plan = SamplingPlan(seed=5, group_count=6, point_count=4, pair_count=6)
    report = classify_diffeomorphism(f, action, plan)
    assert report.classification == STRONG


def test_classify_diffeo_shear_under_rotations_is_none():
    # a shear conjugates rotations to non-rotations, so no group element can
    # match the conjugated map
    action = rotation_action(so2())

    def fwd(p):
        x, y = p.value
        return ManifoldPoint(action.manifold, np.array([x + 0.5 * y * y, y]))

    def inv(p):
        x, y = p.value
        return ManifoldPoint(action.manifold, np.array([x - 0.5 * y * y, y]))

    f = Diffeomorphism(action.manifold, forward=fwd, inverse=inv)
    plan = SamplingPlan(seed=5, group_count=5, point_count=4, pair_count=6,
                        point_center=(1.75, 0.25), point_box=1.0)
    report = classify_diffeomorphism(f, action, plan)
    assert report.classification == NONE


# ---------------------------------------------------------------------------
# automorphism check
# ---------------------------------------------------------------------------

def test_check_automorphism_identity():
    sigma = GroupMap(so3(), lambda g: g)
    result = check_automorphism(sigma, PLAN)
    assert result.passed and result.max_residual == 0.0
    extra = dict(result.extra)
    assert extra["identity_residual"] == 0.0
    assert extra["invert_max_residual"] < 1e-10


def test_check_automorphism_conjugation():
    group = so3()
    h0 = exp(group.algebra([0.3, 0.0, 0.4]))
    h0_inv = inverse(h0)
    sigma = GroupMap(group, lambda g: compose(compose(h0, g), h0_inv))
    result = check_automorphism(sigma, PLAN)
    assert result.passed and result.max_residual < 1e-12


def test_check_automorphism_rejects_right_translation():
    # frozen oracle: sigma(e)sigma(e) vs sigma(e) differs by ||k^2 - k|| = 0.42267...
    group = so3()
    k = exp(group.algebra([0.3, 0.0, 0.0]))
    e = group.identity()
    assert abs(np.linalg.norm(compose(k, k).matrix - k.matrix)
               - 0.4226748673597426) < 1e-12
    sigma = GroupMap(group, lambda g: compose(g, k))
    result = check_automorphism(sigma, PLAN)
    assert not result.passed
    assert result.max_residual >= 1e-2
    assert dict(result.extra)["identity_residual"] > 1e-2
