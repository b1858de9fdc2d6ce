"""Flows: integrators, flow-level invariance, group-map flow structure."""

import math

import numpy as np
import pytest
from scipy.linalg import expm

from weakinv import (IntegratorConfig, ManifoldPoint, SamplingPlan,
                     affine_field, check_flow_weak_invariance,
                     check_group_map_is_flow, check_small_time_extension,
                     classify_vector_field, differentiate_flow_at_zero, exp,
                     export_trajectory, flow, integrate, left_action,
                     left_invariant_field, recovered_map_of_flow, so3,
                     translation_action)
from weakinv.actions import group_affine_field_m
from weakinv.flows import DivergenceError, _step_sizes
from weakinv.groups import trivialized_field

PLAN = SamplingPlan(seed=8, group_count=6, point_count=5, pair_count=8)

A_MILD = np.array([[0.3, -0.2, 0.0], [0.1, 0.0, 0.4], [0.0, 0.2, -0.1]])


def scalar_setup(a=1.0, b=0.5):
    action = translation_action(1, [0])
    V = affine_field(action.manifold, np.array([[b]]), np.array([a]))
    W = trivialized_field(action.group,
                          lambda g: np.array([b * g.matrix[0, 1]]), kind="group_linear")
    return action, V, W


def closed_form_scalar(a, b, t, p):
    return math.exp(b * t) * p + (a / b) * (math.exp(b * t) - 1.0)


# ---------------------------------------------------------------------------
# integrators
# ---------------------------------------------------------------------------

def test_step_sizes_partial_final_step():
    sizes = _step_sizes(0.0015, 1e-3)
    assert len(sizes) == 2 and abs(sizes[1] - 5e-4) < 1e-15
    assert _step_sizes(0.0, 1e-3) == []
    back = _step_sizes(-0.002, 1e-3)
    assert back == [-1e-3, -1e-3]


def test_scalar_flow_matches_closed_form_oracle():
    a, b = 1.0, 0.5
    action, V, _ = scalar_setup(a, b)
    config = IntegratorConfig(scheme="rk4", step=1e-3)
    terminal = integrate(V, config, 1.0, ManifoldPoint(action.manifold, np.array([0.0])))
    # frozen closed form: e^{0.5}*0 + 2 (e^{0.5} - 1)
    assert abs(terminal.value[0] - 1.2974425414002564) < 1e-10


def test_zero_field_flow_is_stationary():
    action, _, _ = scalar_setup()
    V = affine_field(action.manifold, np.zeros((1, 1)), np.zeros(1))
    handle = flow(V, IntegratorConfig(step=1e-2))
    p = ManifoldPoint(action.manifold, np.array([1.7]))
    for t in [0.0, 0.3, -2.0]:
        np.testing.assert_allclose(handle.evaluate(t, p).value, p.value, atol=1e-14)


def test_evaluate_at_zero_returns_start_exactly():
    _, V, _ = scalar_setup()
    p = ManifoldPoint(V.manifold, np.array([0.4]))
    assert flow(V, IntegratorConfig()).evaluate(0.0, p) is p


def test_left_invariant_flow_matches_exp_oracle():
    group = so3()
    xi = group.algebra([0.4, -0.2, 0.7])
    W = left_invariant_field(xi)
    handle = flow(W, IntegratorConfig(scheme="rkmk4", step=1e-3))
    terminal = handle.evaluate(1.0, group.identity())
    np.testing.assert_allclose(terminal.matrix, expm(group.algebra_matrix(xi.coords)),
                               atol=1e-9)


def test_flow_group_law():
    _, V, _ = scalar_setup()
    handle = flow(V, IntegratorConfig(step=1e-3))
    p = ManifoldPoint(V.manifold, np.array([0.3]))
    joint = handle.evaluate(1.0, p).value
    split = handle.evaluate(0.3, handle.evaluate(0.7, p)).value
    assert abs(joint[0] - split[0]) < 2e-10

    group = so3()
    W = left_invariant_field(group.algebra([0.2, 0.5, -0.1]))
    gh = flow(W, IntegratorConfig(scheme="rkmk4", step=1e-3))
    e = group.identity()
    joint = gh.evaluate(0.8, e).matrix
    split = gh.evaluate(0.5, gh.evaluate(0.3, e)).matrix
    np.testing.assert_allclose(joint, split, atol=2e-10)


def test_rk4_richardson_fourth_order():
    a, b = 1.0, 0.5
    action, V, _ = scalar_setup(a, b)
    p = ManifoldPoint(action.manifold, np.array([0.2]))
    exact = closed_form_scalar(a, b, 1.0, 0.2)
    err = {}
    for dt in (0.05, 0.025):
        terminal = integrate(V, IntegratorConfig(step=dt), 1.0, p)
        err[dt] = abs(terminal.value[0] - exact)
    assert err[0.05] / err[0.025] >= 8.0


def test_rkmk4_richardson_fourth_order():
    group = so3()
    D = group.algebra([0.0, 0.0, 1.0])
    U = group.algebra([0.2, -0.1, 0.3])
    V = group_affine_field_m(group, D, U)
    g0 = ManifoldPoint(V.manifold, exp(group.algebra([0.3, 0.1, -0.2])).matrix)
    reference = integrate(V, IntegratorConfig(scheme="rkmk4", step=1e-3), 1.0, g0)
    err = {}
    for dt in (0.05, 0.025):
        terminal = integrate(V, IntegratorConfig(scheme="rkmk4", step=dt), 1.0, g0)
        err[dt] = np.linalg.norm(terminal.value - reference.value)
    assert err[0.05] / err[0.025] >= 8.0


def test_ambient_projection_keeps_group_membership():
    group = so3()
    V = group_affine_field_m(group, group.algebra([0.0, 0.0, 1.0]),
                             group.algebra([0.2, -0.1, 0.3]))
    g0 = ManifoldPoint(V.manifold, np.eye(3))
    cfg = IntegratorConfig(scheme="rk4", step=1e-3, projection="polar")
    terminal = integrate(V, cfg, 1.0, g0)
    assert group.membership_residual(terminal.value) < 1e-8
    # ambient and exponential schemes land on the same point at 4th order
    mk = integrate(V, IntegratorConfig(scheme="rkmk4", step=1e-3), 1.0, g0)
    np.testing.assert_allclose(terminal.value, mk.value, atol=1e-8)


def test_divergence_raises_with_time():
    manifold = affine_field(translation_action(1, [0]).manifold,
                            np.zeros((1, 1)), np.zeros(1)).manifold
    from weakinv.actions import VectorFieldM
    from weakinv.actions import TangentVectorM
    quadratic = VectorFieldM(manifold,
                             lambda p: TangentVectorM(p, p.value ** 2), kind="custom")
    handle = flow(quadratic, IntegratorConfig(step=1e-3, blowup=1e9))
    with pytest.raises(DivergenceError) as info:
        handle.evaluate(1.0, ManifoldPoint(manifold, np.array([2.0])))
    assert 0.0 < info.value.time <= 0.55  # blow-up time of dp/dt = p^2, p(0)=2


def test_batched_evaluation_matches_single_trajectories():
    # ambient scheme on R^3
    action = translation_action(3, [0, 1, 2])
    rng = np.random.default_rng(3)
    V = affine_field(action.manifold, 0.3 * rng.standard_normal((3, 3)),
                     rng.standard_normal(3))
    handle = flow(V, IntegratorConfig(step=1e-2))
    starts = [ManifoldPoint(action.manifold, rng.standard_normal(3)) for _ in range(5)]
    batched = handle.evaluate_many(0.8, starts)
    for s, b in zip(starts, batched):
        np.testing.assert_allclose(b.value, handle.evaluate(0.8, s).value, atol=1e-12)

    # exponential scheme on SO(3)
    group = so3()
    V = group_affine_field_m(group, group.algebra([0.0, 0.0, 1.0]),
                             group.algebra([0.2, -0.1, 0.3]))
    handle = flow(V, IntegratorConfig(scheme="rkmk4", step=1e-2))
    starts = [ManifoldPoint(V.manifold, exp(group.algebra(c)).matrix)
              for c in rng.uniform(-1.0, 1.0, (5, 3))]
    batched = handle.evaluate_many(0.8, starts)
    for s, b in zip(starts, batched):
        np.testing.assert_allclose(b.value, handle.evaluate(0.8, s).value, atol=1e-11)


def test_batched_evaluation_without_batch_eval_support():
    # custom fields take the pointwise fallback inside the batched stepper
    from weakinv.actions import VectorFieldM, TangentVectorM
    action = translation_action(1, [0])
    V = VectorFieldM(action.manifold,
                     lambda p: TangentVectorM(p, np.tanh(p.value)), kind="custom")
    handle = flow(V, IntegratorConfig(step=1e-2))
    starts = [ManifoldPoint(action.manifold, np.array([v])) for v in (-1.0, 0.2, 2.0)]
    batched = handle.evaluate_many(1.0, starts)
    for s, b in zip(starts, batched):
        np.testing.assert_allclose(b.value, handle.evaluate(1.0, s).value, atol=1e-12)


def test_lifted_group_field_integrates_like_the_original():
    from weakinv import field_from_group_field, inner_derivation_field
    group = so3()
    W = inner_derivation_field(group.algebra([0.0, 0.5, 0.2]))
    lifted = field_from_group_field(W)
    cfg = IntegratorConfig(scheme="rkmk4", step=1e-2)
    g0 = exp(group.algebra([0.3, -0.1, 0.4]))
    direct = flow(W, cfg).evaluate(1.0, g0)
    via_lift = flow(lifted, cfg).evaluate(1.0, ManifoldPoint(lifted.manifold, g0.matrix))
    np.testing.assert_allclose(direct.matrix, via_lift.value, atol=1e-12)


def test_recovered_group_field_complete_to_long_times():
    action, V, _ = scalar_setup()
    report = classify_vector_field(V, action, SamplingPlan(seed=4, group_count=6,
                                                           point_count=5))
    W = report.recovered_group_field
    handle = flow(W, IntegratorConfig(scheme="rkmk4", step=0.05))
    for t in (10.0, -10.0):
        handle.evaluate(t, action.group.identity())  # must not diverge


def test_trajectory_export_deterministic(tmp_path):
    _, V, _ = scalar_setup()
    handle = flow(V, IntegratorConfig(step=0.25))
    p = ManifoldPoint(V.manifold, np.array([0.0]))
    path_a = tmp_path / "a.csv"
    path_b = tmp_path / "b.csv"
    export_trajectory(handle, 1.0, p, path_a)
    export_trajectory(handle, 1.0, p, path_b)
    content = path_a.read_bytes()
    assert content == path_b.read_bytes()
    lines = content.decode().strip().splitlines()
    assert lines[0] == "t,coord_0"
    assert len(lines) == 6  # header + 4 steps + t=0 row


# ---------------------------------------------------------------------------
# flow-level weak invariance
# ---------------------------------------------------------------------------

def test_flow_weak_invariance_strong_case():
    from weakinv import rotation_action, zero_field_g
    action = rotation_action(so3())
    V = affine_field(action.manifold, 0.4 * np.eye(3), np.zeros(3))
    v_flow = flow(V, IntegratorConfig(step=1e-3))
    w_flow = flow(zero_field_g(so3()), IntegratorConfig(scheme="rkmk4", step=1e-3))
    result = check_flow_weak_invariance(v_flow, w_flow, action, [0.25], PLAN)
    assert result.passed, result.max_residual


def test_flow_weak_invariance_scalar_closed_form():
    # closed-form identity: flowing from q + g equals flowing from q and
    # translating by e^{bt} g
    a, b = 1.0, 0.5
    action, V, W = scalar_setup(a, b)
    v_flow = flow(V, IntegratorConfig(step=1e-3))
    w_flow = flow(W, IntegratorConfig(scheme="rkmk4", step=1e-3))
    g = exp(action.group.algebra([2.0]))
    q = ManifoldPoint(action.manifold, np.array([0.0]))
    lhs = action.apply(w_flow.evaluate(1.0, g), v_flow.evaluate(1.0, q)).value[0]
    rhs = v_flow.evaluate(1.0, action.apply(g, q)).value[0]
    expected = closed_form_scalar(a, b, 1.0, 2.0)
    assert abs(lhs - expected) < 1e-9 and abs(rhs - expected) < 1e-9
    result = check_flow_weak_invariance(v_flow, w_flow, action,
                                        [0.1, 0.5, 1.0], PLAN)
    assert result.passed and result.max_residual < 1e-6


def test_differentiate_flow_at_zero_matches_field_relation():
    a, b = 1.0, 0.5
    action, V, W = scalar_setup(a, b)
    v_flow = flow(V, IntegratorConfig(step=1e-3))
    w_flow = flow(W, IntegratorConfig(scheme="rkmk4", step=1e-3))
    g = exp(action.group.algebra([1.0]))
    q = ManifoldPoint(action.manifold, np.array([0.7]))
    lhs, rhs = differentiate_flow_at_zero(v_flow, w_flow, action, g, q)
    # both sides equal V at the moved point: a + b (q + g)
    expected = a + b * (0.7 + 1.0)
    assert abs(lhs.dir[0] - expected) < 1e-4
    assert abs(rhs.dir[0] - expected) < 1e-4


def test_differentiate_flow_at_zero_detects_corrupted_group_field():
    a, b = 1.0, 0.5
    action, V, _ = scalar_setup(a, b)
    doubled = trivialized_field(action.group,
                                lambda g: np.array([2.0 * b * g.matrix[0, 1]]))
    v_flow = flow(V, IntegratorConfig(step=1e-3))
    w_flow = flow(doubled, IntegratorConfig(scheme="rkmk4", step=1e-3))
    g = exp(action.group.algebra([1.0]))
    q = ManifoldPoint(action.manifold, np.array([0.7]))
    lhs, rhs = differentiate_flow_at_zero(v_flow, w_flow, action, g, q)
    gap = abs(lhs.dir[0] - rhs.dir[0])
    assert abs(gap - b * 1.0) < 1e-4  # mismatch is the extra generator b*g
    assert gap >= 1e-1


# ---------------------------------------------------------------------------
# small-time extension and group-map flow property
# ---------------------------------------------------------------------------

def test_small_time_extension_strong_case():
    from weakinv import rotation_action
    action = rotation_action(so3())
    V = affine_field(action.manifold, -0.3 * np.eye(3), np.zeros(3))
    v_flow = flow(V, IntegratorConfig(step=1e-3))
    result = check_small_time_extension(v_flow, action, PLAN, delta=0.05, n_max=4)
    assert result.passed, result.max_residual


def test_small_time_extension_scalar_exponential():
    # recovered small-time map scales by e^{b delta}; its n-th power matches
    # the time n*delta map exactly in the closed form
    action, V, _ = scalar_setup()
    v_flow = flow(V, IntegratorConfig(step=1e-3))
    result = check_small_time_extension(v_flow, action, PLAN, delta=0.05, n_max=8)
    assert result.passed and result.max_residual < 1e-7


def test_small_time_extension_fails_for_asymmetric_field():
    # reported as a failing check, not an exception
    from weakinv import rotation_action
    from weakinv import so2
    action = rotation_action(so2())
    S = np.array([[1.0, 0.0], [0.0, -1.0]])
    V = affine_field(action.manifold, S, np.zeros(2))
    v_flow = flow(V, IntegratorConfig(step=1e-3))
    plan = SamplingPlan(seed=8, group_count=3, point_count=3,
                        point_center=(1.75, 0.25), point_box=1.0)
    result = check_small_time_extension(v_flow, action, plan, delta=0.05, n_max=3)
    assert not result.passed
    assert result.max_residual > 1e-3


def test_group_map_flow_property_scalar():
    action, V, _ = scalar_setup()
    v_flow = flow(V, IntegratorConfig(step=1e-3))
    points = PLAN.manifold_points(action.manifold, count=3)
    map_at = recovered_map_of_flow(v_flow, action, points)
    result = check_group_map_is_flow(map_at, [(0.1, 0.1), (0.1, 0.2), (0.2, 0.2)],
                                     action.group, PLAN)
    assert result.passed and result.max_residual < 1e-7
    assert dict(result.extra)["identity_residual"] < 1e-9
    # oracle: the recovered time-t map is multiplication by e^{bt}
    sigma = map_at(0.4)
    g = exp(action.group.algebra([1.3]))
    assert abs(sigma.eval(g).matrix[0, 1] - math.exp(0.5 * 0.4) * 1.3) < 1e-8


def test_group_map_of_group_affine_flow_is_conjugation_oracle():
    # oracle: the recovered map of the conjugation-plus-drift flow at time t
    # is g -> expm(tD) g expm(-tD)
    group = so3()
    action = left_action(group)
    D_coords = np.array([0.0, 0.0, 1.0])
    V = group_affine_field_m(group, group.algebra(D_coords),
                             group.algebra([0.2, -0.1, 0.3]))
    v_flow = flow(V, IntegratorConfig(scheme="rkmk4", step=1e-3))
    points = PLAN.manifold_points(action.manifold, count=2)
    map_at = recovered_map_of_flow(v_flow, action, points)
    sigma = map_at(0.1)
    D_mat = group.algebra_matrix(D_coords)
    conj = expm(0.1 * D_mat)
    for g in PLAN.group_elements(group, count=3):
        np.testing.assert_allclose(sigma.eval(g).matrix,
                                   conj @ g.matrix @ conj.T, atol=1e-8)


def test_group_map_of_se2_flow_matches_conjugation_oracle():
    from weakinv import se2
    group = se2()
    action = left_action(group)
    D = group.algebra([0.4, -0.2, 0.7])
    V = group_affine_field_m(group, D, group.algebra([0.1, 0.3, -0.5]))
    v_flow = flow(V, IntegratorConfig(scheme="rkmk4", step=1e-3))
    points = PLAN.manifold_points(action.manifold, count=2)
    sigma = recovered_map_of_flow(v_flow, action, points)(0.1)
    conj = expm(0.1 * group.algebra_matrix(D.coords))
    conj_inv = np.linalg.inv(conj)
    for g in PLAN.group_elements(group, count=3):
        np.testing.assert_allclose(sigma.eval(g).matrix,
                                   conj @ g.matrix @ conj_inv, atol=1e-8)
