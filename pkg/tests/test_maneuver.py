import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import EPS66, R66, S67
from formation_lab.errors import AssumptionViolation, ContractViolation
from formation_lab.graph import DEFAULT_PAIRS, build_graph
from formation_lab.laplacian import NominalConfig, assemble
from formation_lab.maneuver import (
    Constant,
    ManeuverPiece2D,
    ManeuverPiece3D,
    ManeuverSchedule2D,
    ManeuverSchedule3D,
    Ramp,
    Sinusoid,
    Smoothstep,
    eval_target_2d,
    eval_target_3d,
    from_world,
    orientation_plan,
    reindex_3d,
    rotation_matrix,
    shape_interp,
    target_speed_bound,
    to_world,
)

Q_GENERIC = np.array([(1, 1, 3.5), (-2, 3, 1.1), (-3, -1, 1.2), (-5, -2, 1.3), (-6, 3.5, 2.4), (-8, 1, 3.5)])

PROFILES = [
    Constant(2 - 1j),
    Ramp(0.0, 2.0, 1.0, 3.0),
    Ramp(1.0, 4.0, np.array([1j, 2.0]), np.array([0.5, -1.0])),
    Smoothstep(0.5, 3.0, 0.0, math.pi / 3),
    Smoothstep(0.0, 1.0, R66[:3], S67[:3]),
    Sinusoid(0.7, 2.0, 0.3, 1.5),
    Sinusoid(1 + 1j, 0.5, offset=2j),
]


@pytest.mark.parametrize("prof", PROFILES)
def test_profile_rate_matches_finite_difference(prof):
    kinks = (prof.t0, prof.t1) if isinstance(prof, Ramp) else ()
    for t in np.linspace(-0.3, 4.3, 37):
        if any(abs(t - k) < 1e-5 for k in kinks):
            continue
        v, dv = prof(t)
        fd = (np.asarray(prof(t + 1e-6)[0]) - np.asarray(prof(t - 1e-6)[0])) / 2e-6
        np.testing.assert_allclose(dv, fd, atol=1e-6 * (1 + np.abs(v).max()))


@pytest.mark.parametrize("prof", PROFILES)
def test_bulk_sampling_matches_pointwise(prof):
    ts = np.linspace(-1, 5, 61)
    vals, rates = prof.sample(ts)
    for k, t in enumerate(ts):
        v, dv = prof(t)
        np.testing.assert_allclose(vals[k], v, atol=1e-14)
        np.testing.assert_allclose(rates[k], dv, atol=1e-14)


def test_blend_endpoints_and_hold():
    s = Smoothstep(1.0, 3.0, 2.0, 6.0)
    assert s(1.0) == (2.0, 0.0) and s(3.0) == (6.0, 0.0)
    assert s(0.0) == (2.0, 0.0) and s(9.0) == (6.0, 0.0)
    assert s(2.0)[0] == pytest.approx(4.0) and s(2.0)[1] == pytest.approx(3.0)
    with pytest.raises(ContractViolation):
        Ramp(1.0, 1.0, 0.0, 1.0)


def _sched(beta=Constant(0j), h=Constant(1.0), theta=Constant(0.0), s_L=Constant(R66[:3]), span=(0, 10)):
    return ManeuverSchedule2D([ManeuverPiece2D(span[0], span[1], beta, h, theta, s_L)])


def test_identity_maneuver(blocks2d):
    tgt = eval_target_2d(_sched(), blocks2d, 3.0)
    np.testing.assert_allclose(tgt.p_star, R66, atol=1e-12)
    np.testing.assert_array_equal(tgt.p_star_dot, 0)


def test_hand_arithmetic_target(blocks2d):
    sch = _sched(Constant(2 + 1j), Constant(2.0), Constant(math.pi / 2), Constant(np.ones(3, complex)))
    np.testing.assert_allclose(eval_target_2d(sch, blocks2d, 1.0).p_star, 2 + 3j, atol=1e-12)


def test_target_rate_matches_finite_difference(blocks2d):
    sch = _sched(Smoothstep(0, 10, 0j, 5 - 2j), Ramp(2, 8, 1.0, 0.6), Sinusoid(0.4, 0.7),
                 Smoothstep(3, 7, R66[:3], S67[:3]))
    for t in np.linspace(0.1, 9.9, 25):
        tgt = eval_target_2d(sch, blocks2d, t)
        fd = (eval_target_2d(sch, blocks2d, t + 1e-6).p_star - eval_target_2d(sch, blocks2d, t - 1e-6).p_star) / 2e-6
        assert np.abs(tgt.p_star_dot - fd).max() <= 1e-6 * max(1.0, np.abs(tgt.p_star_dot).max())
        assert np.abs(blocks2d.residual(tgt.p_star)).max() <= 1e-9 * np.abs(tgt.p_star).max()


def test_schedule_contracts(blocks2d):
    with pytest.raises(ContractViolation):
        eval_target_2d(_sched(), blocks2d, 10.5)
    with pytest.raises(ContractViolation):
        _sched(h=Constant(0.0))
    a = ManeuverPiece2D(0, 5, s_L=Constant(R66[:3]))
    with pytest.raises(ContractViolation):
        ManeuverSchedule2D([a, ManeuverPiece2D(4, 6, s_L=Constant(R66[:3]))])
    with pytest.raises(ContractViolation):
        ManeuverSchedule2D([a, ManeuverPiece2D(5.5, 6, s_L=Constant(R66[:3]))])
    sch = ManeuverSchedule2D([a, ManeuverPiece2D(5, 6, s_L=Constant(R66[:3]))])
    assert sch.index_at(5.0) == 1 and sch.index_at(4.999) == 0


def test_continuity_across_boundaries(blocks2d):
    beta = Smoothstep(0, 6, 0j, 3 + 1j)
    pieces = [ManeuverPiece2D(a, b, beta=beta, s_L=Constant(R66[:3])) for a, b in [(0, 2), (2, 6)]]
    sch = ManeuverSchedule2D(pieces)
    assert max(sch.continuity_gaps()) <= 1e-12
    left = eval_target_2d(ManeuverSchedule2D(pieces[:1]), blocks2d, 2.0).p_star
    right = eval_target_2d(sch, blocks2d, 2.0).p_star
    assert np.abs(left - right).max() <= 1e-9
    jump = ManeuverSchedule2D([pieces[0], ManeuverPiece2D(2, 6, beta=Constant(1j), s_L=Constant(R66[:3]))])
    assert max(jump.continuity_gaps()) > 0.1


def test_speed_bound_closed_form(blocks2d):
    # a linear translation of slope |5+12i|/10 = 1.3
    sch = _sched(beta=Ramp(0, 10, 0j, 5 + 12j))
    assert target_speed_bound(sch) == pytest.approx(1.3 * 1.1, rel=1e-12)
    assert target_speed_bound(sch, margin=0.0) == pytest.approx(1.3, rel=1e-12)
    # rotation at unit rate: the fastest leader is the one farthest from the origin
    rot = _sched(theta=Ramp(0, 10, 0.0, 10.0))
    assert target_speed_bound(rot, margin=0.0) == pytest.approx(np.abs(R66[:3]).max(), rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.complex_numbers(max_magnitude=50, allow_nan=False, allow_infinity=False),
       st.floats(0.05, 20), st.floats(-10, 10),
       st.lists(st.complex_numbers(max_magnitude=20, allow_nan=False, allow_infinity=False), min_size=3,
                max_size=3))
def test_maneuver_invariance_property(beta, h, theta, s_L):
    g = build_graph(6, 3, DEFAULT_PAIRS)
    b = assemble(g, NominalConfig(R66))
    sch = _sched(Constant(beta), Constant(h), Constant(theta), Constant(np.array(s_L)))
    p = eval_target_2d(sch, b, 1.0).p_star
    assert np.linalg.norm(b.W_ff @ p[3:] + b.W_fl @ p[:3]) <= 1e-9 * max(np.linalg.norm(p), 1e-300)


# ---------------------------------------------------------------- 3-D


def test_reindexing():
    a, b, c = reindex_3d([(1, 2, 3)])
    assert (a.r[0], a.epsilon[0]) == (1 + 2j, 3)
    assert (b.r[0], b.epsilon[0]) == (1 + 3j, 2)
    assert (c.r[0], c.epsilon[0]) == (2 + 3j, 1)
    xyz = np.array([[1.0, 2.0, 3.0], [-4.0, 5.0, 6.0]])
    for ph in ("yaw", "pitch", "roll"):
        np.testing.assert_array_equal(to_world(ph, *from_world(ph, xyz)), xyz)


def _piece3(phase, theta, q, span=(0, 1)):
    r, eps = from_world(phase, q)
    return ManeuverPiece3D(span[0], span[1], phase, theta=theta, s_L_p=Constant(r[:3]), s_L_tau=Constant(eps[:3]))


def _blocks(graph, q, phase):
    from formation_lab.maneuver import PHASE_PLANES
    r, eps = from_world(phase, q)
    return assemble(graph, NominalConfig(r, eps), plane=PHASE_PLANES[phase])


def test_yaw_quarter_turn(graph6):
    q = np.c_[R66.real, R66.imag, EPS66]
    sch = ManeuverSchedule3D([_piece3("yaw", Constant(math.pi / 2), q)])
    tgt = eval_target_3d(sch, _blocks(graph6, q, "yaw"), 0.5)
    np.testing.assert_allclose(tgt.world, np.c_[-q[:, 1], q[:, 0], q[:, 2]], atol=1e-12)


def test_pitch_half_turn(graph6):
    q = Q_GENERIC
    sch = ManeuverSchedule3D([_piece3("pitch", Constant(math.pi), q)])
    b = _blocks(graph6, q, "pitch")
    tgt = eval_target_3d(sch, b, 0.5)
    np.testing.assert_allclose(tgt.world, np.c_[-q[:, 0], q[:, 1], -q[:, 2]], atol=1e-12)
    assert np.abs(b.residual(tgt.p_star)).max() <= 1e-9
    assert np.abs(b.axis_residual(tgt.tau_star)).max() <= 1e-9
    with pytest.raises(ContractViolation):
        eval_target_3d(sch, _blocks(graph6, q, "yaw"), 0.5)


def test_3d_rates_and_invariance(graph6):
    q = np.c_[R66.real, R66.imag, EPS66]
    r, eps = from_world("yaw", q)
    piece = ManeuverPiece3D(0, 4, "yaw", beta_p=Ramp(0, 4, 0j, 2 + 1j), beta_tau=Sinusoid(0.5, 1.0),
                            h=Smoothstep(0, 4, 1.0, 1.5), theta=Smoothstep(1, 3, 0.0, 1.0),
                            s_L_p=Constant(r[:3]), s_L_tau=Constant(eps[:3]))
    sch = ManeuverSchedule3D([piece])
    b = _blocks(graph6, q, "yaw")
    for t in np.linspace(0.2, 3.8, 13):
        tg = eval_target_3d(sch, b, t)
        fd = (eval_target_3d(sch, b, t + 1e-6).world - eval_target_3d(sch, b, t - 1e-6).world) / 2e-6
        np.testing.assert_allclose(tg.world_dot, fd, atol=1e-6 * max(1, np.abs(tg.world_dot).max()))
        assert np.abs(b.W_ff @ tg.p_star[3:] + b.W_fl @ tg.p_star[:3]).max() <= 1e-9
        assert np.abs(b.M_ff @ tg.tau_star[3:] + b.M_fl @ tg.tau_star[:3]).max() <= 1e-9


# ---------------------------------------------------------------- shape interpolation


def test_shape_interp_endpoints_and_residual(blocks2d):
    piece = shape_interp(R66, S67, 5.0, 6.0, blocks2d)
    sch = ManeuverSchedule2D([piece])
    np.testing.assert_allclose(eval_target_2d(sch, blocks2d, 5.0).p_star, R66, atol=1e-12)
    np.testing.assert_allclose(eval_target_2d(sch, blocks2d, 6.0).p_star, S67, atol=1e-10)
    for t in np.linspace(5, 6, 101):
        s = eval_target_2d(sch, blocks2d, t).p_star
        assert np.abs(blocks2d.residual(s)).max() <= 1e-9


def test_shape_interp_repairs_or_rejects(blocks2d, caplog):
    bad = S67.copy()
    bad[3:] += blocks2d.follower_map @ np.array([0.5, 0, 0])  # off the manifold but still reachable
    piece = shape_interp(R66, bad, 0.0, 1.0, blocks2d)
    assert "recomputing" in caplog.text
    s_end = eval_target_2d(ManeuverSchedule2D([piece]), blocks2d, 1.0).p_star
    np.testing.assert_allclose(s_end, S67, atol=1e-10)
    with pytest.raises(ContractViolation):
        shape_interp(R66, S67, 1.0, 1.0, blocks2d)
    # follower shapes outside the reachable set
    g = build_graph(6, 3, {4: (1, 2), 5: (1, 4), 6: (2, 5)})
    r = np.array([0, 1, 2, 1j, 2 + 1j, -1 + 2j])
    b = assemble(g, NominalConfig(r))
    with pytest.raises(AssumptionViolation):
        shape_interp(r, [0, 1, 2, 1, 2 + 5j, -3j], 0, 1, b)


# ---------------------------------------------------------------- orientation plans


def _terminal(plan):
    t = plan.schedule.t_end
    return plan.target(t).world


def test_single_yaw_phase(graph6):
    c = Q_GENERIC.mean(axis=0)
    plan = orientation_plan(Q_GENERIC, graph6, [("yaw", Smoothstep(0, 2, 0.0, math.pi / 2), (0, 2))], center=c)
    R = rotation_matrix("yaw", math.pi / 2)
    np.testing.assert_allclose(_terminal(plan), (Q_GENERIC - c) @ R.T + c, atol=1e-9)
    np.testing.assert_allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-15)


def test_composed_rotation_oracle(graph6):
    c = Q_GENERIC.mean(axis=0)
    phases = [("yaw", Smoothstep(0, 1, 0.0, math.pi / 2), (0, 1)),
              ("pitch", Smoothstep(1, 2, 0.0, math.pi / 2), (1, 2)),
              ("roll", Smoothstep(2, 3, 0.0, math.pi / 2), (2, 3))]
    plan = orientation_plan(Q_GENERIC, graph6, phases, center=c, t_end=4)
    # explicit matrices about Z, then Y (x toward z), then X (y toward z)
    Rz = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1]])
    Ry = np.array([[0, 0, -1], [0, 1, 0], [1, 0, 0]])
    Rx = np.array([[1, 0, 0], [0, 0, -1], [0, 1, 0]])
    R = Rx @ Ry @ Rz
    np.testing.assert_allclose(plan.composed_rotation, R, atol=1e-15)
    np.testing.assert_allclose(_terminal(plan), (Q_GENERIC - c) @ R.T + c, atol=1e-9)
    # switching planes never moves a target
    for tb in plan.schedule.boundaries:
        before = plan.blocks_at(tb - 1e-9)
        idx = plan.schedule.index_at(tb - 1e-9)
        left = eval_target_3d(ManeuverSchedule3D(plan.schedule.pieces[idx:idx + 1]), before, tb).world
        np.testing.assert_allclose(left, plan.target(tb).world, atol=1e-9)
    # every evaluated target satisfies both constraint systems of its phase
    for t in np.linspace(0, 4, 41):
        tg, b = plan.target(t), plan.blocks_at(t)
        assert np.abs(b.residual(tg.p_star)).max() <= 1e-9
        assert np.abs(b.axis_residual(tg.tau_star)).max() <= 1e-9


def test_plan_contracts(graph6):
    plan = orientation_plan(Q_GENERIC, graph6, [])
    np.testing.assert_allclose(_terminal(plan), Q_GENERIC, atol=1e-12)
    np.testing.assert_array_equal(plan.composed_rotation, np.eye(3))
    with pytest.raises(ContractViolation):
        orientation_plan(Q_GENERIC, graph6, [("yaw", Smoothstep(0, 2, 0.0, 1.0), (0, 2)),
                                            ("roll", Smoothstep(1, 3, 0.0, 1.0), (1, 3))])
    with pytest.raises(ContractViolation):
        orientation_plan(Q_GENERIC, graph6, [("yaw", Constant(0.3), (0, 2))])
    with pytest.raises(ContractViolation):
        orientation_plan(Q_GENERIC, graph6, [("spin", Constant(0.0), (0, 2))])
