import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import EPS66, R66, S67
from formation_lab.errors import ContractViolation, DegenerateConfigurationError, NotLocalizableError
from formation_lab.graph import CHAIN_PAIRS, build_graph
from formation_lab.laplacian import (
    NominalConfig,
    assemble,
    complex_weights,
    hermitian_eigenvalues,
    hermitian_extremes,
    localizable,
    real_axis_weights,
    shape_feasible,
    solve_followers,
    solve_followers_axis,
    wfl_full_row_rank,
    xi_bound,
)


def test_unit_offset_weights():
    w = complex_weights(0, 1, 1j)
    assert w == (1, 1j)
    assert abs(w.ij * 1 + w.ik * 1j) < 1e-15


def test_weights_on_published_configuration():
    w = complex_weights(-5 - 1j, -2 - 1j, -5 + 3j)
    assert abs(w.ij - 1 / 3) < 1e-15 and abs(w.ik - 0.25j) < 1e-15


def test_equal_neighbors_flag_zero_sum():
    w = complex_weights(0, 1, 1)
    assert w.zero_sum and w.total == 0
    assert real_axis_weights(0, 1, 1).zero_sum


def test_collocated_neighbor_raises():
    with pytest.raises(DegenerateConfigurationError) as exc:
        complex_weights(2 + 1j, 2 + 1j, 0)
    assert exc.value.category == "degenerate-configuration"
    with pytest.raises(DegenerateConfigurationError):
        real_axis_weights(1.0, 2.0, 1.0)


def test_axis_weights():
    w = real_axis_weights(1.3, 1.2, 2.4)
    assert w.ij == pytest.approx(-10, abs=1e-12)
    assert w.ik == pytest.approx(-10 / 11, abs=1e-12)
    assert abs(w.ij * (1.2 - 1.3) + w.ik * (2.4 - 1.3)) < 1e-14
    assert real_axis_weights(0, 1, -1) == (1, 1)


@settings(max_examples=200, deadline=None)
@given(st.complex_numbers(max_magnitude=100, allow_nan=False, allow_infinity=False),
       st.complex_numbers(max_magnitude=100, allow_nan=False, allow_infinity=False),
       st.complex_numbers(max_magnitude=100, allow_nan=False, allow_infinity=False))
def test_weight_residual_vanishes(ri, rj, rk):
    if min(abs(rj - ri), abs(rk - ri)) < 1e-3:
        return
    w = complex_weights(ri, rj, rk)
    scale = abs(w.ij * (rj - ri)) + abs(w.ik * (rk - ri))
    assert abs(w.ij * (rj - ri) + w.ik * (rk - ri)) <= 1e-12 * scale


def test_published_configuration_residuals(blocks3d):
    b = blocks3d
    assert np.abs(b.residual(R66)).max() <= 1e-12
    assert np.abs(b.axis_residual(EPS66)).max() <= 1e-12
    assert np.abs(b.W_f.sum(axis=1)).max() <= 1e-14
    assert np.abs(b.M_f.sum(axis=1)).max() <= 1e-14
    assert b.zero_sum == ()


def test_block_layout():
    g = build_graph(3, 2, {3: (1, 2)})
    b = assemble(g, NominalConfig([0, 1, 1j]))
    w = complex_weights(1j, 0, 1)
    assert b.W_ff.shape == (1, 1)
    assert b.W_ff[0, 0] == w.ij + w.ik
    np.testing.assert_array_equal(b.W_fl, [[-w.ij, -w.ik]])


def test_dense_oracle_for_blocks(blocks2d):
    # independent construction of W_f from the definition
    b = blocks2d
    W = np.zeros((3, 6), complex)
    for i, (j, k) in {4: (2, 3), 5: (1, 2), 6: (4, 5)}.items():
        wij = np.conj(R66[j - 1] - R66[i - 1]) / abs(R66[j - 1] - R66[i - 1]) ** 2
        wik = -np.conj(R66[k - 1] - R66[i - 1]) / abs(R66[k - 1] - R66[i - 1]) ** 2
        W[i - 4, i - 1] = wij + wik
        W[i - 4, j - 1] = -wij
        W[i - 4, k - 1] = -wik
    np.testing.assert_allclose(b.W_f, W, atol=1e-15)
    np.testing.assert_allclose(b.D_ff, W[:, 3:].conj().T @ W[:, 3:], atol=1e-14)
    np.testing.assert_allclose(b.D_fl, W[:, 3:].conj().T @ W[:, :3], atol=1e-14)


def test_localizability(blocks3d):
    assert localizable(blocks3d).invertible
    assert blocks3d.report.cond < 20
    # followers that only constrain each other: zero row sums in W_ff
    g = build_graph(5, 2, {3: (4, 5), 4: (3, 5), 5: (3, 4)})
    b = assemble(g, NominalConfig([0, 1, 2j, 3 + 1j, -1 + 2j]))
    assert not localizable(b).invertible
    with pytest.raises(NotLocalizableError):
        solve_followers(b, [0, 1])
    g1 = build_graph(3, 2, {3: (1, 2)})
    assert localizable(assemble(g1, NominalConfig([0, 1, 2]))).invertible
    assert not localizable(assemble(g1, NominalConfig([1, 1, 0]))).invertible


def test_solve_followers_identities(blocks3d):
    b = blocks3d
    np.testing.assert_allclose(solve_followers(b, R66[:3]), R66[3:], atol=1e-12)
    np.testing.assert_allclose(solve_followers_axis(b, EPS66[:3]), EPS66[3:], atol=1e-12)
    beta = 2.5 - 7j
    np.testing.assert_allclose(solve_followers(b, R66[:3] + beta), R66[3:] + beta, atol=1e-12)
    for h, th in [(0.3, 1.0), (2.0, -2.5), (5.0, math.pi)]:
        z = h * cmath.exp(1j * th)
        np.testing.assert_allclose(solve_followers(b, z * R66[:3]), z * R66[3:], atol=1e-11)


def test_xi_hand_example():
    g = build_graph(3, 2, {3: (1, 2)})
    b = assemble(g, NominalConfig([1, 1j, 0]))
    assert b.weights[3] == (1, 1j)
    assert xi_bound(b) == pytest.approx(1 / math.sqrt(2), abs=1e-15)


def test_xi_regression(blocks2d, blocks3d):
    K = -np.linalg.inv(blocks2d.W_ff) @ blocks2d.W_fl
    assert xi_bound(blocks2d) == pytest.approx(np.abs(K).max(), rel=1e-12)
    assert xi_bound(blocks2d) == pytest.approx(2.1551174561958333, rel=1e-12)
    Km = -np.linalg.inv(blocks3d.M_ff) @ blocks3d.M_fl
    assert xi_bound(blocks3d) == pytest.approx(max(np.abs(K).max(), np.abs(Km).max()), rel=1e-12)


def test_chain_topology_is_also_localizable():
    b = assemble(build_graph(6, 3, CHAIN_PAIRS), NominalConfig(R66, EPS66))
    assert b.report.invertible
    assert np.abs(b.residual(R66)).max() <= 1e-12


def test_hermitian_extremes():
    assert hermitian_extremes(np.eye(3)) == pytest.approx((1, 1))
    assert hermitian_extremes([[2, 1j], [-1j, 2]]) == pytest.approx((1, 3), abs=1e-12)
    with pytest.raises(ContractViolation):
        hermitian_extremes([[1, 1j], [1j, 1]])
    with pytest.raises(ContractViolation):
        hermitian_extremes([[1, 2, 3]])


@settings(max_examples=200, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.complex_numbers(max_magnitude=10, allow_nan=False,
                                                                   allow_infinity=False))
def test_hermitian_2x2_against_characteristic_polynomial(a, d, c):
    D = np.array([[a, c], [np.conj(c), d]])
    tr, det = a + d, a * d - abs(c) ** 2
    disc = math.sqrt(max(tr * tr / 4 - det, 0.0))
    lo, hi = hermitian_extremes(D)
    assert lo == pytest.approx(tr / 2 - disc, abs=1e-10)
    assert hi == pytest.approx(tr / 2 + disc, abs=1e-10)


def test_eigenvalues_match_numpy(blocks2d):
    np.testing.assert_allclose(hermitian_eigenvalues(blocks2d.D_ff), np.linalg.eigvalsh(blocks2d.D_ff), atol=1e-12)
    assert hermitian_extremes(blocks2d.D_ff)[0] > 0


def test_shape_feasibility(blocks2d):
    b = blocks2d
    s_L = shape_feasible(b, R66[3:])
    np.testing.assert_allclose(b.follower_map @ s_L, R66[3:], atol=1e-10)
    s_L = shape_feasible(b, S67[3:])
    assert s_L is not None
    np.testing.assert_allclose(b.follower_map @ s_L, S67[3:], atol=1e-10)
    # follower 6 has only follower neighbors, so W_fl loses a row of rank
    assert not wfl_full_row_rank(b)
    # a follower shape outside the image of the leader-to-follower map
    K = b.follower_map
    _, _, vh = np.linalg.svd(K.conj().T)
    outside = vh[-1].conj()
    assert np.linalg.norm(K.conj().T @ outside) < 1e-12
    assert shape_feasible(b, outside) is None


def test_shape_feasibility_with_dropped_leader():
    g = build_graph(4, 2, {3: (1, 2), 4: (1, 3)})
    b = assemble(g, NominalConfig([0, 1, 1j, 1 + 1j]))
    assert wfl_full_row_rank(b)
    for s_F in ([2j, 5], [1, -1 + 3j]):
        assert shape_feasible(b, s_F) is not None
    # leader 3 constrains nobody, so its column of W_fl is zero and the map has rank 2
    g2 = build_graph(6, 3, {4: (1, 2), 5: (1, 4), 6: (2, 5)})
    b2 = assemble(g2, NominalConfig([0, 1, 2, 1j, 2 + 1j, -1 + 2j]))
    assert b2.report.invertible
    assert np.all(b2.W_fl[:, 2] == 0)
    assert shape_feasible(b2, [1, 2 + 5j, -3j]) is None
    assert shape_feasible(b2, b2.follower_map @ np.array([3, -1j, 7])) is not None


@settings(max_examples=100, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False), min_size=6,
                max_size=6))
def test_random_configurations_satisfy_block_invariants(pts):
    pts = np.array(pts)
    from formation_lab.graph import DEFAULT_PAIRS
    g = build_graph(6, 3, DEFAULT_PAIRS)
    for i, (j, k) in DEFAULT_PAIRS.items():
        trip = pts[[i - 1, j - 1, k - 1]]
        if min(abs(trip[0] - trip[1]), abs(trip[0] - trip[2]), abs(trip[1] - trip[2])) < 1e-2:
            return
    b = assemble(g, NominalConfig(pts))
    assert np.abs(b.W_f.sum(axis=1)).max() <= 1e-12 * max(1, np.abs(b.W_f).max())
    assert np.abs(b.residual(pts)).max() <= 1e-10 * max(1, np.abs(b.W_f).max()) * np.abs(pts).max()
    if b.report.invertible:
        assert hermitian_extremes(b.D_ff)[0] > 0
        np.testing.assert_allclose(solve_followers(b, pts[:3]), pts[3:], atol=1e-6 * b.report.cond)
