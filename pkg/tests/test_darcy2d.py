import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from permahom.darcy2d import (BodyForce2D, DarcyGrid, DarcyOperator, manufactured_solution,
                              reconstruct_velocity, solve_darcy)
from permahom.errors import SPDViolation

KA = np.array([[1.0, 0.3], [0.3, 0.6]])


def _errors(K, Lx, Ly, g):
    f = BodyForce2D.manufactured(K, Lx, Ly)
    ex = manufactured_solution(Lx, Ly)
    s = solve_darcy(K, f, g, g, Lx, Ly)
    X, Y = s.grid.centers()
    ps = ex.pressure(X, Y)
    ps -= ps.mean()
    u1, u2 = ex.velocity(X, Y)
    ep = np.sqrt(np.mean((s.p - ps) ** 2))
    eu = np.sqrt(np.mean((s.U[..., 0] - u1) ** 2 + (s.U[..., 1] - u2) ** 2))
    return ep, eu


@pytest.mark.parametrize("Lx,Ly", [(1.0, 1.0), (2.0, 1.0)])
def test_manufactured_second_order(Lx, Ly):
    errs = np.array([_errors(KA, Lx, Ly, g) for g in (32, 64, 128)])
    orders = np.log2(errs[:-1] / errs[1:])
    assert ((orders >= 1.8) & (orders <= 2.2)).all(), orders


def test_manufactured_velocity_is_solenoidal_and_tangential():
    ex = manufactured_solution(1.0, 1.0)
    t = np.linspace(0, 1, 11)
    u1, _ = ex.velocity(np.zeros_like(t), t)
    _, u2 = ex.velocity(t, np.zeros_like(t))
    assert np.abs(u1).max() < 1e-15 and np.abs(u2).max() < 1e-15


def test_gradient_force_absorbed():
    f = BodyForce2D.gradient_cosine(1.0)
    s = solve_darcy(KA, f, 32, 32)
    X, Y = s.grid.centers()
    phi = np.cos(np.pi * X)
    assert np.abs(s.p - (phi - phi.mean())).max() <= 1e-6 * np.abs(phi).max()
    scale = np.abs(np.pi * KA[:, 0]).max()
    assert np.abs(s.U).max() <= 1e-6 * scale


def test_constant_force_gives_affine_pressure():
    s = solve_darcy(KA, BodyForce2D.constant(1.0, -0.5), 16, 24, 1.0, 1.5)
    X, Y = s.grid.centers()
    p = X - 0.5 * Y
    assert np.allclose(s.p, p - p.mean(), atol=1e-9)
    assert np.abs(s.U).max() <= 1e-9


def test_reconstruct_trivial_cases():
    zero = np.zeros((8, 8))
    U = reconstruct_velocity(np.eye(2), BodyForce2D.constant(0.0, 0.0), zero)
    assert np.array_equal(U, np.zeros((8, 8, 2)))
    U = reconstruct_velocity(np.eye(2), BodyForce2D.constant(1.0, 0.0), zero)
    assert np.array_equal(U[..., 0], np.ones((8, 8))) and not U[..., 1].any()


def test_solution_invariants():
    K = KA
    f = BodyForce2D.manufactured(K)
    s = solve_darcy(K, f, 40, 40)
    assert abs(s.p.mean()) <= 1e-14
    assert (s.U3 == 0).all()
    Kf = np.einsum("ij,xyj->xyi", K, f.sample(s.grid))
    assert s.flux_residual <= 1e-8 * np.sqrt(np.mean(np.sum(Kf ** 2, axis=-1)))


def test_global_flux_telescopes():
    s = solve_darcy(KA, BodyForce2D.swirl(gradient=0.7), 24, 24)
    op = DarcyOperator(KA, s.grid)
    net = op.rhs(BodyForce2D.swirl(gradient=0.7)) - op.L @ s.p.ravel()
    scale = np.abs(op.rhs(BodyForce2D.swirl(gradient=0.7))).max()
    assert abs(net.sum()) <= 1e-12 * scale * net.size


def test_operator_symmetric_psd_with_constant_kernel():
    op = DarcyOperator(KA, DarcyGrid(7, 5, 1.0, 0.8))
    L = op.L.toarray()
    assert np.allclose(L, L.T, atol=1e-12)
    ev = np.linalg.eigvalsh(L)
    assert ev[0] > -1e-10 and ev[1] > 1e-6
    assert np.abs(L @ np.ones(35)).max() < 1e-10


def test_unique_up_to_constant():
    f = BodyForce2D.manufactured(KA)
    a = solve_darcy(KA, f, 32, 32)
    x0 = np.random.default_rng(0).standard_normal(32 * 32) + 5.0
    b = solve_darcy(KA, f, 32, 32, x0=x0)
    assert np.abs(a.p - b.p).max() <= 1e-8


def test_rotation_covariance():
    # np.rot90 maps old (x, y) to x' = 1 - y, y' = x; K' = R K R^T, f'(x') = R f(x)
    R = np.array([[0.0, -1.0], [1.0, 0.0]])
    g = 24
    grid = DarcyGrid(g, g)
    base = BodyForce2D.manufactured(KA)
    F = base.sample(grid)
    s = solve_darcy(KA, BodyForce2D.sampled(F), g, g)
    Fr = np.einsum("ij,xyj->xyi", R, np.rot90(F, k=1, axes=(0, 1)))
    Kr = R @ KA @ R.T
    sr = solve_darcy(Kr, BodyForce2D.sampled(Fr), g, g)
    assert np.allclose(sr.p, np.rot90(s.p, k=1), atol=1e-8)
    Ur = np.einsum("ij,xyj->xyi", R, np.rot90(s.U, k=1, axes=(0, 1)))
    assert np.allclose(sr.U, Ur, atol=1e-8)


def test_rejects_indefinite_K():
    with pytest.raises(SPDViolation):
        solve_darcy(np.array([[1.0, 2.0], [2.0, 1.0]]), BodyForce2D.constant(1, 0), 8, 8)


def test_grid_minimum():
    with pytest.raises(ValueError):
        solve_darcy(np.eye(2), BodyForce2D.constant(1, 0), 3, 8)


def test_sampled_shape_checked():
    with pytest.raises(ValueError):
        solve_darcy(np.eye(2), BodyForce2D.sampled(np.zeros((4, 4, 2))), 8, 8)


@given(k11=st.floats(0.1, 3), k22=st.floats(0.1, 3), t=st.floats(-0.9, 0.9))
def test_well_balanced_for_any_spd(k11, k22, t):
    K = np.array([[k11, t * np.sqrt(k11 * k22)], [t * np.sqrt(k11 * k22), k22]])
    s = solve_darcy(K, BodyForce2D.gradient_cosine(1.0, 2.0), 12, 12)
    assert np.abs(s.U).max() <= 1e-6 * np.abs(K).max() * 2 * np.pi
