import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from permahom.mac import (PERIODIC, WALLS, MacField, MacGrid, apply_divergence, apply_gradient,
                          apply_laplacian, assemble_gradient, assemble_laplacian_block,
                          face_gradient_pairs, inner)


def _grid(fluid, mode=PERIODIC, h=None):
    n = fluid.shape[0]
    h = 1.0 / n if h is None else h
    return MacGrid(fluid, (h, h, h), mode)


def _random_fluid(rng, n, frac=0.15):
    lab = rng.random((n, n, n)) > frac
    lab[0] = lab[-1] = True
    return lab


def test_constant_velocity_annihilated():
    g = _grid(np.ones((6, 6, 6), dtype=bool))
    u = tuple(np.full(g.face_shape(c), 1.7) for c in range(3))
    for r in apply_laplacian(MacField(g, u, np.zeros(g.shape))):
        assert np.abs(r).max() < 1e-10


def test_laplacian_sine_eigenvalue():
    n = 32
    h = 1.0 / n
    g = _grid(np.ones((n, n, n), dtype=bool))
    y1 = (np.arange(n) * h)[:, None, None] * np.ones((1, n, n))  # u1 faces at y1 = i h
    u1 = np.sin(2 * np.pi * y1)
    u = (u1, np.zeros_like(u1), np.zeros_like(u1))
    lap = apply_laplacian(MacField(g, u, np.zeros(g.shape)))[0]
    lam_discrete = 2.0 / h ** 2 * (1 - np.cos(2 * np.pi * h))
    assert np.allclose(lap, lam_discrete * u1, atol=1e-9)
    lam = (2 * np.pi) ** 2
    assert abs(lam_discrete - lam) / lam <= (2 * np.pi * h) ** 2 / 12


def test_single_solid_voxel_dirichlet_rows():
    lab = np.ones((6, 6, 6), dtype=bool)
    lab[3, 3, 3] = False
    g = _grid(lab)
    for c in range(3):
        fixed = g.constrained(c)
        assert fixed.sum() == 2
        plus = [3, 3, 3]
        plus[c] = 4
        assert fixed[3, 3, 3] and fixed[tuple(plus)]
    rng = np.random.default_rng(1)
    u = tuple(rng.standard_normal(g.face_shape(c)) for c in range(3))
    out = apply_laplacian(MacField(g, u, np.zeros(g.shape)))
    for c in range(3):
        m = g.constrained(c)
        assert np.allclose(out[c][m], 6 * 36.0 * u[c][m])


def test_gradient_of_constant_and_divergence_of_constant():
    g = _grid(np.ones((5, 5, 5), dtype=bool))
    for a in apply_gradient(np.full(g.shape, 3.0), g):
        assert np.abs(a).max() == 0
    u = tuple(np.full(g.face_shape(c), v) for c, v in enumerate((1.0, -2.0, 0.5)))
    assert np.abs(apply_divergence(u, g)).max() < 1e-12


@pytest.mark.parametrize("mode", [PERIODIC, WALLS])
@given(seed=st.integers(0, 2 ** 31 - 1))
def test_gradient_divergence_adjoint(mode, seed):
    rng = np.random.default_rng(seed)
    g = _grid(_random_fluid(rng, 8), mode)
    p = np.where(g.fluid, rng.standard_normal(g.shape), 0.0)
    u = tuple(np.where(g.free[c], rng.standard_normal(g.face_shape(c)), 0.0) for c in range(3))
    lhs = inner(apply_gradient(p, g), u, g)
    rhs = -g.cell_volume * float(np.sum(p * apply_divergence(u, g)))
    scale = g.cell_volume * (np.abs(p).sum() + sum(np.abs(a).sum() for a in u)) * 8
    assert abs(lhs - rhs) <= 1e-12 * scale


@pytest.mark.parametrize("mode", [PERIODIC, WALLS])
def test_sparse_matches_stencil(mode):
    rng = np.random.default_rng(3)
    g = _grid(_random_fluid(rng, 7), mode, h=0.3)
    u = tuple(np.where(g.free[c], rng.standard_normal(g.face_shape(c)), 0.0) for c in range(3))
    lap = apply_laplacian(MacField(g, u, np.zeros(g.shape)))
    for c in range(3):
        A = assemble_laplacian_block(g, c, nu=1.0)
        assert np.allclose(A @ u[c][g.free[c]], lap[c][g.free[c]], atol=1e-10)
    p = np.where(g.fluid, rng.standard_normal(g.shape), 0.0)
    G = assemble_gradient(g)
    assert np.allclose(G @ g.pack_pressure(p), g.pack(apply_gradient(p, g)), atol=1e-12)
    # D = -G^T: the divergence of a packed field equals -G^T u
    assert np.allclose(-G.T @ g.pack(u), g.pack_pressure(apply_divergence(u, g)), atol=1e-12)


@pytest.mark.parametrize("mode", [PERIODIC, WALLS])
def test_laplacian_block_spd(mode):
    rng = np.random.default_rng(5)
    g = _grid(_random_fluid(rng, 6), mode)
    for c in range(3):
        A = assemble_laplacian_block(g, c).toarray()
        assert np.allclose(A, A.T)
        if mode == WALLS:
            assert np.linalg.eigvalsh(A).min() > 0


@pytest.mark.parametrize("mode", [PERIODIC, WALLS])
def test_energy_form_matches_operator(mode):
    rng = np.random.default_rng(7)
    g = _grid(_random_fluid(rng, 6), mode)
    u = tuple(np.where(g.free[c], rng.standard_normal(g.face_shape(c)), 0.0) for c in range(3))
    form = sum(w * float(np.sum(d * d)) for _, _, d, w in face_gradient_pairs(u, g))
    Au = sum(float(u[c][g.free[c]] @ (assemble_laplacian_block(g, c) @ u[c][g.free[c]]))
             for c in range(3)) * g.cell_volume
    assert form == pytest.approx(Au, rel=1e-12)


def test_walls_face_counts():
    g = _grid(np.ones((4, 5, 3), dtype=bool), WALLS, h=0.1)
    assert g.face_shape(0) == (5, 5, 3) and g.face_shape(2) == (4, 5, 4)
    # outer normal faces are held at zero
    assert not g.free[0][0].any() and not g.free[0][-1].any()
    assert g.n_free[0] == 3 * 5 * 3


def test_pack_roundtrip():
    rng = np.random.default_rng(9)
    g = _grid(_random_fluid(rng, 5))
    vec = rng.standard_normal(sum(g.n_free))
    assert np.array_equal(g.pack(g.unpack(vec)), vec)
    pv = rng.standard_normal(g.n_fluid)
    assert np.array_equal(g.pack_pressure(g.unpack_pressure(pv)), pv)


def test_bad_mode():
    with pytest.raises(ValueError):
        MacGrid(np.ones((3, 3, 3), dtype=bool), (1, 1, 1), "open")
