"""Homogenized 2-D Darcy problem on the rectangle ``(0, Lx) x (0, Ly)``.

Solves ``div(K (f - ∇p)) = 0`` with zero normal flux.  The discretization is
the cell-centred bilinear form

    B(p, q) = Σ_cells |c| [ K11/2 (a_L a_L' + a_R a_R') / hx²
                          + K22/2 (d_B d_B' + d_T d_T') / hy²
                          + K12/4 (s t' + t s') / (hx hy) ]

where ``a``/``d`` are differences across the cell's x/y faces (zero on the
boundary, which is where the no-flux condition enters), ``s = a_L + a_R``
and ``t = d_B + d_T``.  It reduces to the five-point scheme for diagonal K,
couples diagonal neighbours through K12, and is symmetric positive
semidefinite for any SPD K with the constants as its only kernel.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import NotConverged
from .permeability import PermeabilityTensor, certify

FORCE_KINDS = ("constant", "gradient_cosine", "manufactured", "swirl", "sampled")


@dataclass(frozen=True)
class DarcyGrid:
    gx: int
    gy: int
    Lx: float = 1.0
    Ly: float = 1.0

    def __post_init__(self):
        if self.gx < 4 or self.gy < 4:
            raise ValueError("Darcy grid needs at least 4 cells per direction")

    @property
    def hx(self):
        return self.Lx / self.gx

    @property
    def hy(self):
        return self.Ly / self.gy

    def centers(self):
        x = (np.arange(self.gx) + 0.5) * self.hx
        y = (np.arange(self.gy) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")


@dataclass(frozen=True, eq=False)
class BodyForce2D:
    """Horizontal body force ``f'(x')``.

    Either a closed form (``func(x, y) -> (f1, f2)``, optionally with a
    scalar ``potential`` when the force is a gradient) or raw cell-centre
    samples.  Gradient forces are discretized through their potential so
    that they are absorbed by the pressure to round-off.
    """

    kind: str
    params: dict = field(default_factory=dict)
    func: object = None
    potential: object = None
    samples: np.ndarray = None
    Lx: float = None
    Ly: float = None

    def sample(self, grid):
        if self.func is None:
            s = np.asarray(self.samples, dtype=float)
            if s.shape != (grid.gx, grid.gy, 2):
                raise ValueError(f"force samples have shape {s.shape}, grid is "
                                 f"{(grid.gx, grid.gy)}")
            return s
        X, Y = grid.centers()
        f1, f2 = self.func(X, Y)
        return np.stack([np.broadcast_to(f1, X.shape), np.broadcast_to(f2, X.shape)], axis=-1)

    def evaluate(self, x, y):
        if self.func is None:
            raise ValueError("sampled force has no closed form")
        f1, f2 = self.func(x, y)
        return np.broadcast_to(f1, np.shape(x)), np.broadcast_to(f2, np.shape(x))

    # closed-form constructors
    @classmethod
    def constant(cls, f1, f2):
        return cls("constant", {"f1": f1, "f2": f2},
                   func=lambda x, y: (np.full(np.shape(x), float(f1)), np.full(np.shape(x), float(f2))),
                   potential=lambda x, y: f1 * x + f2 * y)

    @classmethod
    def gradient_cosine(cls, Lx=1.0, amplitude=1.0):
        """``f' = ∇φ`` with ``φ = A cos(π x1 / Lx)``."""
        k = np.pi / Lx
        return cls("gradient_cosine", {"Lx": Lx, "amplitude": amplitude},
                   func=lambda x, y: (-amplitude * k * np.sin(k * x), np.zeros(np.shape(y))),
                   potential=lambda x, y: amplitude * np.cos(k * x) + 0.0 * y)

    @classmethod
    def manufactured(cls, K, Lx=1.0, Ly=1.0):
        """Force whose exact solution is ``p* = cos cos`` and ``U*`` = curl of ``sin² sin²``."""
        K = np.asarray(getattr(K, "K", K), dtype=float)
        Kinv = np.linalg.inv(K)
        ex = manufactured_solution(Lx, Ly)

        def func(x, y):
            px, py = ex.grad_p(x, y)
            u1, u2 = ex.velocity(x, y)
            return (px + Kinv[0, 0] * u1 + Kinv[0, 1] * u2,
                    py + Kinv[1, 0] * u1 + Kinv[1, 1] * u2)

        return cls("manufactured", {"K": K.tolist(), "Lx": Lx, "Ly": Ly}, func=func)

    @classmethod
    def swirl(cls, Lx=1.0, Ly=1.0, amplitude=1.0, gradient=0.0):
        """Divergence-free force tangent to ``∂ω`` with ``f1 = amplitude`` at the centre.

        ``f = curl ψ``, ``ψ = -A sin²(π x/Lx) sin(2π y/Ly) Ly / (2π)``; an
        optional gradient part ``G cos(π x/Lx)`` adds a pressure response.
        """
        a = float(amplitude)
        kx, ky = np.pi / Lx, 2 * np.pi / Ly
        g = float(gradient)

        def func(x, y):
            f1 = -a * np.sin(kx * x) ** 2 * np.cos(ky * y) - g * kx * np.sin(kx * x)
            f2 = a * (Ly / Lx) * np.sin(kx * x) * np.cos(kx * x) * np.sin(ky * y)
            return f1, f2

        return cls("swirl", {"amplitude": a, "gradient": g, "Lx": Lx, "Ly": Ly}, func=func)

    @classmethod
    def sampled(cls, values, Lx=1.0, Ly=1.0):
        return cls("sampled", {}, samples=np.asarray(values, dtype=float), Lx=Lx, Ly=Ly)


@dataclass(frozen=True)
class ManufacturedSolution:
    Lx: float
    Ly: float

    def pressure(self, x, y):
        return np.cos(np.pi * x / self.Lx) * np.cos(np.pi * y / self.Ly)

    def grad_p(self, x, y):
        kx, ky = np.pi / self.Lx, np.pi / self.Ly
        return (-kx * np.sin(kx * x) * np.cos(ky * y), -ky * np.cos(kx * x) * np.sin(ky * y))

    def velocity(self, x, y):
        # U* = (∂2 ψ, -∂1 ψ), ψ = sin²(kx x) sin²(ky y)
        kx, ky = np.pi / self.Lx, np.pi / self.Ly
        sx, cx = np.sin(kx * x), np.cos(kx * x)
        sy, cy = np.sin(ky * y), np.cos(ky * y)
        return sx ** 2 * 2 * ky * sy * cy, -2 * kx * sx * cx * sy ** 2


def manufactured_solution(Lx=1.0, Ly=1.0):
    return ManufacturedSolution(Lx, Ly)


@dataclass(frozen=True, eq=False)
class DarcySolution:
    grid: DarcyGrid
    K: np.ndarray
    p: np.ndarray
    U: np.ndarray
    flux_residual: float
    iterations: int

    @property
    def U3(self):
        return np.zeros(self.p.shape)


# --------------------------------------------------------------------------
# discretization

def _diff_ops(grid):
    """Sparse maps from cell values to interior face differences (x faces, y faces)."""
    gx, gy = grid.gx, grid.gy
    idx = np.arange(gx * gy).reshape(gx, gy)
    # x faces between (i, j) and (i+1, j)
    l, r = idx[:-1, :].ravel(), idx[1:, :].ravel()
    n = l.size
    Dx = sp.csr_matrix((np.r_[-np.ones(n), np.ones(n)], (np.r_[np.arange(n), np.arange(n)],
                                                         np.r_[l, r])), shape=(n, gx * gy))
    b, t = idx[:, :-1].ravel(), idx[:, 1:].ravel()
    m = b.size
    Dy = sp.csr_matrix((np.r_[-np.ones(m), np.ones(m)], (np.r_[np.arange(m), np.arange(m)],
                                                         np.r_[b, t])), shape=(m, gx * gy))
    return Dx, Dy


def _cell_sums(grid):
    """Maps from interior face differences to per-cell ``(a_L, a_R, d_B, d_T)`` selections."""
    gx, gy = grid.gx, grid.gy
    cells = np.arange(gx * gy).reshape(gx, gy)
    xf = np.arange((gx - 1) * gy).reshape(gx - 1, gy)
    yf = np.arange(gx * (gy - 1)).reshape(gx, gy - 1)
    nx, ny = xf.size, yf.size

    def sel(cell_ids, face_ids, nfaces):
        return sp.csr_matrix((np.ones(cell_ids.size), (cell_ids.ravel(), face_ids.ravel())),
                             shape=(gx * gy, nfaces))

    AL = sel(cells[1:, :], xf, nx)      # left face of cells i >= 1
    AR = sel(cells[:-1, :], xf, nx)     # right face of cells i <= gx-2
    DB = sel(cells[:, 1:], yf, ny)
    DT = sel(cells[:, :-1], yf, ny)
    return AL, AR, DB, DT


def _as_matrix(K):
    if isinstance(K, PermeabilityTensor):
        return np.array(K.K, dtype=float)
    return np.asarray(K, dtype=float)


class DarcyOperator:
    """Assembled bilinear form and right-hand-side builder on one grid."""

    def __init__(self, K, grid):
        self.K = _as_matrix(K)
        self.grid = grid
        K11, K12, K22 = self.K[0, 0], 0.5 * (self.K[0, 1] + self.K[1, 0]), self.K[1, 1]
        hx, hy = grid.hx, grid.hy
        area = hx * hy
        self.Dx, self.Dy = _diff_ops(grid)
        AL, AR, DB, DT = _cell_sums(grid)
        self.S = (AL + AR) @ self.Dx     # s per cell
        self.T = (DB + DT) @ self.Dy     # t per cell
        self._left, self._right = AL @ self.Dx, AR @ self.Dx
        self._bottom, self._top = DB @ self.Dy, DT @ self.Dy
        # per-face weights: each interior face is shared by two cells with weight 1/2
        self.cx = area * K11 / hx ** 2
        self.cy = area * K22 / hy ** 2
        self.cxy = area * K12 / (4 * hx * hy)
        self.L = (self.cx * (self.Dx.T @ self.Dx) + self.cy * (self.Dy.T @ self.Dy)
                  + self.cxy * (self.S.T @ self.T + self.T.T @ self.S)).tocsr()

    def rhs(self, f):
        """``B(φ, ·)`` analogue for the force: face increments replace potential differences."""
        g = self.grid
        if f.potential is not None:
            X, Y = g.centers()
            phi = f.potential(X, Y).ravel()
            return self.L @ phi
        fc = f.sample(g)
        ax = 0.5 * (fc[:-1, :, 0] + fc[1:, :, 0]).ravel() * g.hx   # x-face increments
        dy = 0.5 * (fc[:, :-1, 1] + fc[:, 1:, 1]).ravel() * g.hy   # y-face increments
        AL, AR, DB, DT = _cell_sums(g)
        s = (AL + AR) @ ax
        t = (DB + DT) @ dy
        return (self.cx * (self.Dx.T @ ax) + self.cy * (self.Dy.T @ dy)
                + self.cxy * (self.S.T @ t + self.T.T @ s))


def _projected_cg(L, b, x0, tol, maxiter):
    """Jacobi-preconditioned CG for the singular Neumann system on zero-mean vectors."""
    dinv = 1.0 / L.diagonal()
    b = b - b.mean()
    x = x0 - x0.mean()
    r = b - L @ x
    r -= r.mean()
    z = dinv * r
    z -= z.mean()
    d = z.copy()
    rz = r @ z
    for k in range(maxiter):
        if np.abs(r).max() <= tol:
            return x, k
        q = L @ d
        alpha = rz / (d @ q)
        x += alpha * d
        r -= alpha * q
        r -= r.mean()
        z = dinv * r
        z -= z.mean()
        rz_new = r @ z
        d = z + (rz_new / rz) * d
        rz = rz_new
    if np.abs(r).max() <= tol:
        return x, maxiter
    raise NotConverged(f"Darcy CG did not reach {tol:.2e} in {maxiter} iterations")


def _centered_gradient(p, grid):
    """Second-order cell-centre gradient: centred inside, one-sided on boundary cells."""
    def d(a, h, axis):
        g = np.empty_like(a)
        sl = lambda s: tuple(s if ax == axis else slice(None) for ax in range(2))
        g[sl(slice(1, -1))] = (a[sl(slice(2, None))] - a[sl(slice(None, -2))]) / (2 * h)
        g[sl(0)] = (-3 * a[sl(0)] + 4 * a[sl(1)] - a[sl(2)]) / (2 * h)
        g[sl(-1)] = (3 * a[sl(-1)] - 4 * a[sl(-2)] + a[sl(-3)]) / (2 * h)
        return g
    return np.stack([d(p, grid.hx, 0), d(p, grid.hy, 1)], axis=-1)


def force_at_centers(f, grid):
    """Cell-centre force; gradient forces use the same difference as the pressure."""
    if f.potential is not None:
        X, Y = grid.centers()
        return _centered_gradient(f.potential(X, Y), grid)
    return f.sample(grid)


def reconstruct_velocity(K, f, p, Lx=1.0, Ly=1.0):
    """``U' = K (f' - ∇p)`` at cell centres (``U_3 = 0``)."""
    K = _as_matrix(K)
    p = np.asarray(p, dtype=float)
    grid = DarcyGrid(p.shape[0], p.shape[1], Lx, Ly)
    fc = force_at_centers(f, grid) if isinstance(f, BodyForce2D) else np.asarray(f, dtype=float)
    e = fc - _centered_gradient(p, grid)
    return np.einsum("ij,xyj->xyi", K, e)


def solve_darcy(K, f, gx, gy, Lx=1.0, Ly=1.0, x0=None, tol=1e-10, maxiter=None):
    """Finite-volume Darcy solve; returns zero-mean pressure and reconstructed velocity."""
    if isinstance(K, PermeabilityTensor):
        certify(K)
    else:
        certify(_as_matrix(K))
    grid = DarcyGrid(int(gx), int(gy), float(Lx), float(Ly))
    op = DarcyOperator(K, grid)
    b = op.rhs(f)
    area = grid.hx * grid.hy
    Kf = np.einsum("ij,xyj->xyi", op.K, force_at_centers(f, grid))
    scale = float(np.sqrt(np.mean(np.sum(Kf ** 2, axis=-1))))
    n = grid.gx * grid.gy
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).ravel()
    # the residual is a net flux per cell; its per-area value is compared to |K f|
    atol = tol * scale * area
    if scale == 0.0:
        p = np.zeros(n)
        its = 0
    else:
        p, its = _projected_cg(op.L, b, x0, atol, maxiter or 20 * n)
    p -= p.mean()
    r = b - op.L @ p
    flux_residual = float(np.abs(r - r.mean()).max() / area)
    P = p.reshape(grid.gx, grid.gy)
    U = reconstruct_velocity(op.K, f, P, grid.Lx, grid.Ly)
    return DarcySolution(grid, op.K, P, U, flux_residual, its)
