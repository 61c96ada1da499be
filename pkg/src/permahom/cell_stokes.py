"""Periodic local Stokes problems on the voxelized fluid cell.

For forcing ``e_i`` (i = 1, 2) we solve ``-ν Δw + ∇π = e_i``, ``div w = 0`` in
the fluid voxels with ``w = 0`` on every face touching the obstacle and
periodic wrap on ``Y``.  Pressure is normalized to zero mean over fluid cells.
"""
from dataclasses import dataclass

import numpy as np

from .errors import EmptyObstacle
from .mac import (PERIODIC, MacField, MacGrid, apply_divergence, apply_gradient,
                  apply_laplacian, assemble_gradient, assemble_laplacian_block,
                  face_gradient_pairs)
from .saddle import SchurSolver, SolverConfig

__all__ = ["SolverConfig", "CellSolution", "cell_grid", "CellProblem", "solve_cell_problem",
           "solve_cell_problems", "solution_mean_velocity", "dirichlet_form",
           "apply_laplacian", "apply_gradient", "apply_divergence"]


@dataclass(frozen=True, eq=False)
class CellSolution:
    mask: object  # CellMask
    w: MacField
    forcing: int
    momentum_residual: float
    div_residual: float
    outer_iterations: int
    inner_iterations: int
    nu: float

    @property
    def pi(self):
        return self.w.p

    @property
    def grid(self):
        return self.w.grid


def cell_grid(mask):
    h = 1.0 / mask.n
    return MacGrid(mask.labels, (h, h, h), PERIODIC)


def forcing_vector(grid, i):
    """Free-dof representation of the unit body force ``e_i`` (1-based)."""
    parts = [np.full(grid.n_free[c], 1.0 if c == i - 1 else 0.0) for c in range(3)]
    return np.concatenate(parts)


class CellProblem:
    """Operator and solver setup shared by the two forcings on one mask."""

    def __init__(self, mask, cfg=None):
        cfg = cfg or SolverConfig()
        if mask.labels.all():
            # testing the weak form with a constant e_i gives 0 = |Y|
            raise EmptyObstacle("the cell problem has no solution without an obstacle")
        self.mask = mask
        self.cfg = cfg
        self.grid = cell_grid(mask)
        blocks = [assemble_laplacian_block(self.grid, c, cfg.nu) for c in range(3)]
        self.solver = SchurSolver(blocks, assemble_gradient(self.grid), cfg, PERIODIC)

    def solve(self, i):
        if i not in (1, 2):
            raise ValueError("only the horizontal forcings e_1, e_2 are supported")
        g = self.grid
        f = forcing_vector(g, i)
        before = self.solver.inner.iterations
        u, p, info = self.solver.solve(f, g.cell_volume)
        field = MacField(g, g.unpack(u), g.unpack_pressure(p))
        return CellSolution(self.mask, field, i, info.momentum_residual, info.div_residual,
                            info.outer_iterations, self.solver.inner.iterations - before,
                            self.cfg.nu)


def solve_cell_problem(mask, i, cfg=None):
    return CellProblem(mask, cfg).solve(i)


def solve_cell_problems(mask, cfg=None):
    prob = CellProblem(mask, cfg)
    return prob.solve(1), prob.solve(2)


def solution_mean_velocity(sol):
    """Midpoint-rule ``∫_{Y_f} w_j dy`` for j = 1..3 (w extended by zero into T)."""
    g = sol.grid
    vol = g.cell_volume
    return np.array([vol * float(np.sum(np.where(g.free[c], sol.w.u[c], 0.0)))
                     for c in range(3)])


def dirichlet_form(u, v, grid):
    """Discrete ``∫ Du : Dv`` from neighbouring-face differences."""
    total = 0.0
    for (c, d, du, wt), (_, _, dv, _) in zip(face_gradient_pairs(u, grid),
                                             face_gradient_pairs(v, grid)):
        total += wt * float(np.sum(du * dv))
    return total
