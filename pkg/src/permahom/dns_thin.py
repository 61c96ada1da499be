"""Direct Stokes simulation on the thin perforated slab and its post-processing.

The unscaled problem ``-ν Δu + ∇p = (f'(x'), 0)`` is solved on the tiled voxel
mask with no-slip on the box walls and the obstacles.  Dilated-domain
quantities (``z3 = x3 / ε``) are obtained in post-processing: an ``L²`` norm
on the dilated slab is the physical norm divided by ``sqrt(ε)``, and the
scaled gradient ``D_ε`` of the dilated field is the physical gradient.
"""
import hashlib
import logging
import math
from dataclasses import dataclass

import numpy as np

from .cell_stokes import dirichlet_form
from .darcy2d import BodyForce2D
from .errors import GridMismatch, GridTooLarge, InconsistentRuns
from .mac import WALLS, MacField, MacGrid, assemble_gradient, assemble_laplacian_block
from .saddle import SchurSolver, SolverConfig

log = logging.getLogger(__name__)

DEFAULT_MAX_UNKNOWNS = 10_000_000


@dataclass(frozen=True, eq=False)
class DnsSolution:
    mask: object  # PerforatedMask3D
    field: MacField
    force: BodyForce2D
    momentum_residual: float
    div_residual: float
    outer_iterations: int
    inner_iterations: int
    nu: float

    @property
    def spec(self):
        return self.mask.spec

    @property
    def grid(self):
        return self.field.grid

    @property
    def u(self):
        return self.field.u

    @property
    def p(self):
        return self.field.p

    def extended_velocity(self):
        """Zero-extended velocity at cell centres, shape ``(Nx, Ny, Nz, 3)``.

        Each component is the mean of the two faces bounding the cell; faces
        touching a solid voxel are zero, so solid cells get exactly zero.
        """
        out = np.empty(self.grid.shape + (3,))
        for c in range(3):
            v = np.where(self.grid.free[c], self.u[c], 0.0)
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[c] = slice(0, -1)
            hi[c] = slice(1, None)
            out[..., c] = 0.5 * (v[tuple(lo)] + v[tuple(hi)])
        return out


def unknown_count(mask):
    """Upper bound on velocity plus pressure unknowns, computable before assembly."""
    nx, ny, nz = mask.shape
    return 4 * nx * ny * nz + ny * nz + nx * nz + nx * ny


def _face_force(grid, f, mask):
    """Free-dof force vector for ``(f'(x'), 0)``.

    Gradient forces go through their potential at cell centres so the
    discrete pressure absorbs them exactly; closed forms are evaluated at the
    face centres; sampled forces are constant per microcell column and
    averaged across column seams.
    """
    h = grid.spacing[0]
    nx, ny, nz = grid.shape
    parts = []
    if f.func is None:
        s = np.asarray(f.samples, dtype=float)
        mx, my = mask.spec.mx, mask.spec.my
        if s.shape != (mx, my, 2):
            raise GridMismatch(f"sampled force has shape {s.shape}, expected {(mx, my, 2)}")
        vox = np.repeat(np.repeat(s, mask.n_c, axis=0), mask.n_c, axis=1)  # (nx, ny, 2)
    for c in range(3):
        free = grid.free[c]
        if c == 2:
            parts.append(np.zeros(grid.n_free[c]))
            continue
        idx = np.nonzero(free)
        if f.potential is not None:
            # free faces always have two fluid neighbours inside the box
            xm = [(idx[d] + 0.5) * h for d in range(2)]
            xp = list(xm)
            xm[c] = xm[c] - h
            val = (f.potential(xp[0], xp[1]) - f.potential(xm[0], xm[1])) / h
        elif f.func is not None:
            x = [(idx[d] + (0.0 if d == c else 0.5)) * h for d in range(2)]
            val = f.func(x[0], x[1])[c]
        else:
            cm = [np.array(idx[0]), np.array(idx[1])]
            cm[c] = cm[c] - 1
            val = 0.5 * (vox[idx[0], idx[1], c] + vox[cm[0], cm[1], c])
        parts.append(np.broadcast_to(np.asarray(val, dtype=float), idx[0].shape).copy())
    return np.concatenate(parts)


def solve_dns(mask, f, cfg=None, max_unknowns=DEFAULT_MAX_UNKNOWNS, override=False):
    """Stokes solve on the perforated slab with body force ``(f'(x'), 0)``."""
    cfg = cfg or SolverConfig()
    n_unk = unknown_count(mask)
    if n_unk > max_unknowns and not override:
        raise GridTooLarge(f"{n_unk} unknowns exceed the cap of {int(max_unknowns)}; "
                           "pass the override flag to run anyway")
    h = mask.voxel_size
    grid = MacGrid(mask.labels, (h, h, h), WALLS)
    rhs = _face_force(grid, f, mask)
    blocks = [assemble_laplacian_block(grid, c, cfg.nu) for c in range(3)]
    solver = SchurSolver(blocks, assemble_gradient(grid), cfg, WALLS)
    log.info("dns: grid %s, %d velocity + %d pressure unknowns", grid.shape,
             sum(grid.n_free), grid.n_fluid)
    u, p, info = solver.solve(rhs, grid.cell_volume)
    fld = MacField(grid, grid.unpack(u), grid.unpack_pressure(p))
    return DnsSolution(mask, fld, f, info.momentum_residual, info.div_residual,
                       info.outer_iterations, info.inner_iterations, cfg.nu)


# --------------------------------------------------------------------------
# averages

@dataclass(frozen=True, eq=False)
class VelocityAverages:
    a_eps: float
    epsilon: float
    column: np.ndarray    # (mx, my, 3) vertical-and-cell averages of the extended velocity
    block: np.ndarray     # (mx, my, mz, 3) microcell averages
    pressure: np.ndarray  # (mx, my) column averages of p over fluid cells

    @property
    def horizontal(self):
        return self.column[..., :2]

    @property
    def scaled(self):
        """``a_ε⁻² Ū'``."""
        return self.horizontal / self.a_eps ** 2

    @property
    def aggregate(self):
        """``L²(ω)`` norm of ``a_ε⁻² Ū'``."""
        return float(math.sqrt(np.sum(self.scaled ** 2) * self.a_eps ** 2))


def _block_mean(a, n_c):
    nx, ny, nz = a.shape[:3]
    r = a.reshape(nx // n_c, n_c, ny // n_c, n_c, nz // n_c, n_c, *a.shape[3:])
    return r.mean(axis=(1, 3, 5))


def average_velocity(sol):
    """Column and microcell averages of the zero-extended velocity.

    The column average over ``a_ε x a_ε x ε`` equals the ``z3 ∈ (0, 1)``
    average of the dilated field, averaged over the column footprint.
    """
    n_c = sol.mask.n_c
    U = sol.extended_velocity()
    block = _block_mean(U, n_c)
    column = block.mean(axis=2)
    fl = sol.grid.fluid
    nx, ny, nz = fl.shape
    psum = (sol.p * fl).reshape(nx // n_c, n_c, ny // n_c, n_c, nz).sum(axis=(1, 3, 4))
    cnt = fl.reshape(nx // n_c, n_c, ny // n_c, n_c, nz).sum(axis=(1, 3, 4))
    pressure = psum / np.maximum(cnt, 1)
    return VelocityAverages(sol.spec.a_eps, sol.spec.epsilon, column, block, pressure)


def u3_ratio(avg):
    """``‖Ū3‖ / ‖Ū'‖`` over microcell averages.

    Full-column averages of ``u3`` vanish identically by the slab's mid-plane
    reflection symmetry, so the vertical component is measured per microcell.
    """
    den = float(np.linalg.norm(avg.block[..., :2]))
    num = float(np.linalg.norm(avg.block[..., 2]))
    return num / den if den > 0 else 0.0


# --------------------------------------------------------------------------
# scaling audit

def dilated_norms(sol):
    """``(‖ũ‖, ‖D_ε ũ‖)`` on the dilated slab."""
    g = sol.grid
    eps = sol.spec.epsilon
    l2 = g.cell_volume * sum(float(np.sum(np.where(g.free[c], sol.u[c], 0.0) ** 2))
                             for c in range(3))
    grad = dirichlet_form(sol.u, sol.u, g)
    return math.sqrt(l2 / eps), math.sqrt(max(grad, 0.0) / eps)


@dataclass(frozen=True)
class ScalingRow:
    a_eps: float
    epsilon: float
    norm_u: float
    norm_Du: float
    ratio_u: float
    ratio_Du: float


@dataclass(frozen=True)
class ScalingReport:
    rows: tuple
    growth_u: tuple
    growth_Du: tuple
    limit: float = 2.0

    @property
    def passed(self):
        return all(g <= self.limit for g in self.growth_u + self.growth_Du)

    @property
    def max_change(self):
        """Largest change factor, up or down, between consecutive runs."""
        out = 1.0
        for g in self.growth_u + self.growth_Du:
            if g > 0:
                out = max(out, g, 1.0 / g)
        return out


def run_signature(sol):
    """Text key of everything the audit requires to be shared between runs."""
    s = sol.spec
    cell = sol.mask.cell
    shape = repr(cell.shape) if cell is not None and cell.shape is not None else \
        hashlib.sha256(sol.mask.labels[:sol.mask.n_c, :sol.mask.n_c, :sol.mask.n_c]
                       .tobytes()).hexdigest()
    params = ",".join(f"{k}={v!r}" for k, v in sorted(sol.force.params.items()))
    return (f"Lx={s.Lx!r};Ly={s.Ly!r};eps={s.epsilon!r};n_c={sol.mask.n_c};nu={sol.nu!r};"
            f"obstacle={shape};force={sol.force.kind}({params})")


def scaling_row(sol):
    a = sol.spec.a_eps
    nu_, nd = dilated_norms(sol)
    return ScalingRow(a, sol.spec.epsilon, nu_, nd, nu_ / a ** 2, nd / a)


def scaling_report(rows, limit=2.0):
    """Growth factors of both ratios between consecutive runs of decreasing ``a_ε``."""
    rows = sorted(rows, key=lambda r: -r.a_eps)
    if len(rows) < 2:
        raise InconsistentRuns("the audit needs at least two runs")

    def growth(attr):
        out = []
        for r0, r1 in zip(rows, rows[1:]):
            x0, x1 = getattr(r0, attr), getattr(r1, attr)
            out.append(x1 / x0 if x0 > 0 else (0.0 if x1 == 0 else math.inf))
        return tuple(out)

    return ScalingReport(tuple(rows), growth("ratio_u"), growth("ratio_Du"), limit)


def scaling_audit(runs, limit=2.0):
    """Empirical ``‖ũ‖/a_ε²`` and ``‖D_ε ũ‖/a_ε`` per run, ordered by decreasing ``a_ε``."""
    runs = list(runs)
    if len(runs) < 2:
        raise InconsistentRuns("the audit needs at least two runs")
    sig = run_signature(runs[0])
    for r in runs[1:]:
        if run_signature(r) != sig:
            raise InconsistentRuns("runs differ in domain, obstacle, resolution or force")
    return scaling_report([scaling_row(r) for r in runs], limit)


# --------------------------------------------------------------------------
# comparison with the Darcy limit

@dataclass(frozen=True)
class NotApplicable:
    reason: str


@dataclass(frozen=True)
class ComparisonReport:
    a_eps: float
    epsilon: float
    rel_err_velocity: float
    rel_err_pressure: float
    abs_err_velocity: float
    abs_err_pressure: float
    u3_ratio: float
    rim: int = 1


def _rel(diff, ref):
    d = float(np.sqrt(np.sum(diff ** 2)))
    r = float(np.sqrt(np.sum(ref ** 2)))
    return (d / r if r > 0 else d), d


def compare_fields(scaled_U, darcy_U, dns_p, darcy_p, cell_area, rim=1):
    """Interior relative ``L²`` errors of velocity and (mean-free) pressure.

    Returns ``(rel_u, rel_p, abs_u, abs_p)``.  When a reference field is
    identically zero the relative error falls back to the absolute one.
    """
    scaled_U, darcy_U = np.asarray(scaled_U), np.asarray(darcy_U)
    dns_p, darcy_p = np.asarray(dns_p), np.asarray(darcy_p)
    if scaled_U.shape != darcy_U.shape or dns_p.shape != darcy_p.shape:
        raise GridMismatch(f"DNS columns {dns_p.shape} do not match Darcy grid {darcy_p.shape}")
    if min(dns_p.shape) <= 2 * rim:
        raise GridMismatch("grid too small for the boundary rim exclusion")
    sl = (slice(rim, -rim), slice(rim, -rim)) if rim else (slice(None), slice(None))
    w = math.sqrt(cell_area)
    ru, au = _rel(w * (scaled_U[sl] - darcy_U[sl]), w * darcy_U[sl])
    pd = dns_p[sl] - dns_p[sl].mean()
    pr = darcy_p[sl] - darcy_p[sl].mean()
    rp, ap = _rel(w * (pd - pr), w * pr)
    return ru, rp, au, ap


def darcy_comparison(sol, darcy, rim=1):
    """Compare ``a_ε⁻² Ū'`` and the column pressure with a Darcy solution on the column grid."""
    spec = sol.spec
    g = darcy.grid
    if (g.gx, g.gy) != (spec.mx, spec.my) or not (
            math.isclose(g.Lx, spec.Lx) and math.isclose(g.Ly, spec.Ly)):
        raise GridMismatch(f"Darcy grid {(g.gx, g.gy)} on {(g.Lx, g.Ly)} is not aligned with "
                           f"the {(spec.mx, spec.my)} microcell columns")
    if not sol.mask.has_obstacles:
        return NotApplicable("no obstacles: the Darcy limit does not apply")
    avg = average_velocity(sol)
    ru, rp, au, ap = compare_fields(avg.scaled, darcy.U, avg.pressure, darcy.p,
                                    spec.a_eps ** 2, rim)
    return ComparisonReport(spec.a_eps, spec.epsilon, ru, rp, au, ap, u3_ratio(avg), rim)
