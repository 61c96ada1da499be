"""Staggered (MAC) grid fields and discrete operators.

Pressure lives at cell centres, velocity component ``c`` on the faces normal
to axis ``c``.  Face index ``i`` along axis ``c`` sits between cells ``i - 1``
and ``i``.  Two boundary modes are supported:

* ``periodic``: ``n`` faces per axis, wrap-around faces are shared unknowns.
* ``no-slip-walls``: ``n + 1`` faces along the normal axis; the outer faces
  carry zero normal velocity and tangential velocity uses a mirror ghost so
  the wall sits exactly on the box face.

A face is *free* iff both adjacent cells are fluid; every other face is held
at zero (Dirichlet elimination on the voxel obstacle).
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

PERIODIC = "periodic"
WALLS = "no-slip-walls"
MODES = (PERIODIC, WALLS)


@dataclass(frozen=True, eq=False)
class MacGrid:
    """Cell mask plus spacing and boundary mode; owns the dof numbering."""

    fluid: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)
    mode: str = PERIODIC

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown boundary mode {self.mode!r}")
        fluid = np.ascontiguousarray(self.fluid, dtype=bool)
        if fluid.ndim != 3:
            raise ValueError("fluid mask must be 3-D")
        fluid.setflags(write=False)
        object.__setattr__(self, "fluid", fluid)
        object.__setattr__(self, "spacing", tuple(float(h) for h in self.spacing))

    @property
    def shape(self):
        return self.fluid.shape

    @property
    def cell_volume(self):
        hx, hy, hz = self.spacing
        return hx * hy * hz

    def face_shape(self, c):
        s = list(self.shape)
        if self.mode == WALLS:
            s[c] += 1
        return tuple(s)

    def _adjacent_fluid(self, c):
        """Fluid flags of the (minus, plus) cells of every face normal to ``c``."""
        if self.mode == PERIODIC:
            return np.roll(self.fluid, 1, axis=c), self.fluid
        pad = [(0, 0)] * 3
        pad[c] = (1, 1)
        fp = np.pad(self.fluid, pad, constant_values=False)
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[c] = slice(0, -1)
        hi[c] = slice(1, None)
        return fp[tuple(lo)], fp[tuple(hi)]

    @cached_property
    def free(self):
        """Per-component boolean masks of unconstrained faces."""
        out = []
        for c in range(3):
            minus, plus = self._adjacent_fluid(c)
            m = minus & plus
            m.setflags(write=False)
            out.append(m)
        return tuple(out)

    def constrained(self, c):
        return ~self.free[c]

    @cached_property
    def n_free(self):
        return tuple(int(m.sum()) for m in self.free)

    @cached_property
    def n_fluid(self):
        return int(self.fluid.sum())

    @cached_property
    def cell_index(self):
        idx = np.full(self.shape, -1, dtype=np.int64)
        idx[self.fluid] = np.arange(self.n_fluid)
        return idx

    @cached_property
    def face_index(self):
        """Per-component arrays mapping face position to global free-dof index (-1 if fixed)."""
        out = []
        offset = 0
        for c in range(3):
            idx = np.full(self.face_shape(c), -1, dtype=np.int64)
            idx[self.free[c]] = np.arange(self.n_free[c]) + offset
            offset += self.n_free[c]
            out.append(idx)
        return tuple(out)

    # packing between face arrays and the free-dof vector
    def pack(self, u):
        return np.concatenate([np.asarray(u[c])[self.free[c]] for c in range(3)])

    def unpack(self, vec):
        out = []
        offset = 0
        for c in range(3):
            a = np.zeros(self.face_shape(c))
            n = self.n_free[c]
            a[self.free[c]] = vec[offset:offset + n]
            offset += n
            out.append(a)
        return tuple(out)

    def pack_pressure(self, p):
        return np.asarray(p)[self.fluid]

    def unpack_pressure(self, vec):
        p = np.zeros(self.shape)
        p[self.fluid] = vec
        return p

    def zero_faces(self):
        return tuple(np.zeros(self.face_shape(c)) for c in range(3))


@dataclass
class MacField:
    """Face-centred velocity and cell-centred pressure on a :class:`MacGrid`."""

    grid: MacGrid
    u: tuple
    p: np.ndarray = field(default=None)

    def __post_init__(self):
        self.u = tuple(np.asarray(a, dtype=float) for a in self.u)
        for c in range(3):
            if self.u[c].shape != self.grid.face_shape(c):
                raise ValueError(f"component {c} has shape {self.u[c].shape}, "
                                 f"expected {self.grid.face_shape(c)}")
        if self.p is None:
            self.p = np.zeros(self.grid.shape)

    @property
    def u1(self):
        return self.u[0]

    @property
    def u2(self):
        return self.u[1]

    @property
    def u3(self):
        return self.u[2]


# --------------------------------------------------------------------------
# stencil operators on arrays

def _neighbours(v, d, c, mode):
    """Return (v shifted -1, v shifted +1) along axis d for component c."""
    if mode == PERIODIC:
        return np.roll(v, 1, axis=d), np.roll(v, -1, axis=d)
    n = v.shape[d]
    lo = [slice(None)] * 3
    hi = [slice(None)] * 3
    lo[d] = slice(0, 1)
    hi[d] = slice(n - 1, n)
    if d == c:
        # outer normal faces are fixed at zero
        first = np.zeros_like(v[tuple(lo)])
        last = np.zeros_like(v[tuple(hi)])
    else:
        first = -v[tuple(lo)]
        last = -v[tuple(hi)]
    body_lo = [slice(None)] * 3
    body_hi = [slice(None)] * 3
    body_lo[d] = slice(0, n - 1)
    body_hi[d] = slice(1, n)
    back = np.concatenate([first, v[tuple(body_lo)]], axis=d)
    fwd = np.concatenate([v[tuple(body_hi)], last], axis=d)
    return back, fwd


def apply_laplacian(field, grid=None):
    """Negative discrete Laplacian ``-Δ_h u`` of every velocity component.

    Constrained faces are first set to zero; their rows return the diagonal
    value ``Σ 2/h_d² · u`` so that the operator is the identity-scaled
    Dirichlet row there.
    """
    if isinstance(field, MacField):
        grid, u = field.grid, field.u
    else:
        u = field
    out = []
    for c in range(3):
        free = grid.free[c]
        v = np.where(free, u[c], 0.0)
        lap = np.zeros_like(v)
        for d in range(3):
            h2 = grid.spacing[d] ** 2
            back, fwd = _neighbours(v, d, c, grid.mode)
            lap += (2.0 * v - back - fwd) / h2
        diag = sum(2.0 / h ** 2 for h in grid.spacing)
        out.append(np.where(free, lap, diag * np.asarray(u[c])))
    return tuple(out)


def apply_gradient(p, grid):
    """Staggered pressure gradient on faces; zero on constrained faces."""
    p = np.where(grid.fluid, p, 0.0)
    out = []
    for c in range(3):
        h = grid.spacing[c]
        if grid.mode == PERIODIC:
            g = (p - np.roll(p, 1, axis=c)) / h
        else:
            pad = [(0, 0)] * 3
            pad[c] = (1, 1)
            g = np.diff(np.pad(p, pad), axis=c) / h
        out.append(np.where(grid.free[c], g, 0.0))
    return tuple(out)


def apply_divergence(u, grid):
    """Cell-centred divergence of the face field (constrained faces count as zero)."""
    div = np.zeros(grid.shape)
    for c in range(3):
        v = np.where(grid.free[c], u[c], 0.0)
        h = grid.spacing[c]
        if grid.mode == PERIODIC:
            div += (np.roll(v, -1, axis=c) - v) / h
        else:
            div += np.diff(v, axis=c) / h
    return np.where(grid.fluid, div, 0.0)


def inner(a, b, grid):
    """Midpoint-rule inner product of two face fields (or two cell fields)."""
    vol = grid.cell_volume
    if isinstance(a, tuple):
        return vol * sum(float(np.sum(a[c] * b[c])) for c in range(3))
    return vol * float(np.sum(a * b))


def face_gradient_pairs(u, grid):
    """Differences between neighbouring faces of each component.

    Yields ``(c, d, delta, weight)`` with ``delta`` the forward difference of
    component ``c`` along axis ``d`` divided by the pair distance, and
    ``weight`` the quadrature weight of each pair.  Constrained faces count as
    zero and wall ghosts as mirror images, so that
    ``Σ weight·delta_i·delta_j`` equals ``⟨u_i, -Δ_h u_j⟩``.
    """
    vol = grid.cell_volume
    for c in range(3):
        v = np.where(grid.free[c], u[c], 0.0)
        for d in range(3):
            h = grid.spacing[d]
            if grid.mode == PERIODIC:
                yield c, d, (np.roll(v, -1, axis=d) - v) / h, vol
            elif d == c:
                yield c, d, np.diff(v, axis=c) / h, vol
            else:
                yield c, d, np.diff(v, axis=d) / h, vol
                lo = [slice(None)] * 3
                hi = [slice(None)] * 3
                lo[d] = slice(0, 1)
                hi[d] = slice(-1, None)
                # wall pairs: (ghost -v, v) at distance h -> difference 2v/h,
                # weight halved so that the form matches the ghost stencil row
                yield c, d, 2.0 * v[tuple(lo)] / h, vol / 2.0
                yield c, d, -2.0 * v[tuple(hi)] / h, vol / 2.0


# --------------------------------------------------------------------------
# sparse assembly

def _face_positions(grid, c):
    return np.nonzero(grid.free[c])


def assemble_laplacian_block(grid, c, nu=1.0):
    """Sparse ``ν(-Δ_h)`` restricted to the free faces of component ``c``."""
    pos = _face_positions(grid, c)
    shape = grid.face_shape(c)
    local = np.full(shape, -1, dtype=np.int64)
    n = grid.n_free[c]
    local[grid.free[c]] = np.arange(n)
    rows = [np.arange(n)]
    cols = [np.arange(n)]
    diag = np.zeros(n)
    vals = []
    for d in range(3):
        w = 1.0 / grid.spacing[d] ** 2
        diag += 2.0 * w
        for s in (-1, 1):
            nb = [np.array(a, copy=True) for a in pos]
            nb[d] = nb[d] + s
            if grid.mode == PERIODIC:
                nb[d] %= shape[d]
                inside = np.ones(n, dtype=bool)
            else:
                inside = (nb[d] >= 0) & (nb[d] < shape[d])
                if d != c:
                    # mirror ghost across the wall: -(-u) adds to the diagonal
                    diag[~inside] += w
            j = np.full(n, -1, dtype=np.int64)
            j[inside] = local[tuple(a[inside] for a in nb)]
            ok = j >= 0
            rows.append(np.nonzero(ok)[0])
            cols.append(j[ok])
            vals.append(np.full(int(ok.sum()), -w))
    data = np.concatenate([diag] + vals)
    A = sp.csr_matrix((nu * data, (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    A.sum_duplicates()
    return A


def assemble_gradient(grid):
    """Sparse gradient: free-face dofs (all components) x fluid cells."""
    rows, cols, vals = [], [], []
    cidx = grid.cell_index
    for c in range(3):
        pos = _face_positions(grid, c)
        gidx = grid.face_index[c][pos]
        h = grid.spacing[c]
        plus = list(pos)
        minus = [np.array(a, copy=True) for a in pos]
        minus[c] = minus[c] - 1
        if grid.mode == PERIODIC:
            minus[c] %= grid.shape[c]
        ip = cidx[tuple(plus)]
        im = cidx[tuple(minus)]
        rows += [gidx, gidx]
        cols += [ip, im]
        vals += [np.full(gidx.size, 1.0 / h), np.full(gidx.size, -1.0 / h)]
    n_u = sum(grid.n_free)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n_u, grid.n_fluid))
