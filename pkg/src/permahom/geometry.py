"""Reference cell, voxelized obstacle and the tiled thin perforated domain.

Cell coordinates are dimensionless with ``Y = (-1/2, 1/2)^3``.  The thin
domain ``Q = (0, Lx) x (0, Ly) x (0, eps)`` is tiled exactly by microcells of
size ``a_eps``; microcell ``k`` (0-based) occupies ``[a k, a (k + 1))`` so a
point is ``x = origin + a k + a y`` with the lattice origin at ``a/2`` on each
axis.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (DisconnectedFluid, GeometryError, InvalidShape, NonIntegerTiling,
                     ObstacleTouchesBoundary)

SHAPE_KINDS = ("sphere", "axis-box", "superellipsoid")
TILING_TOL = 1e-12


@dataclass(frozen=True)
class ObstacleShape:
    kind: str
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = None
    half_extents: tuple = None
    exponent: float = 2.0

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise InvalidShape(f"unknown obstacle kind {self.kind!r}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if len(self.center) != 3:
            raise InvalidShape("center must have 3 coordinates")
        if self.kind == "sphere":
            if self.radius is None or not self.radius > 0:
                raise InvalidShape("sphere radius must be > 0")
        else:
            if self.half_extents is None or len(self.half_extents) != 3:
                raise InvalidShape(f"{self.kind} needs three half extents")
            object.__setattr__(self, "half_extents",
                               tuple(float(e) for e in self.half_extents))
            if min(self.half_extents) <= 0:
                raise InvalidShape("half extents must be > 0")
            if self.kind == "superellipsoid" and not self.exponent > 0:
                raise InvalidShape("superellipsoid exponent must be > 0")

    @property
    def extents(self):
        if self.kind == "sphere":
            return (self.radius,) * 3
        return self.half_extents

    def fits_in_cell(self):
        return all(abs(c) + e < 0.5 for c, e in zip(self.center, self.extents))

    def contains(self, y1, y2, y3):
        """Vectorized strict inside test for points in cell coordinates."""
        d = [y1 - self.center[0], y2 - self.center[1], y3 - self.center[2]]
        if self.kind == "sphere":
            return d[0] ** 2 + d[1] ** 2 + d[2] ** 2 < self.radius ** 2
        if self.kind == "axis-box":
            return ((np.abs(d[0]) < self.half_extents[0]) & (np.abs(d[1]) < self.half_extents[1])
                    & (np.abs(d[2]) < self.half_extents[2]))
        e = self.exponent
        s = sum((np.abs(d[i]) / self.half_extents[i]) ** e for i in range(3))
        return s < 1.0


@dataclass(frozen=True, eq=False)
class CellMask:
    """Voxelized reference cell; ``labels`` is True on fluid voxels."""

    n: int
    labels: np.ndarray
    shape: ObstacleShape = field(default=None, compare=False)

    def __post_init__(self):
        labels = np.array(self.labels, dtype=bool)
        if labels.shape != (self.n,) * 3:
            raise GeometryError(f"labels shape {labels.shape} does not match n={self.n}")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def h(self):
        return 1.0 / self.n

    @property
    def solid(self):
        return ~self.labels

    def same_as(self, other):
        return self.n == other.n and np.array_equal(self.labels, other.labels)


def voxel_centers(n):
    """1-D voxel centre coordinates of ``Y`` at resolution ``n``."""
    return (np.arange(n) + 0.5) / n - 0.5


def fluid_is_connected(labels, periodic=True):
    """Face connectivity (6-neighbour) of the fluid voxels, optionally wrapped."""
    n_fluid = int(labels.sum())
    if n_fluid == 0:
        return False
    idx = np.full(labels.shape, -1, dtype=np.int64)
    idx[labels] = np.arange(n_fluid)
    rows, cols = [], []
    for ax in range(3):
        if periodic:
            nb = np.roll(idx, -1, axis=ax)
            a, b = idx, nb
        else:
            sl_a = [slice(None)] * 3
            sl_b = [slice(None)] * 3
            sl_a[ax] = slice(0, -1)
            sl_b[ax] = slice(1, None)
            a, b = idx[tuple(sl_a)], idx[tuple(sl_b)]
        ok = (a >= 0) & (b >= 0)
        rows.append(a[ok])
        cols.append(b[ok])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    graph = coo_matrix((np.ones(r.size), (r, c)), shape=(n_fluid, n_fluid))
    ncomp, _ = connected_components(graph, directed=False)
    return ncomp == 1


def check_cell_labels(labels):
    """Raise if a fluid label array violates the cell-mask invariants."""
    solid = ~labels
    n = labels.shape[0]
    for ax in range(3):
        for end in (0, n - 1):
            sl = [slice(None)] * 3
            sl[ax] = end
            if solid[tuple(sl)].any():
                raise ObstacleTouchesBoundary("obstacle reaches the boundary voxel layer of Y")
    if not labels.any():
        raise GeometryError("cell has no fluid voxel")
    if not fluid_is_connected(labels, periodic=True):
        raise DisconnectedFluid("fluid voxels are not face-connected under periodic wrap")


def voxelize_cell(shape, n):
    """Center-sampled voxel mask of the cell: a voxel is solid iff its centre lies in ``shape``.

    ``shape=None`` gives an obstacle-free cell.
    """
    n = int(n)
    if n < 4:
        raise GeometryError("cell resolution n must be >= 4")
    if shape is None:
        return CellMask(n, np.ones((n, n, n), dtype=bool))
    if not shape.fits_in_cell():
        raise ObstacleTouchesBoundary(
            f"obstacle {shape.kind} extends beyond the open cell (-1/2, 1/2)^3")
    c = voxel_centers(n)
    y1, y2, y3 = np.meshgrid(c, c, c, indexing="ij")
    labels = ~shape.contains(y1, y2, y3)
    if labels.all():
        raise GeometryError(f"obstacle is not resolved at n={n}: no solid voxel")
    check_cell_labels(labels)
    return CellMask(n, labels, shape)


@dataclass(frozen=True)
class ThinDomainSpec:
    Lx: float
    Ly: float
    epsilon: float
    a_eps: float

    def __post_init__(self):
        for name in ("Lx", "Ly", "epsilon", "a_eps"):
            if not getattr(self, name) > 0:
                raise GeometryError(f"{name} must be positive")
        for name, length in (("Lx", self.Lx), ("Ly", self.Ly), ("epsilon", self.epsilon)):
            r = length / self.a_eps
            if abs(r - round(r)) > TILING_TOL or round(r) < 1:
                raise NonIntegerTiling(f"{name}/a_eps = {r:.12g} is not a positive integer")
        if not self.a_eps < self.epsilon:
            raise GeometryError("microcell size a_eps must be smaller than epsilon")

    @property
    def mx(self):
        return int(round(self.Lx / self.a_eps))

    @property
    def my(self):
        return int(round(self.Ly / self.a_eps))

    @property
    def mz(self):
        return int(round(self.epsilon / self.a_eps))

    @property
    def cell_counts(self):
        return self.mx, self.my, self.mz


@dataclass(frozen=True, eq=False)
class PerforatedMask3D:
    """The cell mask tiled ``mx x my x mz`` times over ``Q``."""

    spec: ThinDomainSpec
    n_c: int
    labels: np.ndarray
    cell: CellMask = field(default=None, compare=False)

    @property
    def shape(self):
        return self.labels.shape

    @property
    def voxel_size(self):
        return self.spec.a_eps / self.n_c

    @property
    def lattice_origin(self):
        return np.full(3, 0.5 * self.spec.a_eps)

    def voxel_center(self, idx):
        """Physical coordinates of voxel centres for integer index arrays ``(..., 3)``."""
        return (np.asarray(idx, dtype=float) + 0.5) * self.voxel_size

    def lattice_coordinates(self, idx):
        """Return ``(k, y)`` with ``x = origin + a k + a y`` for voxel indices."""
        idx = np.asarray(idx)
        k = idx // self.n_c
        y = ((idx % self.n_c) + 0.5) / self.n_c - 0.5
        return k, y

    @property
    def has_obstacles(self):
        return not bool(self.labels.all())


def build_thin_domain(spec, cell):
    """Tile ``cell`` over the thin domain described by ``spec``."""
    labels = np.tile(cell.labels, spec.cell_counts)
    labels.setflags(write=False)
    return PerforatedMask3D(spec, cell.n, labels, cell)


def porosity(mask):
    labels = mask.labels
    return float(labels.sum()) / labels.size
