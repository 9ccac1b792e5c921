"""Uniform grids on intervals, balls, and squares, with weighted quadrature.

Three modes share one Grid type:

* interval  -- [0, extent] with Dirichlet nodes at both ends,
* radial    -- radii [0, extent] of an n-ball; r=0 is a symmetry node and
               only the rim is Dirichlet; integrals carry the r**(n-1)
               Jacobian and the sphere surface factor,
* tensor2d  -- [0, extent]**2 tensor grid with Dirichlet edges.

resolution counts cells per axis, so a grid has resolution+1 nodes per
axis.  Quadrature is composite trapezoid.  cell_volumes gives the
finite-volume node weights that the operator module uses for its
variational inner product; on interval and tensor grids they coincide
with the trapezoid weights, on radial grids they are shell volumes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError, ShapeError
from .weight_models import eval_radial, surface_area

MODE_INTERVAL = "interval"
MODE_RADIAL = "radial"
MODE_TENSOR2D = "tensor2d"
_MODES = (MODE_INTERVAL, MODE_RADIAL, MODE_TENSOR2D)


@dataclass(frozen=True, eq=False)
class Grid:
    mode: str
    axes: tuple
    h: tuple
    dim: int
    extent: float
    boundary_mask: np.ndarray

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    @property
    def n_nodes(self):
        return int(np.prod(self.shape))

    @property
    def interior_mask(self):
        return ~self.boundary_mask

    def radius(self):
        """Distance of every node from the origin, shaped like the grid."""
        if self.mode == MODE_TENSOR2D:
            x, y = np.meshgrid(self.axes[0], self.axes[1], indexing="ij")
            return np.hypot(x, y)
        return np.abs(self.axes[0])

    def coordinates(self):
        """Per-axis nodal coordinates broadcast to the grid shape."""
        if self.mode == MODE_TENSOR2D:
            x, y = np.meshgrid(self.axes[0], self.axes[1], indexing="ij")
            return (x, y)
        return (self.axes[0],)


def build_grid(mode, extent, resolution, n=None):
    """Build a uniform grid with `resolution` cells per axis."""
    if mode not in _MODES:
        raise ConfigError(f"unknown grid mode {mode!r}")
    if not extent > 0.0:
        raise ConfigError(f"extent must be positive, got {extent}")
    resolution = int(resolution)
    if resolution < 4:
        raise ConfigError(f"resolution must be at least 4 cells, got {resolution}")

    nodes = np.linspace(0.0, float(extent), resolution + 1)
    h = float(extent) / resolution

    if mode == MODE_INTERVAL:
        mask = np.zeros(resolution + 1, dtype=bool)
        mask[0] = mask[-1] = True
        return Grid(mode, (nodes,), (h,), 1, float(extent), mask)

    if mode == MODE_RADIAL:
        if n is None or int(n) != n or n < 2:
            raise ConfigError("radial mode needs an integer dimension n >= 2")
        mask = np.zeros(resolution + 1, dtype=bool)
        mask[-1] = True
        return Grid(mode, (nodes,), (h,), int(n), float(extent), mask)

    mask = np.zeros((resolution + 1, resolution + 1), dtype=bool)
    mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
    return Grid(mode, (nodes, nodes), (h, h), 2, float(extent), mask)


@dataclass(eq=False)
class Field:
    """Nodal values on a grid.  Dirichlet nodes are expected to carry the
    boundary value (zero throughout this package)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ShapeError(
                f"field shape {vals.shape} does not match grid shape {self.grid.shape}"
            )
        self.values = vals

    def copy(self):
        return Field(self.grid, self.values.copy())

    @staticmethod
    def zeros(grid):
        return Field(grid, np.zeros(grid.shape))

    @staticmethod
    def from_function(grid, fn):
        """Sample fn at the nodes.  fn takes a scalar coordinate in 1d modes
        and an (x, y) pair on tensor grids."""
        if grid.mode == MODE_TENSOR2D:
            x, y = grid.coordinates()
            vals = np.array(
                [[fn((xi, yi)) for xi, yi in zip(rowx, rowy)] for rowx, rowy in zip(x, y)]
            )
        else:
            vals = np.array([fn(xi) for xi in grid.axes[0]])
        return Field(grid, vals)


def _trap_1d(m, h):
    w = np.full(m, h)
    w[0] = w[-1] = h / 2.0
    return w


def quad_weights(grid):
    """Composite trapezoid node weights, with the radial Jacobian folded in."""
    if grid.mode == MODE_INTERVAL:
        return _trap_1d(grid.shape[0], grid.h[0])
    if grid.mode == MODE_RADIAL:
        r = grid.axes[0]
        return surface_area(grid.dim) * _trap_1d(grid.shape[0], grid.h[0]) * r ** (grid.dim - 1)
    wx = _trap_1d(grid.shape[0], grid.h[0])
    wy = _trap_1d(grid.shape[1], grid.h[1])
    return np.outer(wx, wy)


def cell_volumes(grid):
    """Finite-volume node weights: the measure of the cell each node owns."""
    if grid.mode != MODE_RADIAL:
        return quad_weights(grid)
    r = grid.axes[0]
    h = grid.h[0]
    n = grid.dim
    lo = np.clip(r - h / 2.0, 0.0, None)
    hi = np.minimum(r + h / 2.0, grid.extent)
    return surface_area(n) * (hi**n - lo**n) / n


def weight_on_grid(spec, grid):
    """Weight values at every node.  Accepts None (constant 1), a radial
    weight spec, or an already-evaluated nodal array."""
    if spec is None:
        return np.ones(grid.shape)
    if isinstance(spec, np.ndarray):
        if spec.shape != grid.shape:
            raise ShapeError(f"weight array shape {spec.shape} != grid {grid.shape}")
        return spec
    return eval_radial(spec, grid.radius())


def integrate(field, weight=None):
    """Weighted integral of a field by composite trapezoid quadrature."""
    vals = field.values
    if not np.all(np.isfinite(vals)):
        raise NumericalError("field contains non-finite values")
    return float(np.sum(quad_weights(field.grid) * weight_on_grid(weight, field.grid) * vals))


def nodal_gradient(field):
    """Per-axis nodal derivatives: centered inside, one-sided at the ends."""
    grid = field.grid
    out = []
    for axis, h in enumerate(grid.h):
        out.append(np.gradient(field.values, h, axis=axis, edge_order=1))
    return out


def sobolev_norm(field, weight=None, p=2.0):
    """Weighted norm (integral of omega * (|u|**p + |grad u|**p)) ** (1/p)."""
    if not p > 1.0:
        raise ConfigError(f"norm exponent must exceed 1, got {p}")
    grads = nodal_gradient(field)
    grad_sq = np.zeros(field.grid.shape)
    for g in grads:
        grad_sq += g * g
    dens = np.abs(field.values) ** p + grad_sq ** (p / 2.0)
    total = np.sum(quad_weights(field.grid) * weight_on_grid(weight, field.grid) * dens)
    if not np.isfinite(total):
        raise NumericalError("non-finite Sobolev integrand")
    return float(total ** (1.0 / p))


def write_field_csv(field, path, header_lines=()):
    """One row per node: coordinates then value."""
    grid = field.grid
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        if grid.mode == MODE_TENSOR2D:
            fh.write("x,y,value\n")
            x, y = grid.coordinates()
            for xi, yi, vi in zip(x.ravel(), y.ravel(), field.values.ravel()):
                fh.write(f"{xi:.17g},{yi:.17g},{vi:.17g}\n")
        else:
            name = "x" if grid.mode == MODE_INTERVAL else "r"
            fh.write(f"{name},value\n")
            for xi, vi in zip(grid.axes[0], field.values):
                fh.write(f"{xi:.17g},{vi:.17g}\n")


def read_field_csv(path, grid):
    """Read a field written by write_field_csv back onto the same grid."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            try:
                rows.append([float(x) for x in parts])
            except ValueError:
                continue  # header row
    data = np.asarray(rows)
    if data.shape[0] != grid.n_nodes:
        raise ShapeError(f"{path}: {data.shape[0]} rows for {grid.n_nodes} nodes")
    coords = data[:, :-1]
    vals = data[:, -1]
    if grid.mode == MODE_TENSOR2D:
        x, y = grid.coordinates()
        expect = np.column_stack([x.ravel(), y.ravel()])
    else:
        expect = grid.axes[0][:, None]
    if not np.allclose(coords, expect, atol=1e-12):
        raise ShapeError(f"{path}: node coordinates do not match the grid")
    return Field(grid, vals.reshape(grid.shape))
