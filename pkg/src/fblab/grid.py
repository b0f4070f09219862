"""Rectangular lattices, nodal functions, and discrete calculus.

Functions are stored at grid nodes; gradients live at cell centers and are
the standard bilinear/trilinear element gradients (exact for affine data).
Ball integrals use a fixed 4^dim-per-cell subsampling rule for partial
cells, sphere averages interpolate the nodal field at deterministic angular
nodes. All quadrature reductions go through compensated summation so the
result does not depend on traversal chunking.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

# subsamples per axis inside each cell, for partial-cell ball weights and
# sign fractions
SUBSAMPLE_PER_AXIS = 4

# containment slack for "closed ball inside domain" checks, relative to
# the grid spacing
_CONTAIN_TOL = 1e-12


class GridError(ValueError):
    """Invalid grid construction or an operation outside its precondition."""


def ksum(a: np.ndarray | Sequence[float]) -> float:
    """Compensated (exact) sum of an array, independent of chunking."""
    arr = np.asarray(a, dtype=float)
    return math.fsum(arr.ravel().tolist())


@dataclass(frozen=True)
class GridDomain:
    """Axis-aligned rectangular lattice in 2 or 3 dimensions.

    Node coordinates are always computed from the index as
    origin[i] + k * spacing[i]; nothing is accumulated.
    """

    dim: int
    origin: tuple[float, ...]
    extent: tuple[float, ...]
    nodes_per_axis: tuple[int, ...]

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(
            self.extent[i] / (self.nodes_per_axis[i] - 1) for i in range(self.dim)
        )

    @property
    def node_count(self) -> int:
        return int(np.prod(self.nodes_per_axis))

    @property
    def cells_per_axis(self) -> tuple[int, ...]:
        return tuple(n - 1 for n in self.nodes_per_axis)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def upper(self) -> tuple[float, ...]:
        return tuple(self.origin[i] + self.extent[i] for i in range(self.dim))

    def axis_coords(self, axis: int) -> np.ndarray:
        h = self.spacing[axis]
        return self.origin[axis] + h * np.arange(self.nodes_per_axis[axis])

    def node_coordinates(self) -> np.ndarray:
        """All node coordinates, shape (*nodes_per_axis, dim)."""
        axes = [self.axis_coords(i) for i in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def cell_centers(self) -> np.ndarray:
        """Cell-center coordinates, shape (*cells_per_axis, dim)."""
        axes = [
            self.axis_coords(i)[:-1] + 0.5 * self.spacing[i] for i in range(self.dim)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def contains_ball(self, ball: "Ball") -> bool:
        tol = _CONTAIN_TOL * max(self.extent)
        for i in range(self.dim):
            if ball.center[i] - ball.radius < self.origin[i] - tol:
                return False
            if ball.center[i] + ball.radius > self.upper[i] + tol:
                return False
        return True

    def require_ball(self, ball: "Ball") -> None:
        if ball.dim != self.dim:
            raise GridError(
                f"ball dimension {ball.dim} does not match domain dimension {self.dim}"
            )
        if not self.contains_ball(ball):
            raise GridError(
                f"closed ball at {ball.center} with radius {ball.radius} "
                "is not contained in the grid domain"
            )


@dataclass(frozen=True)
class Ball:
    """Closed ball B(center, radius)."""

    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        if self.radius <= 0.0:
            raise GridError("ball radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def dim(self) -> int:
        return len(self.center)


class GridFunction:
    """Nodal real values over a :class:`GridDomain`; immutable."""

    __slots__ = ("domain", "values")

    def __init__(self, domain: GridDomain, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.shape != tuple(domain.nodes_per_axis):
            values = values.reshape(domain.nodes_per_axis)
        if not np.all(np.isfinite(values)):
            raise GridError("grid function values must be finite")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "values", values)

    def __setattr__(self, name, value):
        raise AttributeError("GridFunction is immutable")

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.domain, values)

    def interpolate(self, points: np.ndarray) -> np.ndarray:
        """Multilinear interpolation at points of shape (..., dim)."""
        return interpolate(self, points)

    def __eq__(self, other):
        return (
            isinstance(other, GridFunction)
            and self.domain == other.domain
            and np.array_equal(self.values, other.values)
        )


def make_grid(
    origin: Sequence[float],
    extent: Sequence[float],
    nodes_per_axis: Sequence[int],
) -> GridDomain:
    origin = tuple(float(v) for v in origin)
    extent = tuple(float(v) for v in extent)
    nodes = tuple(int(v) for v in nodes_per_axis)
    dim = len(origin)
    if dim not in (2, 3):
        raise GridError(f"dimension must be 2 or 3, got {dim}")
    if len(extent) != dim or len(nodes) != dim:
        raise GridError("origin, extent, nodes_per_axis must have equal length")
    if any(e <= 0.0 for e in extent):
        raise GridError("extents must be positive")
    if any(n < 3 for n in nodes):
        raise GridError("need at least 3 nodes per axis")
    return GridDomain(dim=dim, origin=origin, extent=extent, nodes_per_axis=nodes)


def sample(f: Callable[[np.ndarray], float | np.ndarray], g: GridDomain) -> GridFunction:
    """Evaluate f exactly at every node.

    f receives coordinate arrays of shape (..., dim) and may be vectorized;
    a scalar-only callable is applied pointwise as a fallback.
    """
    coords = g.node_coordinates()
    try:
        vals = np.asarray(f(coords), dtype=float)
        if vals.shape != coords.shape[:-1]:
            raise ValueError
    except Exception:
        flat = coords.reshape(-1, g.dim)
        vals = np.array([float(f(p)) for p in flat]).reshape(g.nodes_per_axis)
    if not np.all(np.isfinite(vals)):
        raise GridError("sampled function returned a non-finite value")
    return GridFunction(g, vals)


def interpolate(u: GridFunction, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of nodal values; exact at the nodes."""
    g = u.domain
    pts = np.asarray(points, dtype=float)
    squeeze = pts.ndim == 1
    pts = np.atleast_2d(pts)
    t = (pts - np.asarray(g.origin)) / np.asarray(g.spacing)
    idx = np.floor(t).astype(int)
    idx = np.clip(idx, 0, np.asarray(g.nodes_per_axis) - 2)
    frac = t - idx
    frac = np.clip(frac, 0.0, 1.0)
    out = np.zeros(pts.shape[:-1])
    for corner in range(1 << g.dim):
        w = np.ones(pts.shape[:-1])
        ix = []
        for d in range(g.dim):
            bit = (corner >> d) & 1
            w = w * (frac[..., d] if bit else (1.0 - frac[..., d]))
            ix.append(idx[..., d] + bit)
        out += w * u.values[tuple(ix)]
    return out[0] if squeeze else out


def gradient(u: GridFunction) -> np.ndarray:
    """Cell-centered element gradient, shape (*cells_per_axis, dim).

    Each component averages the forward differences along that axis over
    the cell's parallel edges; exact for affine nodal data.
    """
    g = u.domain
    v = u.values
    h = g.spacing
    comps = []
    if g.dim == 2:
        dx = (v[1:, :] - v[:-1, :]) / h[0]
        comps.append(0.5 * (dx[:, :-1] + dx[:, 1:]))
        dy = (v[:, 1:] - v[:, :-1]) / h[1]
        comps.append(0.5 * (dy[:-1, :] + dy[1:, :]))
    else:
        dx = (v[1:, :, :] - v[:-1, :, :]) / h[0]
        comps.append(
            0.25 * (dx[:, :-1, :-1] + dx[:, 1:, :-1] + dx[:, :-1, 1:] + dx[:, 1:, 1:])
        )
        dy = (v[:, 1:, :] - v[:, :-1, :]) / h[1]
        comps.append(
            0.25 * (dy[:-1, :, :-1] + dy[1:, :, :-1] + dy[:-1, :, 1:] + dy[1:, :, 1:])
        )
        dz = (v[:, :, 1:] - v[:, :, :-1]) / h[2]
        comps.append(
            0.25 * (dz[:-1, :-1, :] + dz[1:, :-1, :] + dz[:-1, 1:, :] + dz[1:, 1:, :])
        )
    return np.stack(comps, axis=-1)


def _subsample_offsets(dim: int) -> np.ndarray:
    """Fixed cell-relative subsample offsets in (0,1)^dim, 4^dim points."""
    s = (np.arange(SUBSAMPLE_PER_AXIS) + 0.5) / SUBSAMPLE_PER_AXIS
    mesh = np.meshgrid(*([s] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _cell_box(g: GridDomain, ball: Ball) -> tuple[tuple[slice, ...], np.ndarray]:
    """Index slices of cells whose box can intersect the ball, plus the
    lower-corner coordinates of those cells, shape (*box, dim)."""
    lo_idx = []
    hi_idx = []
    for d in range(g.dim):
        h = g.spacing[d]
        lo = int(math.floor((ball.center[d] - ball.radius - g.origin[d]) / h)) - 1
        hi = int(math.ceil((ball.center[d] + ball.radius - g.origin[d]) / h)) + 1
        lo_idx.append(max(lo, 0))
        hi_idx.append(min(hi, g.cells_per_axis[d]))
    slices = tuple(slice(lo, hi) for lo, hi in zip(lo_idx, hi_idx))
    axes = [
        g.origin[d] + g.spacing[d] * np.arange(lo_idx[d], hi_idx[d])
        for d in range(g.dim)
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    return slices, np.stack(mesh, axis=-1)


def ball_cell_fractions(g: GridDomain, ball: Ball) -> tuple[tuple[slice, ...], np.ndarray]:
    """Per-cell inside-ball volume fractions over the ball's bounding box.

    Returns (slices, fractions) where slices index into the full cell
    array. Fractions come from the fixed 4^dim subsample rule.
    """
    slices, corners = _cell_box(g, ball)
    offs = _subsample_offsets(g.dim) * np.asarray(g.spacing)
    # points shape (*box, 4^dim, dim)
    pts = corners[..., None, :] + offs
    d2 = np.sum((pts - np.asarray(ball.center)) ** 2, axis=-1)
    inside = d2 <= ball.radius * ball.radius
    frac = inside.mean(axis=-1)
    return slices, frac


def integrate_ball(g: GridDomain, cell_field: np.ndarray, ball: Ball) -> float:
    """Integral of a cell-valued scalar field over the ball.

    cell_field has shape cells_per_axis. Partial cells are weighted by
    their subsampled inside fraction; the reduction is compensated.
    """
    g.require_ball(ball)
    if cell_field.shape != g.cells_per_axis:
        raise GridError("cell field shape does not match the grid's cells")
    slices, frac = ball_cell_fractions(g, ball)
    vals = cell_field[slices] * frac * g.cell_volume
    return ksum(vals)


def ball_volume(g: GridDomain, ball: Ball) -> float:
    """integrate_ball of the constant field 1."""
    g.require_ball(ball)
    slices, frac = ball_cell_fractions(g, ball)
    return ksum(frac) * g.cell_volume


def sphere_points(ball: Ball, n_angular: int) -> np.ndarray:
    """Deterministic quadrature nodes on the sphere: uniform angles in 2D,
    Fibonacci lattice in 3D."""
    c = np.asarray(ball.center)
    r = ball.radius
    if ball.dim == 2:
        theta = 2.0 * np.pi * np.arange(n_angular) / n_angular
        return c + r * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    k = np.arange(n_angular)
    z = 1.0 - 2.0 * (k + 0.5) / n_angular
    phi = np.pi * (3.0 - np.sqrt(5.0)) * k  # golden-angle increment
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return c + r * np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)


def sphere_average(u: GridFunction, ball: Ball, n_angular: int | None = None) -> float:
    """Average of the interpolated field over the sphere boundary."""
    u.domain.require_ball(ball)
    if n_angular is None:
        n_angular = 256 if ball.dim == 2 else 1024
    if n_angular < 16:
        raise GridError("n_angular must be at least 16")
    pts = sphere_points(ball, n_angular)
    vals = interpolate(u, pts)
    return ksum(vals) / n_angular


# ---------------------------------------------------------------------------
# FBGF binary serialization

_MAGIC = b"FBGF"
_VERSION = 1


def write_fbgf(u: GridFunction, path) -> None:
    g = u.domain
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, g.dim))
        fh.write(struct.pack(f"<{g.dim}Q", *g.nodes_per_axis))
        fh.write(struct.pack(f"<{g.dim}d", *g.origin))
        fh.write(struct.pack(f"<{g.dim}d", *g.extent))
        fh.write(np.ascontiguousarray(u.values, dtype="<f8").tobytes())


def read_fbgf(path) -> GridFunction:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise GridError(f"bad magic {magic!r}, expected {_MAGIC!r}")
        version, dim = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise GridError(f"unsupported FBGF version {version}")
        nodes = struct.unpack(f"<{dim}Q", fh.read(8 * dim))
        origin = struct.unpack(f"<{dim}d", fh.read(8 * dim))
        extent = struct.unpack(f"<{dim}d", fh.read(8 * dim))
        g = make_grid(origin, extent, nodes)
        count = int(np.prod(nodes))
        raw = fh.read(8 * count)
        if len(raw) != 8 * count:
            raise GridError("truncated FBGF value payload")
        values = np.frombuffer(raw, dtype="<f8").reshape(nodes)
    return GridFunction(g, values)
