"""Grid geometry and the gridded field types (velocity, probability, mask).

Axis order is ``(x, z)`` in 2D and ``(x, y, z)`` in 3D with depth ``z``
increasing downward. Arrays are C-ordered, so the last axis (z) varies
fastest in memory and in the on-disk payload.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .errors import BoundsError, InvalidGeometryError, InvalidParameterError, ShapeError

DEFAULT_BOUNDS = (300.0, 9000.0)
MIN_DIM = 8


def _frozen(values, dtype):
    arr = np.array(values, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class GridGeometry:
    dims: Tuple[int, ...]
    spacing: float
    origin: Tuple[float, ...] = None

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if len(dims) not in (2, 3):
            raise InvalidGeometryError(f"ndim must be 2 or 3, got {len(dims)}")
        if any(d < MIN_DIM for d in dims):
            raise InvalidGeometryError(f"every dim must be >= {MIN_DIM}, got {dims}")
        spacing = float(self.spacing)
        if not np.isfinite(spacing) or spacing <= 0:
            raise InvalidGeometryError(f"spacing must be > 0, got {self.spacing}")
        object.__setattr__(self, "spacing", spacing)
        origin = self.origin
        if origin is None:
            origin = (0.0,) * len(dims)
        origin = tuple(float(o) for o in origin)
        if len(origin) != len(dims):
            raise InvalidGeometryError("origin must have one entry per axis")
        object.__setattr__(self, "origin", origin)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @property
    def extent(self) -> Tuple[float, ...]:
        """Coordinate of the last cell along each axis."""
        return tuple(o + (n - 1) * self.spacing for o, n in zip(self.origin, self.dims))

    def depths(self) -> np.ndarray:
        """Depth of each cell along the z axis, in meters."""
        return self.origin[-1] + self.spacing * np.arange(self.dims[-1])

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing * np.arange(self.dims[axis])

    def mesh(self):
        """Cell coordinates as a tuple of broadcastable arrays, one per axis."""
        return np.meshgrid(*(self.axis_coords(a) for a in range(self.ndim)), indexing="ij", sparse=True)

    def snap(self, position) -> Tuple[int, ...]:
        """Nearest cell index for a position in meters."""
        pos = np.asarray(position, dtype=float)
        if pos.shape != (self.ndim,):
            raise InvalidGeometryError(f"position {tuple(pos)} does not have {self.ndim} coordinates")
        idx = np.rint((pos - np.asarray(self.origin)) / self.spacing).astype(int)
        return tuple(int(i) for i in idx)

    def contains(self, position) -> bool:
        pos = np.asarray(position, dtype=float)
        lo = np.asarray(self.origin)
        hi = np.asarray(self.extent)
        return bool(np.all(pos > lo) and np.all(pos < hi))

    def check_same(self, other: "GridGeometry"):
        if self.dims != other.dims or self.spacing != other.spacing or self.origin != other.origin:
            raise ShapeError(f"geometry mismatch: {self} vs {other}")


class _Field:
    """Shared behaviour of the gridded value types."""

    def _init_values(self, dtype):
        values = np.asarray(self.values)
        if values.shape != self.geometry.dims:
            raise ShapeError(f"values shape {values.shape} does not match dims {self.geometry.dims}")
        object.__setattr__(self, "values", _frozen(values, dtype))

    def __eq__(self, other):
        return (type(self) is type(other) and self.geometry == other.geometry
                and np.array_equal(self.values, other.values))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class VelocityModel(_Field):
    geometry: GridGeometry
    values: np.ndarray
    bounds: Tuple[float, float] = DEFAULT_BOUNDS

    def __post_init__(self):
        self._init_values(np.float64)
        lo, hi = self.bounds
        v = self.values
        if not np.all(np.isfinite(v)):
            raise BoundsError("velocity model contains non-finite values")
        if v.min() < lo or v.max() > hi:
            raise BoundsError(f"velocity range [{v.min():.6g}, {v.max():.6g}] outside bounds [{lo}, {hi}] m/s")

    def with_values(self, values) -> "VelocityModel":
        return VelocityModel(self.geometry, values, self.bounds)


@dataclass(frozen=True, eq=False)
class ProbabilityCube(_Field):
    geometry: GridGeometry
    values: np.ndarray

    def __post_init__(self):
        self._init_values(np.float64)
        v = self.values
        if not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0:
            raise BoundsError("probabilities must be finite and within [0, 1]")


@dataclass(frozen=True, eq=False)
class SaltMask(_Field):
    geometry: GridGeometry
    values: np.ndarray

    def __post_init__(self):
        self._init_values(bool)

    def to_probability(self) -> ProbabilityCube:
        return ProbabilityCube(self.geometry, self.values.astype(np.float64))

    @property
    def fraction(self) -> float:
        return float(self.values.mean())


@dataclass(frozen=True, eq=False)
class SedimentProfile:
    """Piecewise-linear v_se(z), clamped beyond the first and last sample."""

    depths: np.ndarray
    velocities: np.ndarray
    bounds: Tuple[float, float] = field(default=DEFAULT_BOUNDS)

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.depths, dtype=np.float64))
        v = np.atleast_1d(np.asarray(self.velocities, dtype=np.float64))
        if d.ndim != 1 or d.shape != v.shape or d.size < 1:
            raise InvalidParameterError("profile needs matching 1-D depth and velocity samples")
        if d[0] != 0.0:
            raise InvalidParameterError("profile must start at depth 0")
        if np.any(np.diff(d) <= 0):
            raise InvalidParameterError("profile depths must be strictly increasing")
        lo, hi = self.bounds
        if not np.all(np.isfinite(v)) or v.min() < lo or v.max() > hi:
            raise BoundsError(f"profile velocities outside bounds [{lo}, {hi}] m/s")
        object.__setattr__(self, "depths", _frozen(d, np.float64))
        object.__setattr__(self, "velocities", _frozen(v, np.float64))

    @classmethod
    def constant(cls, velocity: float) -> "SedimentProfile":
        return cls([0.0], [velocity])

    def __call__(self, depth):
        return np.interp(depth, self.depths, self.velocities)

    def __eq__(self, other):
        return (isinstance(other, SedimentProfile) and np.array_equal(self.depths, other.depths)
                and np.array_equal(self.velocities, other.velocities))

    __hash__ = None


def profile_to_model(profile: SedimentProfile, geom: GridGeometry, bounds=DEFAULT_BOUNDS) -> VelocityModel:
    """Broadcast the 1-D sediment profile laterally over ``geom``."""
    if not isinstance(geom, GridGeometry):
        raise InvalidGeometryError("profile_to_model needs a GridGeometry")
    column = profile(geom.depths())
    values = np.broadcast_to(column, geom.dims)
    return VelocityModel(geom, values, bounds)


def binarize(p: ProbabilityCube, threshold: float = 0.5) -> SaltMask:
    """Salt where ``p >= threshold``; ties count as salt."""
    if not 0.0 < threshold < 1.0:
        raise InvalidParameterError(f"threshold must lie in (0, 1), got {threshold}")
    return SaltMask(p.geometry, p.values >= threshold)


def binarization_gap(p: ProbabilityCube) -> float:
    """Largest distance of any cell from {0, 1}; zero iff the cube is binary."""
    v = p.values
    return float(np.max(np.minimum(v, 1.0 - v)))


def interior_mask(geom: GridGeometry, width: int) -> np.ndarray:
    """True for cells at least ``width`` cells away from every grid face."""
    return edge_distance(geom.dims) >= width


def edge_distance(dims) -> np.ndarray:
    """Cell distance (in cells) to the nearest grid face."""
    dist = None
    for axis, n in enumerate(dims):
        i = np.arange(n)
        d = np.minimum(i, n - 1 - i)
        shape = [1] * len(dims)
        shape[axis] = n
        d = d.reshape(shape)
        dist = d if dist is None else np.minimum(dist, d)
    return np.broadcast_to(dist, tuple(dims))
