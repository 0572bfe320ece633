"""Synthetic salt scenarios and a stand-in probability predictor.

Salt bodies are ellipses (2D) or ellipsoids (3D). Inclusions are sediment
pockets carved out of the salt: they carry ``inclusion_velocity`` in the
true model and are *not* salt in the mask.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import InvalidParameterError, PlacementError
from .grid import (DEFAULT_BOUNDS, GridGeometry, ProbabilityCube, SaltMask, SedimentProfile,
                   VelocityModel, profile_to_model)
from .prior import DEFAULT_SALT_VELOCITY

MAX_PLACEMENT_TRIES = 1000


@dataclass(frozen=True)
class SaltBody:
    """Ellipse/ellipsoid; ``rotation`` (degrees) turns it in the (x, z) plane."""

    center: Tuple[float, ...]
    semi_axes: Tuple[float, ...]
    rotation: float = 0.0

    def contains(self, geom: GridGeometry) -> np.ndarray:
        if len(self.center) != geom.ndim or len(self.semi_axes) != geom.ndim:
            raise InvalidParameterError("salt body dimensionality does not match the grid")
        if min(self.semi_axes) <= 0:
            raise InvalidParameterError("semi-axes must be > 0")
        coords = [c - c0 for c, c0 in zip(geom.mesh(), self.center)]
        theta = np.deg2rad(self.rotation)
        x, z = coords[0], coords[-1]
        coords[0] = np.cos(theta) * x + np.sin(theta) * z
        coords[-1] = -np.sin(theta) * x + np.cos(theta) * z
        r2 = sum((c / a) ** 2 for c, a in zip(coords, self.semi_axes))
        return np.broadcast_to(r2 <= 1.0, geom.dims)


@dataclass(frozen=True)
class SaltScenarioSpec:
    geometry: GridGeometry
    profile: SedimentProfile
    salt_bodies: Sequence[SaltBody] = ()
    inclusion_count: int = 0
    inclusion_radius: Tuple[float, float] = (20.0, 40.0)
    inclusion_velocity: float = 2500.0
    v_salt: float = DEFAULT_SALT_VELOCITY
    rng_seed: int = 0
    bounds: Tuple[float, float] = field(default=DEFAULT_BOUNDS)

    def __post_init__(self):
        lo, hi = self.bounds
        if not lo <= self.inclusion_velocity <= hi or not lo <= self.v_salt <= hi:
            raise InvalidParameterError("salt and inclusion velocities must lie within bounds")
        rmin, rmax = self.inclusion_radius
        if self.inclusion_count < 0 or not 0 < rmin <= rmax:
            raise InvalidParameterError("invalid inclusion count or radius range")
        object.__setattr__(self, "salt_bodies", tuple(self.salt_bodies))


@dataclass(frozen=True)
class PredictorFidelity:
    blur_radius: float = 0.0
    noise_sigma: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.blur_radius < 0 or self.noise_sigma < 0:
            raise InvalidParameterError("blur_radius and noise_sigma must be >= 0")


def salt_union(spec: SaltScenarioSpec) -> np.ndarray:
    salt = np.zeros(spec.geometry.dims, dtype=bool)
    for body in spec.salt_bodies:
        salt |= body.contains(spec.geometry)
    return salt


def _place_inclusions(spec: SaltScenarioSpec, salt: np.ndarray, rng) -> np.ndarray:
    geom = spec.geometry
    carved = np.zeros(geom.dims, dtype=bool)
    if spec.inclusion_count == 0:
        return carved
    candidates = np.argwhere(salt)
    if len(candidates) == 0:
        raise PlacementError("inclusions requested but the scenario has no salt")
    mesh = geom.mesh()
    rmin, rmax = spec.inclusion_radius
    reach = np.sqrt(geom.ndim) * geom.spacing
    for k in range(spec.inclusion_count):
        for _ in range(MAX_PLACEMENT_TRIES):
            cell = candidates[rng.integers(len(candidates))]
            center = np.asarray(geom.origin) + cell * geom.spacing
            radius = rng.uniform(rmin, rmax)
            dist2 = sum((c - c0) ** 2 for c, c0 in zip(mesh, center))
            blob = np.broadcast_to(dist2 <= radius ** 2, geom.dims)
            # every neighbour of a carved cell (diagonals included) must be salt
            halo = np.broadcast_to(dist2 <= (radius + reach) ** 2, geom.dims)
            if blob.any() and np.all(salt[halo]):
                carved |= blob
                break
        else:
            raise PlacementError(f"could not place inclusion {k} strictly inside salt "
                                 f"after {MAX_PLACEMENT_TRIES} tries")
    return carved


def make_scenario(spec: SaltScenarioSpec):
    """Ground-truth model and salt mask for a scenario.

    Returns ``(truth, mask, profile)``; identical specs give bit-identical output.
    """
    rng = np.random.default_rng(spec.rng_seed)
    background = profile_to_model(spec.profile, spec.geometry, spec.bounds)
    salt = salt_union(spec)
    carved = _place_inclusions(spec, salt, rng)
    values = np.array(background.values)
    values[salt] = spec.v_salt
    values[carved] = spec.inclusion_velocity
    truth = VelocityModel(spec.geometry, values, spec.bounds)
    mask = SaltMask(spec.geometry, salt & ~carved)
    return truth, mask, spec.profile


def pseudo_dl_predict(mask: SaltMask, fidelity: PredictorFidelity) -> ProbabilityCube:
    """Degrade a mask into a probability cube: Gaussian blur, additive noise, clamp."""
    p = mask.values.astype(np.float64)
    if fidelity.blur_radius > 0:
        p = gaussian_filter(p, sigma=fidelity.blur_radius, mode="nearest")
    if fidelity.noise_sigma > 0:
        rng = np.random.default_rng(fidelity.rng_seed)
        p = p + rng.normal(0.0, fidelity.noise_sigma, size=p.shape)
    return ProbabilityCube(mask.geometry, np.clip(p, 0.0, 1.0))
