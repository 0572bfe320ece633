"""Probability-to-velocity mapping and ensemble averaging of probability cubes."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BoundsError, EmptyEnsembleError
from .grid import DEFAULT_BOUNDS, ProbabilityCube, SedimentProfile, VelocityModel

DEFAULT_SALT_VELOCITY = 4480.0


@dataclass(frozen=True, eq=False)
class BlendParams:
    profile: SedimentProfile
    v_salt: float = DEFAULT_SALT_VELOCITY
    bounds: tuple = DEFAULT_BOUNDS

    def __post_init__(self):
        lo, hi = self.bounds
        if not lo <= self.v_salt <= hi:
            raise BoundsError(f"v_salt={self.v_salt} m/s outside bounds [{lo}, {hi}]")


def blend(p: ProbabilityCube, params: BlendParams) -> VelocityModel:
    """Per cell ``v_salt * P + v_se(z) * (1 - P)``, with P the salt probability."""
    geom = p.geometry
    v_se = params.profile(geom.depths())
    values = params.v_salt * p.values + v_se * (1.0 - p.values)
    return VelocityModel(geom, values, params.bounds)


def init_model(p0: ProbabilityCube, params: BlendParams) -> VelocityModel:
    """Starting model built from the first probability cube.

    Numerically the same map as :func:`blend`; kept separate so workflow
    logs can tell the starting model apart from the regularization target.
    """
    return blend(p0, params)


def ensemble_mean(cubes: Sequence[ProbabilityCube]) -> ProbabilityCube:
    """Pointwise mean of several predictions of the same volume."""
    cubes = list(cubes)
    if not cubes:
        raise EmptyEnsembleError("ensemble_mean needs at least one cube")
    geom = cubes[0].geometry
    total = np.zeros(geom.dims)
    for c in cubes:
        geom.check_same(c.geometry)
        total += c.values
    # rounding can push a mean of in-range values a hair outside [0, 1]
    return ProbabilityCube(geom, np.clip(total / len(cubes), 0.0, 1.0))
