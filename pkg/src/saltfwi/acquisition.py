"""Source wavelets, survey geometry and shot-gather containers."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import InvalidGeometryError, InvalidParameterError, ShapeError
from .grid import GridGeometry


@dataclass(frozen=True)
class RickerWavelet:
    peak_frequency: float
    dt: float
    nt: int
    delay: float = None
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.peak_frequency > 0:
            raise InvalidParameterError("peak_frequency must be > 0")
        if not self.dt > 0:
            raise InvalidParameterError("dt must be > 0")
        if int(self.nt) != self.nt or self.nt < 2:
            raise InvalidParameterError("nt must be an integer >= 2")
        object.__setattr__(self, "nt", int(self.nt))
        if self.delay is None:
            object.__setattr__(self, "delay", 1.5 / self.peak_frequency)
        if self.delay < 0:
            raise InvalidParameterError("delay must be >= 0")

    def scaled(self, factor: float) -> "RickerWavelet":
        return RickerWavelet(self.peak_frequency, self.dt, self.nt, self.delay, self.amplitude * factor)

    def times(self) -> np.ndarray:
        return np.arange(self.nt) * self.dt


def ricker(t, peak_frequency):
    a = (np.pi * peak_frequency * t) ** 2
    return (1.0 - 2.0 * a) * np.exp(-a)


def sample_ricker(w: RickerWavelet) -> np.ndarray:
    """Sampled wavelet ``amplitude * (1 - 2 pi^2 f^2 tau^2) exp(-pi^2 f^2 tau^2)``, tau = t - delay."""
    tau = np.arange(w.nt) * w.dt - w.delay
    return w.amplitude * ricker(tau, w.peak_frequency)


def _as_positions(points, ndim):
    arr = np.array(points, dtype=np.float64, ndmin=2)
    if arr.ndim != 2 or arr.shape[1] != ndim:
        raise InvalidGeometryError(f"positions must be an (n, {ndim}) array")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class SurveyGeometry:
    """Sources (one per shot) and a receiver spread shared by all shots.

    Positions are in meters and are snapped to the nearest grid cell when
    sources are injected and receivers sampled.
    """

    sources: np.ndarray
    receivers: np.ndarray
    geometry: GridGeometry

    def __post_init__(self):
        ndim = self.geometry.ndim
        object.__setattr__(self, "sources", _as_positions(self.sources, ndim))
        object.__setattr__(self, "receivers", _as_positions(self.receivers, ndim))
        if len(self.sources) < 1 or len(self.receivers) < 1:
            raise InvalidGeometryError("need at least one source and one receiver")
        for kind, pts in (("source", self.sources), ("receiver", self.receivers)):
            for p in pts:
                if not self.geometry.contains(p):
                    raise InvalidGeometryError(f"{kind} at {tuple(p)} m lies outside the grid")

    @property
    def n_shots(self) -> int:
        return len(self.sources)

    @property
    def n_receivers(self) -> int:
        return len(self.receivers)

    def source_index(self, shot: int) -> Tuple[int, ...]:
        return self.geometry.snap(self.sources[shot])

    def receiver_indices(self) -> Tuple[np.ndarray, ...]:
        """Receiver cells as a tuple of index arrays (fancy-index ready)."""
        idx = np.array([self.geometry.snap(r) for r in self.receivers])
        return tuple(idx.T)

    def check_interior(self, width: int):
        """Raise unless every source and receiver cell lies outside the absorbing margin."""
        dims = self.geometry.dims
        for kind, pts in (("source", self.sources), ("receiver", self.receivers)):
            for p in pts:
                idx = self.geometry.snap(p)
                if any(i < width or i > n - 1 - width for i, n in zip(idx, dims)):
                    raise InvalidGeometryError(
                        f"{kind} at {tuple(p)} m (cell {idx}) lies inside the {width}-cell absorbing margin")

    def __eq__(self, other):
        return (isinstance(other, SurveyGeometry) and self.geometry == other.geometry
                and np.array_equal(self.sources, other.sources)
                and np.array_equal(self.receivers, other.receivers))

    __hash__ = None


def line_positions(start, stop, count) -> np.ndarray:
    """``count`` evenly spaced positions from ``start`` to ``stop`` (both included)."""
    start = np.asarray(start, dtype=float)
    stop = np.asarray(stop, dtype=float)
    if count == 1:
        return ((start + stop) / 2)[None, :]
    frac = np.linspace(0.0, 1.0, count)[:, None]
    return start + frac * (stop - start)


@dataclass(frozen=True, eq=False)
class ShotGather:
    shot_index: int
    traces: np.ndarray  # (nt, n_receivers)
    dt: float

    def __post_init__(self):
        tr = np.array(self.traces, dtype=np.float64)
        if tr.ndim != 2:
            raise ShapeError("traces must be a 2-D (nt, n_receivers) array")
        if not np.all(np.isfinite(tr)):
            raise InvalidParameterError("gather contains non-finite samples")
        tr.flags.writeable = False
        object.__setattr__(self, "traces", tr)

    @property
    def nt(self) -> int:
        return self.traces.shape[0]

    @property
    def n_receivers(self) -> int:
        return self.traces.shape[1]

    def __eq__(self, other):
        return (isinstance(other, ShotGather) and self.shot_index == other.shot_index
                and self.dt == other.dt and np.array_equal(self.traces, other.traces))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Survey:
    geometry: SurveyGeometry
    gathers: Tuple[ShotGather, ...]

    def __post_init__(self):
        gathers = tuple(sorted(self.gathers, key=lambda g: g.shot_index))
        object.__setattr__(self, "gathers", gathers)
        if len(gathers) != self.geometry.n_shots:
            raise ShapeError(f"{len(gathers)} gathers for {self.geometry.n_shots} sources")
        if [g.shot_index for g in gathers] != list(range(len(gathers))):
            raise ShapeError("gathers must carry shot indices 0..n_s-1")
        first = gathers[0]
        for g in gathers:
            if g.traces.shape != first.traces.shape or g.dt != first.dt:
                raise ShapeError("all gathers must share nt, dt and receiver count")
        if first.n_receivers != self.geometry.n_receivers:
            raise ShapeError("gather receiver count does not match the survey geometry")

    @property
    def nt(self) -> int:
        return self.gathers[0].nt

    @property
    def dt(self) -> float:
        return self.gathers[0].dt

    def energy(self) -> float:
        return float(sum(np.sum(g.traces ** 2) for g in self.gathers))

    def scaled(self, factor: float) -> "Survey":
        return Survey(self.geometry, tuple(ShotGather(g.shot_index, g.traces * factor, g.dt) for g in self.gathers))

    def __eq__(self, other):
        return (isinstance(other, Survey) and self.geometry == other.geometry
                and self.gathers == other.gathers)

    __hash__ = None

