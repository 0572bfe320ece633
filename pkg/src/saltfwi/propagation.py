"""Constant-density acoustic modeling, its discrete adjoint, and zero-lag RTM.

The scheme is second order in time and fourth order in space on the model
grid itself; the outer ``sponge_width`` cells of every face form the
absorbing margin. One time step maps the state ``(prev, cur)`` to::

    cur' = G * (2 cur - prev + C * D(cur) + s_n)
    prev' = G * cur

with ``C = (v dt / dx)^2``, ``D`` the unit-spacing 4th-order Laplacian
(zero outside the grid), ``G`` the sponge damping and ``s_n`` the wavelet
sample added at the source cell. Receivers record ``cur'`` after each step.
The backward pass in :func:`backpropagate` is the exact transpose of this
recurrence, so data gradients agree with finite differences of the
discrete misfit up to the storage precision of the forward history
(``history_dtype``, float32 by default: cells x nt x 4 bytes per shot).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import laplace

from .acquisition import RickerWavelet, ShotGather, Survey, SurveyGeometry, sample_ricker
from .errors import (InvalidParameterError, NumericalBlowupError, ShapeError, ShotError,
                     StabilityError)
from .grid import GridGeometry, VelocityModel, edge_distance

HALO = 2
_C1 = 4.0 / 3.0
_C2 = -1.0 / 12.0
_C0 = -5.0 / 2.0
_CHECK_EVERY = 32


def stencil_cfl_limit(ndim: int) -> float:
    """Largest stable ``v dt / dx`` for the leapfrog + 4th-order Laplacian scheme."""
    return math.sqrt(3.0 / (4.0 * ndim))


@dataclass(frozen=True)
class PropagatorConfig:
    nt: int
    dt: float
    sponge_width: int = 20
    sponge_strength: float = 0.2
    cfl_factor: float = 0.45
    max_history_bytes: int = 2 ** 31
    history_dtype: str = "float32"

    def __post_init__(self):
        if int(self.nt) != self.nt or self.nt < 2:
            raise InvalidParameterError("nt must be an integer >= 2")
        if not self.dt > 0:
            raise InvalidParameterError("dt must be > 0")
        if self.sponge_width < 8:
            raise InvalidParameterError("sponge_width must be >= 8")
        if not self.sponge_strength > 0:
            raise InvalidParameterError("sponge_strength must be > 0")
        if not 0 < self.cfl_factor < 1 / math.sqrt(2):
            raise InvalidParameterError("cfl_factor must lie in (0, 1/sqrt(ndim))")
        if self.history_dtype not in ("float32", "float64"):
            raise InvalidParameterError("history_dtype must be 'float32' or 'float64'")

    def check_dimension(self, ndim: int):
        limit = min(1 / math.sqrt(ndim), stencil_cfl_limit(ndim))
        if not self.cfl_factor < limit:
            raise InvalidParameterError(
                f"cfl_factor {self.cfl_factor} must be < {limit:.4f} for a {ndim}-D grid")

    def check_cfl(self, v_max: float, spacing: float):
        dt_max = self.cfl_factor * spacing / v_max
        if self.dt > dt_max:
            raise StabilityError(
                f"CFL violated: v_max={v_max:.6g} m/s needs dt <= {dt_max:.6g} s, got dt={self.dt:.6g} s")

    def check_wavelet(self, w: RickerWavelet):
        if w.nt != self.nt or w.dt != self.dt:
            raise ShapeError(f"wavelet (nt={w.nt}, dt={w.dt}) does not match propagator (nt={self.nt}, dt={self.dt})")


@dataclass(frozen=True, eq=False)
class MigrationImage:
    geometry: GridGeometry
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.shape != self.geometry.dims:
            raise ShapeError("image shape does not match geometry")
        if not np.all(np.isfinite(v)):
            raise NumericalBlowupError("migration image contains non-finite values")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __eq__(self, other):
        return (isinstance(other, MigrationImage) and self.geometry == other.geometry
                and np.array_equal(self.values, other.values))

    __hash__ = None


def sponge_profile(dims, width: int, strength: float) -> np.ndarray:
    """Per-step damping factor: ``exp(-(strength (1 - d/width))^2)`` inside the margin, 1 elsewhere."""
    d = edge_distance(dims).astype(np.float64)
    g = np.exp(-(strength * (1.0 - d / width)) ** 2)
    return np.where(d < width, g, 1.0)


class Kernel:
    """Precomputed coefficients and stencil slices for one model and config."""

    def __init__(self, model: VelocityModel, cfg: PropagatorConfig):
        geom = model.geometry
        cfg.check_dimension(geom.ndim)
        cfg.check_cfl(float(model.values.max()), geom.spacing)
        self.geometry = geom
        self.cfg = cfg
        self.dims = geom.dims
        self.ndim = geom.ndim
        self.velocity = model.values
        self.courant2 = (model.values * cfg.dt / geom.spacing) ** 2
        self.damping = sponge_profile(self.dims, cfg.sponge_width, cfg.sponge_strength)
        self.core = tuple(slice(HALO, HALO + n) for n in self.dims)
        self.shifts = []
        for axis, n in enumerate(self.dims):
            def shifted(off, axis=axis, n=n):
                sl = list(self.core)
                sl[axis] = slice(HALO + off, HALO + off + n)
                return tuple(sl)
            self.shifts.append((shifted(-1), shifted(1), shifted(-2), shifted(2)))

    def padded(self) -> np.ndarray:
        return np.zeros(tuple(n + 2 * HALO for n in self.dims))

    def laplacian(self, padded: np.ndarray, out: np.ndarray, scratch: np.ndarray) -> np.ndarray:
        np.multiply(padded[self.core], _C0 * self.ndim, out=out)
        for m1, p1, m2, p2 in self.shifts:
            np.add(padded[m1], padded[p1], out=scratch)
            scratch *= _C1
            out += scratch
            np.add(padded[m2], padded[p2], out=scratch)
            scratch *= _C2
            out += scratch
        return out

    def history_bytes(self, nt: int) -> int:
        return int(np.prod(self.dims)) * nt * np.dtype(self.cfg.history_dtype).itemsize

    def allocate_history(self, nt: int) -> np.ndarray:
        need = self.history_bytes(nt)
        if need > self.cfg.max_history_bytes:
            width = np.dtype(self.cfg.history_dtype).itemsize
            raise InvalidParameterError(f"wavefield history needs {need} bytes (cells x nt x {width}), "
                                        f"cap is {self.cfg.max_history_bytes}")
        return np.empty((nt,) + self.dims, dtype=self.cfg.history_dtype)


def _check_finite(field, step, label):
    if not np.all(np.isfinite(field)):
        raise NumericalBlowupError(f"non-finite {label} wavefield at time step {step}")


def propagate(kernel: Kernel, src_idx, source: np.ndarray, rec_idx, store: str = None):
    """Run the forward recurrence and sample receivers after every step.

    ``store`` selects what is kept per step for a later backward pass:
    ``"laplacian"`` keeps ``D(cur^n)`` (needed by the velocity gradient),
    ``"field"`` keeps ``cur^{n+1}`` (the source wavefield used by RTM).
    Returns ``(traces, history)``.
    """
    nt = len(source)
    cur_pad = kernel.padded()
    cur = cur_pad[kernel.core]
    prev = np.zeros(kernel.dims)
    nxt = np.empty(kernel.dims)
    lap = np.empty(kernel.dims)
    scratch = np.empty(kernel.dims)
    C, G = kernel.courant2, kernel.damping
    history = kernel.allocate_history(nt) if store else None
    traces = np.empty((nt, len(rec_idx[0])))

    for n in range(nt):
        kernel.laplacian(cur_pad, lap, scratch)
        if store == "laplacian":
            history[n] = lap
        np.multiply(C, lap, out=nxt)
        nxt += cur
        nxt += cur
        nxt -= prev
        nxt[src_idx] += source[n]
        nxt *= G
        np.multiply(cur, G, out=prev)
        cur[...] = nxt
        traces[n] = cur[rec_idx]
        if store == "field":
            history[n] = cur
        if n % _CHECK_EVERY == 0 or n == nt - 1:
            _check_finite(cur, n, "forward")
    return traces, history


def backpropagate(kernel: Kernel, rec_idx, adjoint_source: np.ndarray, history: np.ndarray) -> np.ndarray:
    """Transpose of :func:`propagate`, correlated against the stored history.

    Runs the adjoint recurrence driven by ``adjoint_source`` (nt, n_receivers)
    injected at the receiver cells and returns
    ``sum_n (G mu_b^{n+1}) * history[n]``.
    """
    nt = adjoint_source.shape[0]
    C, G = kernel.courant2, kernel.damping
    work_pad = kernel.padded()
    work = work_pad[kernel.core]
    mu_a = np.zeros(kernel.dims)
    mu_b = np.zeros(kernel.dims)
    gmb = np.empty(kernel.dims)
    lap = np.empty(kernel.dims)
    scratch = np.empty(kernel.dims)
    acc = np.zeros(kernel.dims)

    np.add.at(mu_b, rec_idx, adjoint_source[nt - 1])
    for n in range(nt - 1, -1, -1):
        np.multiply(G, mu_b, out=gmb)
        acc += gmb * history[n]
        if n == 0:
            break
        np.multiply(C, gmb, out=work)
        kernel.laplacian(work_pad, lap, scratch)
        np.multiply(G, mu_a, out=mu_b)
        mu_b += gmb
        mu_b += gmb
        mu_b += lap
        np.negative(gmb, out=mu_a)
        np.add.at(mu_b, rec_idx, adjoint_source[n - 1])
        if n % _CHECK_EVERY == 0:
            _check_finite(mu_b, n, "adjoint")
    _check_finite(acc, 0, "adjoint")
    return acc


def prepare(m: VelocityModel, w: RickerWavelet, survey_geom: SurveyGeometry, cfg: PropagatorConfig):
    if survey_geom.geometry != m.geometry:
        raise ShapeError("survey geometry and model geometry differ")
    cfg.check_wavelet(w)
    survey_geom.check_interior(cfg.sponge_width)
    return Kernel(m, cfg), sample_ricker(w), survey_geom.receiver_indices()


def forward_model(m: VelocityModel, w: RickerWavelet, survey_geom: SurveyGeometry, shot_index: int,
                  cfg: PropagatorConfig) -> ShotGather:
    """Pressure at every receiver cell for one shot (deterministic, bit-reproducible)."""
    if not 0 <= shot_index < survey_geom.n_shots:
        raise InvalidParameterError(f"shot_index {shot_index} outside 0..{survey_geom.n_shots - 1}")
    kernel, source, rec_idx = prepare(m, w, survey_geom, cfg)
    traces, _ = propagate(kernel, survey_geom.source_index(shot_index), source, rec_idx)
    return ShotGather(shot_index, traces, cfg.dt)


def map_shots(func, n_shots: int, workers: int = 1, ordered: bool = True):
    """Evaluate ``func(shot)`` for every shot.

    Results come back in shot order when ``ordered`` is set, otherwise in
    completion order. Per-shot failures are re-raised tagged with the shot.
    """
    def tagged(i):
        try:
            return i, func(i)
        except ShotError:
            raise
        except Exception as exc:
            raise ShotError(i, exc) from exc

    if workers <= 1 or n_shots == 1:
        return [tagged(i) for i in range(n_shots)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(tagged, i) for i in range(n_shots)]
        if ordered:
            return [f.result() for f in futures]
        return [f.result() for f in as_completed(futures)]


def simulate_survey(m: VelocityModel, w: RickerWavelet, survey_geom: SurveyGeometry,
                    cfg: PropagatorConfig, workers: int = 1) -> Survey:
    kernel, source, rec_idx = prepare(m, w, survey_geom, cfg)

    def one(i):
        traces, _ = propagate(kernel, survey_geom.source_index(i), source, rec_idx)
        return ShotGather(i, traces, cfg.dt)

    gathers = [g for _, g in map_shots(one, survey_geom.n_shots, workers)]
    return Survey(survey_geom, tuple(gathers))


def check_survey(observed: Survey, cfg: PropagatorConfig):
    if observed.nt != cfg.nt or observed.dt != cfg.dt:
        raise ShapeError(f"survey (nt={observed.nt}, dt={observed.dt}) does not match propagator "
                         f"(nt={cfg.nt}, dt={cfg.dt})")


def direct_wave_mute(m: VelocityModel, survey_geom: SurveyGeometry, shot: int, w: RickerWavelet) -> np.ndarray:
    """Boolean (nt, n_receivers) mask, True where the direct arrival still dominates.

    The direct arrival is predicted along a straight ray at the velocity of
    the source cell; the window runs until one wavelet period past its peak.
    """
    src = survey_geom.sources[shot]
    v_src = m.values[survey_geom.source_index(shot)]
    offsets = np.linalg.norm(survey_geom.receivers - src, axis=1)
    t_end = offsets / v_src + w.delay + 1.0 / w.peak_frequency
    t = np.arange(w.nt) * w.dt
    return t[:, None] < t_end[None, :]


def rtm_migrate(m: VelocityModel, observed: Survey, w: RickerWavelet, cfg: PropagatorConfig,
                normalize: bool = True, mute_direct: bool = True, laplacian_filter: bool = True,
                workers: int = 1, reproducible: bool = True) -> MigrationImage:
    """Zero-lag cross-correlation image summed over time and shots.

    The receiver wavefield is the adjoint field driven by the observed traces
    (direct arrivals muted by default). With ``laplacian_filter`` the summed
    correlation is passed through ``-laplace`` to strip the low-wavenumber
    backscatter that a sharp migration model produces above reflectors. The
    image is zeroed inside the absorbing margin and, when ``normalize`` is
    set, divided by its largest absolute value unless it is identically zero.
    """
    check_survey(observed, cfg)
    survey_geom = observed.geometry
    kernel, source, rec_idx = prepare(m, w, survey_geom, cfg)

    def one(i):
        data = np.array(observed.gathers[i].traces)
        if mute_direct:
            data[direct_wave_mute(m, survey_geom, i, w)] = 0.0
        if not np.any(data):
            return np.zeros(kernel.dims)
        _, field = propagate(kernel, survey_geom.source_index(i), source, rec_idx, store="field")
        return backpropagate(kernel, rec_idx, data, field)

    image = np.zeros(kernel.dims)
    for _, part in map_shots(one, survey_geom.n_shots, workers, ordered=reproducible):
        image += part
    if laplacian_filter:
        image = -laplace(image, mode="constant")
    image[edge_distance(kernel.dims) < cfg.sponge_width] = 0.0
    if normalize:
        peak = np.max(np.abs(image))
        if peak > 0:
            image = image / peak
    return MigrationImage(m.geometry, image)
