"""Regularized FWI objective, adjoint-state gradient and the descent loop.

The objective is

    phi'(m) = sum_i ||F_i(m) - d_i||^2 + lam * ||m - R(P)||^2

with ``R(P)`` the blended prior model. The loop is steepest descent with
Armijo backtracking and stops once consecutive objective values differ by at
most ``epsilon``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.ndimage import uniform_filter

from .acquisition import RickerWavelet, Survey
from .errors import InsufficientHistoryError, InvalidParameterError, SaltFWIError
from .grid import DEFAULT_BOUNDS, ProbabilityCube, VelocityModel, edge_distance
from .prior import BlendParams, blend
from .propagation import (PropagatorConfig, prepare, backpropagate, check_survey,
                          map_shots, propagate)

log = logging.getLogger(__name__)

STOP_EPSILON = "epsilon_met"
STOP_MAX_ITERS = "max_iters"
STOP_LINE_SEARCH = "line_search_failed"
STOP_REASONS = (STOP_EPSILON, STOP_MAX_ITERS, STOP_LINE_SEARCH)


@dataclass(frozen=True)
class InversionConfig:
    lam: float = 0.0
    epsilon: float = 1e-6
    max_iters: int = 10
    step0: float = 50.0
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    max_backtracks: int = 20
    grad_smooth_radius: int = 1
    model_bounds: Tuple[float, float] = DEFAULT_BOUNDS
    reproducible_reductions: bool = True
    workers: int = 1

    def __post_init__(self):
        if not self.lam >= 0:
            raise InvalidParameterError("lambda must be >= 0")
        if not self.epsilon > 0:
            raise InvalidParameterError("epsilon must be > 0")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise InvalidParameterError("max_iters must be an integer >= 1")
        if not 0 < self.backtrack_factor < 1:
            raise InvalidParameterError("backtrack_factor must lie in (0, 1)")
        if not 0 < self.armijo_c < 1:
            raise InvalidParameterError("armijo_c must lie in (0, 1)")
        if not self.step0 > 0:
            raise InvalidParameterError("step0 must be > 0")
        if self.max_backtracks < 0 or self.grad_smooth_radius < 0:
            raise InvalidParameterError("max_backtracks and grad_smooth_radius must be >= 0")
        lo, hi = self.model_bounds
        if not 0 < lo < hi:
            raise InvalidParameterError("model_bounds must satisfy 0 < v_lo < v_hi")


@dataclass(frozen=True)
class IterationRecord:
    """One accepted iterate ``m_k``.

    ``grad_norm`` and ``step`` describe the update that produced ``m_k``
    (L2 norm of the search gradient at ``m_{k-1}`` and the accepted step
    length in m/s); both are 0 for the starting model.
    """

    k: int
    phi_prime: float
    data_misfit: float
    reg_term: float
    grad_norm: float
    step: float
    model: VelocityModel = field(repr=False, compare=False)


@dataclass
class IterationHistory:
    records: List[IterationRecord] = field(default_factory=list)
    converged: bool = False
    stop_reason: Optional[str] = None

    @property
    def final_model(self) -> VelocityModel:
        return self.records[-1].model

    def phi_values(self) -> List[float]:
        return [r.phi_prime for r in self.records]

    def __len__(self):
        return len(self.records)


@dataclass
class Evaluation:
    phi_prime: float
    data_misfit: float
    reg_term: float
    gradient: Optional[np.ndarray] = None  # exact gradient of phi_prime
    search: Optional[np.ndarray] = None  # smoothed, margin-masked direction field


def _prior_values(p: Optional[ProbabilityCube], params: Optional[BlendParams], lam: float):
    if p is None or lam == 0:
        return None
    if params is None:
        raise InvalidParameterError("a probability cube needs BlendParams to form the prior")
    return blend(p, params).values


def _data_term(m: VelocityModel, observed: Survey, w: RickerWavelet, cfg: PropagatorConfig,
               with_gradient: bool, workers: int = 1, reproducible: bool = True):
    check_survey(observed, cfg)
    survey_geom = observed.geometry
    kernel, source, rec_idx = prepare(m, w, survey_geom, cfg)

    def one(i):
        store = "laplacian" if with_gradient else None
        traces, hist = propagate(kernel, survey_geom.source_index(i), source, rec_idx, store=store)
        residual = traces - observed.gathers[i].traces
        value = float(np.sum(residual * residual))
        if not with_gradient:
            return value, None
        if not np.any(residual):
            return value, np.zeros(kernel.dims)
        return value, backpropagate(kernel, rec_idx, 2.0 * residual, hist)

    results = map_shots(one, survey_geom.n_shots, workers, ordered=reproducible)
    total = 0.0
    grad = np.zeros(kernel.dims) if with_gradient else None
    for _, (value, g) in results:
        total += value
        if with_gradient:
            grad += g
    if with_gradient:
        # d/dv of C = (v dt / dx)^2
        grad *= 2.0 * m.values * (cfg.dt / m.geometry.spacing) ** 2
    return total, grad


def misfit(m: VelocityModel, observed: Survey, w: RickerWavelet, cfg_prop: PropagatorConfig,
           workers: int = 1) -> float:
    """Sum over shots and samples of squared residuals between modeled and observed data."""
    value, _ = _data_term(m, observed, w, cfg_prop, with_gradient=False, workers=workers)
    return value


def evaluate(m: VelocityModel, observed: Survey, p: Optional[ProbabilityCube], params: Optional[BlendParams],
             lam: float, w: RickerWavelet, cfg_prop: PropagatorConfig, with_gradient: bool = False,
             smooth_radius: int = 1, workers: int = 1, reproducible: bool = True) -> Evaluation:
    prior = _prior_values(p, params, lam)
    data, data_grad = _data_term(m, observed, w, cfg_prop, with_gradient, workers, reproducible)
    if prior is None:
        reg, reg_grad = 0.0, None
    else:
        diff = m.values - prior
        reg = lam * float(np.sum(diff * diff))
        reg_grad = 2.0 * lam * diff
    ev = Evaluation(data + reg, data, reg)
    if with_gradient:
        search = data_grad
        if smooth_radius > 0:
            search = uniform_filter(search, size=2 * smooth_radius + 1, mode="constant")
        search = np.where(edge_distance(m.geometry.dims) < cfg_prop.sponge_width, 0.0, search)
        ev.gradient = data_grad if reg_grad is None else data_grad + reg_grad
        ev.search = search if reg_grad is None else search + reg_grad
    return ev


def objective(m, observed, p, params, lam, w, cfg_prop, workers: int = 1):
    """Return ``(phi_prime, data_term, reg_term)``."""
    ev = evaluate(m, observed, p, params, lam, w, cfg_prop, workers=workers)
    return ev.phi_prime, ev.data_misfit, ev.reg_term


def gradient(m, observed, p, params, lam, w, cfg_prop, smooth_radius: int = 1, workers: int = 1) -> np.ndarray:
    """Search gradient of the regularized objective with respect to velocity.

    The data part is the adjoint-state gradient, box-smoothed with radius
    ``smooth_radius`` and zeroed inside the absorbing margin; the prior part
    ``2 lam (m - R(P))`` is added unmodified. With ``smooth_radius=0`` the
    result equals the exact gradient at every interior cell.
    """
    ev = evaluate(m, observed, p, params, lam, w, cfg_prop, with_gradient=True,
                  smooth_radius=smooth_radius, workers=workers)
    return ev.search


def has_converged(history, epsilon: float) -> bool:
    """``|phi'_last - phi'_previous| <= epsilon``."""
    records = history.records
    if len(records) < 2:
        raise InsufficientHistoryError("convergence test needs at least two recorded iterates")
    return abs(records[-1].phi_prime - records[-2].phi_prime) <= epsilon


def _line_search(evaluate_at, m_values, phi, direction, slope, alpha, config, bounds):
    lo, hi = bounds
    for _ in range(config.max_backtracks + 1):
        trial = np.clip(m_values + alpha * direction, lo, hi)
        ev = evaluate_at(trial)
        if ev.phi_prime <= phi + config.armijo_c * alpha * slope:
            return alpha, trial, ev
        # safeguarded quadratic interpolation of phi along the direction
        curvature = 2.0 * (ev.phi_prime - phi - slope * alpha)
        candidate = -slope * alpha * alpha / curvature if curvature > 0 else config.backtrack_factor * alpha
        alpha = min(max(candidate, 0.1 * alpha), config.backtrack_factor * alpha)
    return None, None, None


def invert(config: InversionConfig, start: VelocityModel, observed: Survey, p: Optional[ProbabilityCube],
           params: Optional[BlendParams], w: RickerWavelet, cfg_prop: PropagatorConfig,
           callback=None) -> IterationHistory:
    """Minimize the regularized objective from ``start``.

    Without a probability cube the prior term is dropped (same as ``lam=0``).
    On a propagation error the exception is re-raised with the partial
    history attached as ``exc.history``.
    """
    lo, hi = config.model_bounds
    geom = start.geometry
    cfg_prop.check_dimension(geom.ndim)
    cfg_prop.check_cfl(hi, geom.spacing)
    m = VelocityModel(geom, start.values, config.model_bounds)
    lam = config.lam if p is not None else 0.0
    history = IterationHistory()

    def evaluate_at(values, with_gradient=False):
        model = VelocityModel(geom, values, config.model_bounds)
        return evaluate(model, observed, p, params, lam, w, cfg_prop, with_gradient=with_gradient,
                        smooth_radius=config.grad_smooth_radius, workers=config.workers,
                        reproducible=config.reproducible_reductions)

    def record(model, ev, grad_norm, step):
        rec = IterationRecord(len(history.records), ev.phi_prime, ev.data_misfit, ev.reg_term,
                              float(grad_norm), float(step), model)
        history.records.append(rec)
        log.info("iter %d phi'=%.6g data=%.6g reg=%.6g step=%.4g", rec.k, rec.phi_prime,
                 rec.data_misfit, rec.reg_term, rec.step)
        if callback is not None:
            callback(rec)

    try:
        ev = evaluate_at(m.values, with_gradient=True)
        record(m, ev, 0.0, 0.0)
        alpha_prev = 0.0
        for _ in range(config.max_iters):
            search, grad = ev.search, ev.gradient
            grad_norm = float(np.linalg.norm(search))
            scale = float(np.max(np.abs(search)))
            if scale == 0.0:
                # stationary point: the model does not move
                new_ev, new_values, step = ev, m.values, 0.0
            else:
                direction = -search / scale
                slope = float(np.sum(grad * direction))
                if slope >= 0:
                    # smoothing destroyed descent; fall back to the raw gradient
                    scale = float(np.max(np.abs(grad)))
                    direction = -grad / scale
                    slope = float(np.sum(grad * direction))
                alpha0 = min(max(config.step0, 2.0 * alpha_prev), hi - lo)
                step, new_values, new_ev = _line_search(
                    lambda v: evaluate_at(v), m.values, ev.phi_prime, direction, slope, alpha0, config,
                    config.model_bounds)
                if step is None:
                    history.stop_reason = STOP_LINE_SEARCH
                    break
            m = VelocityModel(geom, new_values, config.model_bounds)
            previous = ev.phi_prime
            record(m, new_ev, grad_norm, step)
            alpha_prev = step
            if abs(new_ev.phi_prime - previous) <= config.epsilon:
                history.converged = True
                history.stop_reason = STOP_EPSILON
                break
            if len(history.records) - 1 < config.max_iters:
                ev = evaluate_at(m.values, with_gradient=True)
        else:
            history.stop_reason = STOP_MAX_ITERS
    except SaltFWIError as exc:
        exc.history = history
        raise
    return history


def scaled_lambda(ratio: float, data_term: float, m: VelocityModel, p: ProbabilityCube,
                  params: BlendParams) -> float:
    """Weight making the prior term equal ``ratio`` times ``data_term`` at model ``m``."""
    diff = m.values - blend(p, params).values
    energy = float(np.sum(diff * diff))
    if energy == 0:
        raise InvalidParameterError("model equals the prior; cannot scale lambda from it")
    return ratio * data_term / energy
