"""Outer loop: blended start, regularized inversion, migration, cube refresh.

Each outer iteration ``k`` inverts toward the prior built from the current
probability cube, migrates with the updated model and writes the image as
``migration_iter_<k>.grid`` for an external predictor. At the start of outer
iteration ``k >= 1`` a file ``prob_iter_<k>.grid`` in the refresh directory,
if present, replaces the current cube; otherwise the cube is reused.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

from .errors import ConfigurationError, IngestionError, SaltFWIError
from .grid import ProbabilityCube, SaltMask, VelocityModel, binarization_gap, interior_mask
from .inversion import InversionConfig, IterationHistory, has_converged, invert
from .io import ensure_dir, history_report, read_grid, write_grid
from .metrics import rmse
from .prior import BlendParams, init_model
from .propagation import MigrationImage, rtm_migrate

log = logging.getLogger(__name__)


def refresh_name(k: int) -> str:
    return f"prob_iter_{k}.grid"


@dataclass(frozen=True)
class OuterRecord:
    k: int
    phi_prime: float
    data_misfit: float
    reg_term: float
    inner_iters: int
    stop_reason: str
    binarization_gap: float
    prob_source: str
    rmse: Optional[float] = None
    interior_rmse: Optional[float] = None
    salt_rmse: Optional[float] = None


@dataclass
class WorkflowReport:
    records: List[OuterRecord] = field(default_factory=list)
    histories: List[IterationHistory] = field(default_factory=list)
    images: List[MigrationImage] = field(default_factory=list)
    start_model: Optional[VelocityModel] = None
    final_model: Optional[VelocityModel] = None
    converged: bool = False

    def phi_values(self):
        return [r.phi_prime for r in self.records]


def _load_refresh(path: Path, geometry) -> ProbabilityCube:
    try:
        cube = read_grid(path)
    except (SaltFWIError, OSError) as exc:
        raise IngestionError(f"{path}: cannot ingest probability cube ({exc})") from exc
    if not isinstance(cube, ProbabilityCube):
        raise IngestionError(f"{path}: holds a {type(cube).__name__}, expected a probability cube")
    if cube.geometry.dims != geometry.dims or cube.geometry.spacing != geometry.spacing:
        raise IngestionError(f"{path}: grid {cube.geometry.dims} does not match the model grid {geometry.dims}")
    return ProbabilityCube(geometry, cube.values)


def run_workflow(observed, p0: ProbabilityCube, params: BlendParams, w, cfg_prop, config: InversionConfig,
                 outer_iters: int = 1, refresh_source=None, out_dir=None, truth: VelocityModel = None,
                 truth_mask: SaltMask = None, outer_epsilon: float = None, callback=None) -> WorkflowReport:
    """Run the probability-guided inversion loop.

    Stops when two consecutive outer iterations end within ``outer_epsilon``
    (default ``config.epsilon``) of each other, or after ``outer_iters``.
    """
    if p0 is None:
        raise ConfigurationError("workflow needs an initial probability cube")
    if outer_iters < 1:
        raise ConfigurationError("outer_iters must be >= 1")
    outer_epsilon = config.epsilon if outer_epsilon is None else outer_epsilon
    out_dir = ensure_dir(out_dir) if out_dir is not None else None
    refresh_source = Path(refresh_source) if refresh_source is not None else None
    geometry = p0.geometry
    interior = interior_mask(geometry, cfg_prop.sponge_width)

    report = WorkflowReport()
    model = init_model(p0, params)
    report.start_model = model
    cube, source = p0, "p0"
    for k in range(outer_iters):
        if k > 0 and refresh_source is not None:
            candidate = refresh_source / refresh_name(k)
            if candidate.exists():
                cube, source = _load_refresh(candidate, geometry), str(candidate)
                log.info("outer %d: refreshed probability cube from %s", k, candidate)
        history = invert(config, model, observed, cube, params, w, cfg_prop)
        model = history.final_model
        image = rtm_migrate(model, observed, w, cfg_prop, reproducible=config.reproducible_reductions)
        last = history.records[-1]
        rec = OuterRecord(
            k=k, phi_prime=last.phi_prime, data_misfit=last.data_misfit, reg_term=last.reg_term,
            inner_iters=len(history.records) - 1, stop_reason=history.stop_reason,
            binarization_gap=binarization_gap(cube), prob_source=source,
            rmse=rmse(model, truth) if truth is not None else None,
            interior_rmse=rmse(model, truth, interior) if truth is not None else None,
            salt_rmse=rmse(model, truth, truth_mask.values) if truth is not None and truth_mask is not None else None,
        )
        report.records.append(rec)
        report.histories.append(history)
        report.images.append(image)
        if out_dir is not None:
            write_grid(out_dir / f"migration_iter_{k}.grid", image)
            write_grid(out_dir / f"model_outer_{k}.grid", model)
            history_report(history, out_dir / f"history_outer_{k}.csv")
        if callback is not None:
            callback(rec)
        if len(report.records) >= 2 and has_converged(report, outer_epsilon):
            report.converged = True
            break
    report.final_model = model
    return report
