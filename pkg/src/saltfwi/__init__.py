"""Probability-guided full-waveform inversion on synthetic salt models."""

from .acquisition import RickerWavelet, ShotGather, Survey, SurveyGeometry, line_positions, sample_ricker
from .grid import (GridGeometry, ProbabilityCube, SaltMask, SedimentProfile, VelocityModel, binarization_gap,
                   binarize, profile_to_model)
from .inversion import (InversionConfig, IterationHistory, gradient, has_converged, invert, misfit,
                        objective)
from .prior import BlendParams, blend, ensemble_mean, init_model
from .propagation import MigrationImage, PropagatorConfig, forward_model, rtm_migrate, simulate_survey
from .synthgen import PredictorFidelity, SaltBody, SaltScenarioSpec, make_scenario, pseudo_dl_predict
from .workflow import WorkflowReport, run_workflow

__version__ = "0.1.0"
