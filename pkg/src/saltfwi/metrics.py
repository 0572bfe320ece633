"""Model-quality numbers reported by the CLI and the workflow."""
from __future__ import annotations

import numpy as np

from .grid import ProbabilityCube, SaltMask, VelocityModel, binarize


def rmse(model: VelocityModel, truth: VelocityModel, where=None) -> float:
    model.geometry.check_same(truth.geometry)
    diff = model.values - truth.values
    if where is not None:
        diff = diff[np.asarray(where, dtype=bool)]
        if diff.size == 0:
            return float("nan")
    return float(np.sqrt(np.mean(diff * diff)))


def mask_iou(predicted: SaltMask, truth: SaltMask) -> float:
    """Intersection over union of two salt masks (1.0 when both are empty)."""
    predicted.geometry.check_same(truth.geometry)
    a, b = predicted.values, truth.values
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def model_metrics(model: VelocityModel, truth: VelocityModel, mask: SaltMask = None,
                  cube: ProbabilityCube = None, interior=None) -> dict:
    out = {"rmse": rmse(model, truth)}
    if interior is not None:
        out["interior_rmse"] = rmse(model, truth, interior)
    if mask is not None:
        out["salt_rmse"] = rmse(model, truth, mask.values)
        if cube is not None:
            out["mask_iou"] = mask_iou(binarize(cube, 0.5), mask)
    return out
