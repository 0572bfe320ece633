"""Compare the adjoint-state gradient with central finite differences.

Usage: python scripts/gradient_check.py --directions 5 --step 1.0
"""

import argparse

import numpy as np
from scipy.ndimage import gaussian_filter

from saltfwi import (BlendParams, GridGeometry, PredictorFidelity, PropagatorConfig, RickerWavelet, SaltBody,
                     SaltScenarioSpec, SedimentProfile, SurveyGeometry, VelocityModel, line_positions,
                     make_scenario, pseudo_dl_predict, simulate_survey)
from saltfwi.grid import interior_mask
from saltfwi.inversion import evaluate, scaled_lambda


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--directions", type=int, default=5)
    parser.add_argument("--step", type=float, default=1.0, help="finite-difference step in m/s")
    parser.add_argument("--ratio", type=float, default=0.5, help="prior term / data term at the test model")
    parser.add_argument("--seed", type=int, default=3)
    args = parser.parse_args()

    geom = GridGeometry((40, 40), 10.0)
    profile = SedimentProfile([0.0, 400.0], [1800.0, 2600.0])
    truth, mask, _ = make_scenario(SaltScenarioSpec(geom, profile, [SaltBody((200.0, 250.0), (80.0, 50.0))],
                                                    v_salt=3500.0))
    p = pseudo_dl_predict(mask, PredictorFidelity(1.0, 0.05, 1))
    params = BlendParams(profile, 3500.0)
    w = RickerWavelet(15.0, 1e-3, 600)
    cfg = PropagatorConfig(600, 1e-3, sponge_width=10)
    sg = SurveyGeometry(line_positions([130.0, 110.0], [270.0, 110.0], 2),
                        line_positions([110.0, 110.0], [290.0, 110.0], 16), geom)
    observed = simulate_survey(truth, w, sg, cfg)
    m = VelocityModel(geom, gaussian_filter(truth.values, 3.0))

    data0 = evaluate(m, observed, None, None, 0.0, w, cfg).data_misfit
    lam = scaled_lambda(args.ratio, data0, m, p, params)
    ev = evaluate(m, observed, p, params, lam, w, cfg, with_gradient=True, smooth_radius=0)
    inner = interior_mask(geom, cfg.sponge_width)
    rng = np.random.default_rng(args.seed)
    print(f"lambda={lam:.6g} data={ev.data_misfit:.6g} reg={ev.reg_term:.6g}")
    for i in range(args.directions):
        dm = rng.standard_normal(geom.dims) * inner
        phi = [evaluate(m.with_values(m.values + s * args.step * dm), observed, p, params, lam, w, cfg).phi_prime
               for s in (1.0, -1.0)]
        fd = (phi[0] - phi[1]) / (2 * args.step)
        an = float(np.sum(ev.gradient * dm))
        print(f"direction={i} fd={fd:.10g} adjoint={an:.10g} rel_err={abs(fd - an) / abs(an):.3e}")


if __name__ == "__main__":
    main()
