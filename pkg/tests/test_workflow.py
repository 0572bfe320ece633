import numpy as np
import pytest

from saltfwi import io
from saltfwi.errors import ConfigurationError, IngestionError
from saltfwi.grid import GridGeometry, ProbabilityCube, binarization_gap, interior_mask, profile_to_model
from saltfwi.inversion import InversionConfig, has_converged, invert
from saltfwi.metrics import rmse
from saltfwi.prior import blend, init_model
from saltfwi.propagation import rtm_migrate, simulate_survey
from saltfwi.synthgen import PredictorFidelity, SaltBody, SaltScenarioSpec, make_scenario, pseudo_dl_predict
from saltfwi.workflow import refresh_name, run_workflow

CONFIG = InversionConfig(lam=0.0, epsilon=1e-9, max_iters=2, model_bounds=(1000.0, 4000.0))


@pytest.fixture(scope="module")
def wf(small_setup):
    s = small_setup
    spec = SaltScenarioSpec(s["geom"], s["profile"], [SaltBody((150.0, 190.0), (60.0, 40.0))], v_salt=3500.0)
    truth, mask, _ = make_scenario(spec)
    observed = simulate_survey(truth, s["w"], s["sg"], s["cfg"])
    p0 = pseudo_dl_predict(mask, PredictorFidelity(2.0, 0.05, 8))
    return dict(s, truth=truth, mask=mask, observed=observed, p0=p0)


def workflow(wf, config=CONFIG, **kw):
    return run_workflow(wf["observed"], kw.pop("p0", wf["p0"]), wf["params"], wf["w"], wf["cfg"], config, **kw)


def test_single_outer_iteration_degenerates(wf):
    config = InversionConfig(lam=1e-6, epsilon=1e-9, max_iters=2, model_bounds=(1000.0, 4000.0))
    report = workflow(wf, config)
    m0 = init_model(wf["p0"], wf["params"])
    h = invert(config, m0, wf["observed"], wf["p0"], wf["params"], wf["w"], wf["cfg"])
    assert report.phi_values() == [h.records[-1].phi_prime]
    assert report.histories[0].phi_values() == h.phi_values()
    assert report.final_model == h.final_model
    assert report.images[0] == rtm_migrate(h.final_model, wf["observed"], wf["w"], wf["cfg"])
    assert report.start_model == m0


def test_missing_p0(wf):
    with pytest.raises(ConfigurationError):
        workflow(wf, p0=None)


def test_outer_iters_validated(wf):
    with pytest.raises(ConfigurationError):
        workflow(wf, outer_iters=0)


def test_refresh_sequence_sharpens(wf, tmp_path):
    truth_p = wf["mask"].to_probability().values
    rng = np.random.default_rng(0)
    noise = rng.random(truth_p.shape)
    # cubes drift linearly from heavy uncertainty to the exact mask
    for k, weight in ((1, 0.3), (2, 0.1), (3, 0.0)):
        cube = ProbabilityCube(wf["geom"], (1 - weight) * truth_p + weight * noise)
        io.write_grid(tmp_path / refresh_name(k), cube)
    p0 = ProbabilityCube(wf["geom"], 0.5 * truth_p + 0.5 * noise)
    config = InversionConfig(lam=1e-7, epsilon=1e-9, max_iters=1, model_bounds=(1000.0, 4000.0))
    report = workflow(wf, config, p0=p0, outer_iters=4, refresh_source=tmp_path, out_dir=tmp_path / "out",
                      truth=wf["truth"], truth_mask=wf["mask"])
    gaps = [r.binarization_gap for r in report.records]
    assert len(gaps) == 4 and gaps[-1] == 0.0
    assert all(b <= a for a, b in zip(gaps, gaps[1:]))
    assert [r.prob_source.endswith(refresh_name(k)) for k, r in enumerate(report.records)] == [False, True, True, True]
    assert all(r.rmse is not None and r.salt_rmse is not None for r in report.records)
    for k in range(4):
        img = io.read_grid(tmp_path / "out" / f"migration_iter_{k}.grid")
        assert img.geometry.dims == wf["geom"].dims
        assert (tmp_path / "out" / f"history_outer_{k}.csv").exists()


def test_missing_refresh_reuses_cube(wf, tmp_path):
    report = workflow(wf, outer_iters=2, refresh_source=tmp_path)
    assert [r.prob_source for r in report.records] == ["p0", "p0"]


@pytest.mark.parametrize("payload", ["garbage", "wrong-kind", "wrong-dims"])
def test_malformed_refresh_names_file(wf, tmp_path, payload):
    path = tmp_path / refresh_name(1)
    if payload == "garbage":
        path.write_bytes(b"not a grid")
    elif payload == "wrong-kind":
        io.write_grid(path, wf["truth"])
    else:
        io.write_grid(path, ProbabilityCube(GridGeometry((10, 10), 10.0), np.zeros((10, 10))))
    with pytest.raises(IngestionError, match=refresh_name(1)):
        workflow(wf, outer_iters=2, refresh_source=tmp_path)


def test_outer_convergence(wf):
    report = workflow(wf, outer_iters=5, outer_epsilon=1e12)
    assert report.converged and len(report.records) == 2
    assert has_converged(report, 1e12)


def test_perfect_prior_beats_baseline(wf):
    geom = wf["geom"]
    inner = interior_mask(geom, wf["cfg"].sponge_width)
    perfect = wf["mask"].to_probability()
    start = profile_to_model(wf["profile"], geom)
    baseline = invert(CONFIG, start, wf["observed"], None, None, wf["w"], wf["cfg"])
    data0 = baseline.records[0].data_misfit
    diff = start.values - blend(perfect, wf["params"]).values
    config = InversionConfig(lam=0.5 * data0 / float(np.sum(diff ** 2)), epsilon=1e-9, max_iters=2,
                             model_bounds=(1000.0, 4000.0))
    report = workflow(wf, config, p0=perfect)
    assert rmse(report.final_model, wf["truth"], inner) < rmse(baseline.final_model, wf["truth"], inner)
