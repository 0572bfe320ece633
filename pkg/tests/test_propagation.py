import numpy as np
import pytest

from saltfwi.acquisition import RickerWavelet, SurveyGeometry, line_positions, sample_ricker
from saltfwi.errors import (InvalidGeometryError, InvalidParameterError, NumericalBlowupError, ShapeError,
                            ShotError, StabilityError)
from saltfwi.grid import GridGeometry, VelocityModel
from saltfwi.propagation import (Kernel, PropagatorConfig, backpropagate, forward_model, map_shots,
                                 propagate, rtm_migrate, simulate_survey, sponge_profile)

from conftest import layered


def first_break(x, frac=0.01):
    """Index of the first sample whose magnitude exceeds ``frac`` of the trace peak."""
    x = np.abs(x)
    return int(np.argmax(x > frac * x.max()))


@pytest.fixture(scope="module")
def homogeneous():
    geom = GridGeometry((120, 80), 10.0)
    m = VelocityModel(geom, np.full(geom.dims, 2000.0))
    nt, dt = 700, 1e-3
    w = RickerWavelet(15.0, dt, nt)
    cfg = PropagatorConfig(nt, dt, sponge_width=20)
    sg = SurveyGeometry([[400.0, 400.0]], [[800.0, 400.0]], geom)
    return m, w, sg, cfg


def test_zero_wavelet_gives_zero_gather(small_setup):
    s = small_setup
    m = layered(s["geom"])
    g = forward_model(m, s["w"].scaled(0.0), s["sg"], 0, s["cfg"])
    assert not np.any(g.traces)


def test_first_break_traveltime(homogeneous):
    # onset of the recorded pulse is delayed by distance / velocity relative
    # to the onset of the injected wavelet (both picked at 1% of peak)
    m, w, sg, cfg = homogeneous
    tr = forward_model(m, w, sg, 0, cfg).traces[:, 0]
    delay = (first_break(tr) - first_break(sample_ricker(w))) * w.dt
    assert abs(delay - 400.0 / 2000.0) <= 3 * w.dt


@pytest.mark.parametrize("alpha", [-1.0, 2.0, 3.0, 10.0])
def test_source_linearity(small_setup, alpha):
    s = small_setup
    m = layered(s["geom"])
    base = forward_model(m, s["w"], s["sg"], 1, s["cfg"]).traces
    scaled = forward_model(m, s["w"].scaled(alpha), s["sg"], 1, s["cfg"]).traces
    assert np.max(np.abs(scaled - alpha * base)) <= 1e-10 * np.max(np.abs(alpha * base))


def test_sponge_late_energy(homogeneous):
    m, w, sg, cfg = homogeneous
    tr = forward_model(m, w, sg, 0, cfg).traces[:, 0]
    t = w.times()
    window = 400.0 / 2000.0 + w.delay + 1.0 / w.peak_frequency
    direct = np.sum(tr[t <= window] ** 2)
    late = np.sum(tr[t > 1.5 * window] ** 2)
    assert late <= 0.05 * direct


def test_sponge_profile_shape():
    g = sponge_profile((30, 30), 8, 0.2)
    assert g[15, 15] == 1.0 and g[8, 15] == 1.0
    assert g[0, 15] == pytest.approx(np.exp(-0.04))
    assert np.all(np.diff(g[:9, 15]) > 0)


def test_determinism_and_batch_equivalence(small_setup):
    s = small_setup
    m = layered(s["geom"])
    a = simulate_survey(m, s["w"], s["sg"], s["cfg"])
    b = simulate_survey(m, s["w"], s["sg"], s["cfg"], workers=2)
    assert a == b
    for i in range(s["sg"].n_shots):
        assert np.array_equal(a.gathers[i].traces, forward_model(m, s["w"], s["sg"], i, s["cfg"]).traces)


def test_single_shot_survey(small_setup):
    s = small_setup
    m = layered(s["geom"])
    sg = SurveyGeometry(s["sg"].sources[:1], s["sg"].receivers, s["geom"])
    survey = simulate_survey(m, s["w"], sg, s["cfg"])
    assert len(survey.gathers) == 1
    assert survey.gathers[0] == forward_model(m, s["w"], sg, 0, s["cfg"])


def test_shot_permutation(small_setup):
    s = small_setup
    m = layered(s["geom"])
    src = s["sg"].sources
    swapped = SurveyGeometry(src[::-1], s["sg"].receivers, s["geom"])
    a = simulate_survey(m, s["w"], s["sg"], s["cfg"])
    b = simulate_survey(m, s["w"], swapped, s["cfg"])
    assert np.array_equal(a.gathers[0].traces, b.gathers[1].traces)
    assert np.array_equal(a.gathers[1].traces, b.gathers[0].traces)


def test_mirror_symmetric_shots():
    geom = GridGeometry((31, 30), 10.0)
    m = layered(geom, 2000.0, 2800.0, 18)
    x_mid = 150.0
    sources = [[x_mid - 40.0, 90.0], [x_mid + 40.0, 90.0]]
    receivers = line_positions([x_mid - 60.0, 90.0], [x_mid + 60.0, 90.0], 7)
    w = RickerWavelet(20.0, 1e-3, 300)
    cfg = PropagatorConfig(300, 1e-3, sponge_width=8)
    survey = simulate_survey(m, w, SurveyGeometry(sources, receivers, geom), cfg)
    left, right = survey.gathers[0].traces, survey.gathers[1].traces
    assert np.any(left)
    assert np.allclose(left, right[:, ::-1], rtol=0, atol=1e-12 * np.abs(left).max())


def test_cfl_violation_names_velocity_and_dt(small_setup):
    s = small_setup
    cfg = PropagatorConfig(300, 5e-3, sponge_width=8)
    w = RickerWavelet(20.0, 5e-3, 300)
    with pytest.raises(StabilityError, match=r"v_max=2600 m/s needs dt <= 0\.00173"):
        forward_model(layered(s["geom"]), w, s["sg"], 0, cfg)


def test_receiver_in_margin(small_setup):
    s = small_setup
    sg = SurveyGeometry([[150.0, 90.0]], [[150.0, 40.0]], s["geom"])
    with pytest.raises(InvalidGeometryError, match="receiver"):
        forward_model(layered(s["geom"]), s["w"], sg, 0, s["cfg"])


def test_wavelet_mismatch(small_setup):
    s = small_setup
    with pytest.raises(ShapeError):
        forward_model(layered(s["geom"]), RickerWavelet(20.0, 1e-3, 299), s["sg"], 0, s["cfg"])


@pytest.mark.parametrize("kwargs", [dict(sponge_width=7), dict(sponge_strength=0.0), dict(cfl_factor=0.75),
                                    dict(nt=1), dict(dt=0.0)])
def test_invalid_config(kwargs):
    base = dict(nt=10, dt=1e-3)
    base.update(kwargs)
    with pytest.raises(InvalidParameterError):
        PropagatorConfig(**base)


def test_cfl_factor_limited_by_stencil_in_3d():
    cfg = PropagatorConfig(10, 1e-3, sponge_width=8, cfl_factor=0.55)
    cfg.check_dimension(2)
    with pytest.raises(InvalidParameterError):
        cfg.check_dimension(3)


def test_blowup_detected(small_setup):
    s = small_setup
    k = Kernel(layered(s["geom"]), s["cfg"])
    k.courant2 = k.courant2 * 50.0
    with pytest.raises(NumericalBlowupError), np.errstate(all="ignore"):
        propagate(k, s["sg"].source_index(0), sample_ricker(s["w"]), s["sg"].receiver_indices())


def test_history_cap(small_setup):
    s = small_setup
    cfg = PropagatorConfig(300, 1e-3, sponge_width=8, max_history_bytes=30 * 30 * 299 * 4)
    k = Kernel(layered(s["geom"]), cfg)
    with pytest.raises(InvalidParameterError, match=r"cells x nt x 4\)"):
        propagate(k, s["sg"].source_index(0), sample_ricker(s["w"]), s["sg"].receiver_indices(), store="field")


def test_shot_in_margin_rejected_before_running(small_setup):
    s = small_setup
    sg = SurveyGeometry([[150.0, 90.0], [150.0, 30.0]], s["sg"].receivers, s["geom"])
    with pytest.raises(InvalidGeometryError, match="source"):
        simulate_survey(layered(s["geom"]), s["w"], sg, s["cfg"])


@pytest.mark.parametrize("workers", [1, 3])
def test_shot_error_is_tagged(workers):
    def fail_on_one(i):
        if i == 1:
            raise NumericalBlowupError("boom")
        return i

    with pytest.raises(ShotError) as info:
        map_shots(fail_on_one, 3, workers)
    assert info.value.shot_index == 1 and info.value.exit_code == 4


def test_adjoint_dot_product(small_setup, rng):
    # traces are linear in the source series s, so <B s, d> must equal the
    # backward correlation against a history holding s_n at the source cell
    s = small_setup
    k = Kernel(VelocityModel(s["geom"], 2000.0 + 400.0 * rng.random(s["geom"].dims)), s["cfg"])
    src_idx, rec_idx = s["sg"].source_index(0), s["sg"].receiver_indices()
    nt = s["cfg"].nt
    src = rng.standard_normal(nt)
    d = rng.standard_normal((nt, len(rec_idx[0])))
    traces, _ = propagate(k, src_idx, src, rec_idx)
    hist = np.zeros((nt,) + s["geom"].dims)
    hist[(slice(None),) + src_idx] = src
    rhs = backpropagate(k, rec_idx, d, hist)[src_idx]
    assert rhs == pytest.approx(np.sum(traces * d), rel=1e-10)


class TestRTM:
    def test_zero_data_gives_zero_image(self, small_setup):
        s = small_setup
        m = layered(s["geom"])
        obs = simulate_survey(m, s["w"].scaled(0.0), s["sg"], s["cfg"])
        img = rtm_migrate(m, obs, s["w"], s["cfg"])
        assert not np.any(img.values)

    def test_margin_zero_and_normalized(self, small_setup):
        s = small_setup
        m = layered(s["geom"])
        obs = simulate_survey(m, s["w"], s["sg"], s["cfg"])
        img = rtm_migrate(m, obs, s["w"], s["cfg"]).values
        assert np.max(np.abs(img)) == pytest.approx(1.0)
        assert not np.any(img[:8]) and not np.any(img[:, -8:])

    def test_reproducible_parallel_sum(self, small_setup):
        s = small_setup
        m = layered(s["geom"])
        obs = simulate_survey(m, s["w"], s["sg"], s["cfg"])
        a = rtm_migrate(m, obs, s["w"], s["cfg"])
        b = rtm_migrate(m, obs, s["w"], s["cfg"], workers=2, reproducible=True)
        assert a == b

    def test_mismatched_survey(self, small_setup):
        s = small_setup
        m = layered(s["geom"])
        obs = simulate_survey(m, s["w"], s["sg"], s["cfg"])
        cfg = PropagatorConfig(200, 1e-3, sponge_width=8)
        with pytest.raises(ShapeError):
            rtm_migrate(m, obs, RickerWavelet(20.0, 1e-3, 200), cfg)
