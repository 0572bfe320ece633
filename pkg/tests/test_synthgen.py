import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.ndimage import binary_erosion, gaussian_filter

from saltfwi.errors import InvalidParameterError, PlacementError
from saltfwi.grid import GridGeometry, SedimentProfile, binarize, profile_to_model
from saltfwi.synthgen import (PredictorFidelity, SaltBody, SaltScenarioSpec, make_scenario,
                              pseudo_dl_predict, salt_union)

PROFILE = SedimentProfile([0.0, 500.0], [1800.0, 2600.0])


def spec(n=60, bodies=None, **kw):
    geom = GridGeometry((n, n), 10.0)
    if bodies is None:
        bodies = [SaltBody((300.0, 300.0), (180.0, 120.0), 20.0)]
    return SaltScenarioSpec(geom, PROFILE, bodies, **kw)


def test_no_bodies():
    truth, mask, profile = make_scenario(spec(bodies=[]))
    assert truth == profile_to_model(PROFILE, truth.geometry)
    assert not mask.values.any() and profile == PROFILE


def test_center_is_salt():
    truth, mask, _ = make_scenario(spec(v_salt=4400.0))
    assert truth.values[30, 30] == 4400.0 and mask.values[30, 30]


@pytest.mark.parametrize("a,b,rot", [(180.0, 120.0, 0.0), (250.0, 90.0, 35.0), (150.0, 150.0, 0.0)])
def test_area(a, b, rot):
    n, dx = 80, 10.0
    s = spec(n, [SaltBody((400.0, 400.0), (a, b), rot)])
    _, mask, _ = make_scenario(s)
    expected = np.pi * a * b / (n * n * dx * dx)
    assert abs(mask.fraction - expected) <= 0.1 * expected


def test_ellipsoid_volume():
    geom = GridGeometry((30, 30, 30), 10.0)
    s = SaltScenarioSpec(geom, PROFILE, [SaltBody((150.0, 150.0, 150.0), (100.0, 80.0, 60.0))])
    _, mask, _ = make_scenario(s)
    expected = 4.0 / 3.0 * np.pi * 100 * 80 * 60 / (30 ** 3 * 1000.0)
    assert abs(mask.fraction - expected) <= 0.1 * expected


@given(seed=st.integers(0, 10_000), count=st.integers(1, 3))
@settings(max_examples=60, deadline=None)
def test_inclusions_strictly_inside_salt(seed, count):
    s = spec(inclusion_count=count, inclusion_radius=(15.0, 30.0), inclusion_velocity=2500.0, rng_seed=seed)
    truth, mask, _ = make_scenario(s)
    salt = salt_union(s)
    carved = salt & ~mask.values
    assert carved.any()
    # every carved cell keeps a full salt neighbourhood in the uncarved body
    assert np.all(binary_erosion(salt, np.ones((3, 3)), border_value=0)[carved])
    assert np.all(truth.values[carved] == 2500.0)
    assert np.all(truth.values[mask.values] == s.v_salt)


def test_deterministic():
    s = spec(inclusion_count=2, rng_seed=5)
    a, b = make_scenario(s), make_scenario(s)
    assert a[0] == b[0] and a[1] == b[1]


def test_placement_failure():
    with pytest.raises(PlacementError):
        make_scenario(spec(bodies=[SaltBody((300.0, 300.0), (25.0, 25.0))], inclusion_count=1,
                           inclusion_radius=(40.0, 50.0)))
    with pytest.raises(PlacementError):
        make_scenario(spec(bodies=[], inclusion_count=1))


def test_invalid_spec():
    with pytest.raises(InvalidParameterError):
        spec(inclusion_velocity=1e5)
    with pytest.raises(InvalidParameterError):
        PredictorFidelity(-1.0, 0.0)


class TestPredictor:
    mask = make_scenario(spec())[1]

    def test_identity(self):
        p = pseudo_dl_predict(self.mask, PredictorFidelity(0.0, 0.0))
        assert np.array_equal(p.values, self.mask.values.astype(float))
        assert binarize(p, 0.5) == self.mask

    def test_noise_is_clamped(self):
        p = pseudo_dl_predict(self.mask, PredictorFidelity(0.0, 0.1, 3)).values
        assert p.min() == 0.0 and p.max() == 1.0

    def test_deterministic_per_seed(self):
        f = PredictorFidelity(1.0, 0.05, 9)
        assert pseudo_dl_predict(self.mask, f) == pseudo_dl_predict(self.mask, f)
        assert pseudo_dl_predict(self.mask, f) != pseudo_dl_predict(self.mask, PredictorFidelity(1.0, 0.05, 10))

    def test_monte_carlo_mean(self):
        n = 200
        blurred = gaussian_filter(self.mask.values.astype(float), 2.0, mode="nearest")
        samples = np.stack([pseudo_dl_predict(self.mask, PredictorFidelity(2.0, 0.05, s)).values
                            for s in range(n)])
        cells = (blurred >= 0.2) & (blurred <= 0.8)
        assert cells.sum() > 50
        stderr = samples.std(axis=0, ddof=1) / np.sqrt(n)
        dev = np.abs(samples.mean(axis=0) - blurred)
        # a 3-sigma band misses ~0.3% of cells by chance; allow 1%
        assert np.mean(dev[cells] <= 3 * stderr[cells]) >= 0.99
