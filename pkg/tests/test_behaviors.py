import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hopmat.behaviors import BehaviorKind, BehaviorSpec, Terrain, reference, reference_path, terrain_height

FORWARD = BehaviorSpec(BehaviorKind.FORWARD, speed=0.5)
RAMP = BehaviorSpec(BehaviorKind.RAMP, speed=0.5, grade=0.035)
CIRCLE = BehaviorSpec(BehaviorKind.CIRCULAR, speed=0.3, radius=0.5)
ALL = [BehaviorSpec(), FORWARD, RAMP, CIRCLE]


def test_defaults(cfg):
    spec = BehaviorSpec.from_config("ramp", cfg["behaviors"])
    assert spec.duration == 60.0 and spec.transient == 20.0
    assert spec.grade == 0.035
    assert BehaviorSpec.from_config("circular", cfg["behaviors"]).radius == 0.5


@pytest.mark.parametrize(
    "kwargs",
    [dict(duration=10.0, transient=20.0), dict(transient=-1.0), dict(kind="forward", speed=-1.0), dict(grade=0.1)],
)
def test_spec_validation(kwargs):
    with pytest.raises(ValueError):
        BehaviorSpec(**kwargs)


def test_unknown_kind():
    with pytest.raises(ValueError):
        BehaviorSpec.from_config("backflip", {})


@pytest.mark.parametrize("t", [0.0, 7.3, 60.0])
def test_static_reference(t):
    x, v = reference(BehaviorSpec(), t)
    np.testing.assert_array_equal(x, [0.0, 0.0])
    np.testing.assert_array_equal(v, [0.0, 0.0])


def test_forward_reference():
    x, v = reference(FORWARD, 10.0)
    np.testing.assert_allclose(x, [5.0, 0.0])
    np.testing.assert_allclose(v, [0.5, 0.0])


@given(st.floats(0.0, 60.0))
def test_circle_reference_geometry(t):
    x, v = reference(CIRCLE, t)
    assert np.linalg.norm(x) == pytest.approx(0.5, abs=1e-12)
    assert np.linalg.norm(v) == pytest.approx(0.3, abs=1e-12)


def test_circle_closes():
    period = 2 * math.pi * CIRCLE.radius / CIRCLE.speed
    for t in (0.0, 1.7, 20.0):
        np.testing.assert_allclose(reference(CIRCLE, t + period)[0], reference(CIRCLE, t)[0], atol=1e-9)


def test_reference_rejects_out_of_range():
    with pytest.raises(ValueError):
        reference(FORWARD, -0.1)
    with pytest.raises(ValueError):
        reference(FORWARD, 60.1)


@pytest.mark.parametrize("spec", ALL, ids=lambda s: s.name)
@given(t=st.floats(0.01, 59.99))
def test_reference_velocity_is_derivative(spec, t):
    h = 1e-6
    fd = (reference(spec, t + h)[0] - reference(spec, t - h)[0]) / (2 * h)
    _, v = reference(spec, t)
    np.testing.assert_allclose(fd, v, atol=1e-6 * max(spec.speed, 1.0))


@pytest.mark.parametrize("spec", ALL, ids=lambda s: s.name)
def test_vectorized_reference_matches_scalar(spec):
    t = np.linspace(0.0, 60.0, 37)
    path = reference_path(spec, t)
    for ti, row in zip(t, path):
        np.testing.assert_allclose(row, reference(spec, ti)[0], atol=1e-12)


def test_terrain_flat():
    z, n = terrain_height(Terrain(), 3.0, -4.0)
    assert z == 0.0
    np.testing.assert_array_equal(n, [0.0, 0.0, 1.0])


def test_terrain_incline():
    t = Terrain.incline(0.035)
    z, n = terrain_height(t, 10.0, 5.0)
    assert z == pytest.approx(0.35, abs=1e-12)
    assert np.linalg.norm(n) == pytest.approx(1.0, abs=1e-15)
    # the normal is orthogonal to both surface tangents
    assert np.dot(n, [1.0, 0.0, 0.035]) == pytest.approx(0.0, abs=1e-15)
    assert np.dot(n, [0.0, 1.0, 0.0]) == pytest.approx(0.0, abs=1e-15)


def test_terrain_validation():
    with pytest.raises(ValueError):
        terrain_height(Terrain(), math.nan, 0.0)
    with pytest.raises(ValueError):
        Terrain(grade=0.1)


def test_ramp_terrain_from_spec():
    assert RAMP.terrain().grade == 0.035
    assert FORWARD.terrain().grade == 0.0


def test_with_duration_scales_transient():
    short = FORWARD.with_duration(6.0)
    assert short.duration == 6.0 and short.transient == 2.0
