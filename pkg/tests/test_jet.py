import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jetconn import catalog, exprlang, smooth
from jetconn.connection import NonlinearConnection, Provenance, user_connection
from jetconn.errors import ConfigError, SingularJacobian
from jetconn.geometry import MetricField
from jetconn.jet import (CoordinateChange, JetPoint, prolong, push_covector, push_lagrangian, push_scalar,
                         push_spatial_metric, push_temporal_metric, sample_box, sweep, transform_connection)
from jetconn.smooth import DimensionError, Layout

small = st.floats(min_value=-1.0, max_value=1.0, allow_nan=False, allow_infinity=False)


def cubic_change():
    return CoordinateChange.from_exprs((1, 2), ['2*t1 + 1'], ['(t1 - 1)/2'],
                                       [catalog.CUBIC, 'x2'], [catalog.CUBIC_INVERSE, 'x2'])


def affine_change():
    return CoordinateChange.from_exprs((1, 2), ['3*t1 - 0.5'], ['(t1 + 0.5)/3'],
                                       ['x1 + x2', '2*x2 + 1'], ['x1 - (x2 - 1)/2', '(x2 - 1)/2'])


def scaling(a, b):
    """t̃ = a·t, x̃ = b·x for p = n = 1."""
    return CoordinateChange.from_exprs((1, 1), [f'{a}*t1'], [f't1/{a}'], [f'{b}*x1'], [f'x1/{b}'])


def test_jet_point_shapes():
    jp = JetPoint([0.0, 1.0], [1.0, 2.0, 3.0], np.arange(6.0))
    assert jp.dims == (2, 3)
    assert jp.v.shape == (3, 2)
    assert jp.v[2, 1] == 5.0
    again = JetPoint.from_flat(jp.flat(), 2, 3)
    assert again.to_dict() == jp.to_dict()


def test_jet_point_validation():
    with pytest.raises(DimensionError):
        JetPoint([0.0], [1.0, 2.0], [[1.0]])
    with pytest.raises(DimensionError):
        JetPoint([0.0], [math.nan], [[1.0]])


def test_sample_box_is_reproducible():
    first = sample_box(np.random.default_rng(7), (2, 2), 5, x_box=(0.5, 1.2))
    second = sample_box(np.random.default_rng(7), (2, 2), 5, x_box=(0.5, 1.2))
    assert [jp.to_dict() for jp in first] == [jp.to_dict() for jp in second]
    assert all(0.5 <= x <= 1.2 for jp in first for x in jp.x)


def test_sweep_keeps_input_order():
    assert sweep(lambda k: k * k, range(20), workers=4) == [k * k for k in range(20)]


def test_prolong_scaling():
    jp = prolong(scaling(2.0, 3.0), JetPoint([0.5], [1.0], [[4.0]]))
    assert jp.t[0] == pytest.approx(1.0)
    assert jp.x[0] == pytest.approx(3.0)
    assert jp.v[0, 0] == pytest.approx(6.0)


def test_cubic_change_round_trip():
    change = cubic_change()
    points = sample_box(np.random.default_rng(1), (1, 2), 50, x_box=(-2.0, 2.0))
    assert change.round_trip_error(points) <= 1e-12


def test_change_needs_declared_inverses():
    with pytest.raises(ConfigError):
        CoordinateChange.from_exprs((1, 1), temporal=['2*t1'])
    with pytest.raises(ConfigError):
        CoordinateChange.from_exprs((1, 2), spatial=['x1'], spatial_inverse=['x1'])


def test_singular_jacobian():
    change = CoordinateChange.from_exprs((1, 1), spatial=['x1^3'], spatial_inverse=['x1'])
    with pytest.raises(SingularJacobian):
        prolong(change, JetPoint([0.0], [0.0], [[1.0]]))


@given(small, small, small, small, small)
@settings(max_examples=40, deadline=None)
def test_prolongation_is_functorial(t, x1, x2, v1, v2):
    jp = JetPoint([t], [x1, x2], [[v1], [v2]])
    first, second = cubic_change(), affine_change()
    direct = prolong(second.compose(first), jp)
    stepwise = prolong(second, prolong(first, jp))
    assert direct.t == pytest.approx(stepwise.t, abs=1e-12)
    assert direct.x == pytest.approx(stepwise.x, abs=1e-12)
    assert direct.v == pytest.approx(stepwise.v, abs=1e-12)


def test_inverse_undoes_prolongation():
    change = cubic_change()
    jp = JetPoint([0.2], [0.7, -0.3], [[0.4], [1.1]])
    back = prolong(change.inverse(), prolong(change, jp))
    assert back.x == pytest.approx(jp.x, abs=1e-12)
    assert back.v == pytest.approx(jp.v, abs=1e-12)


def _frozen(dims, m, n):
    return NonlinearConnection(dims, lambda _: m, lambda _: n, Provenance.USER)


def test_transformation_law_composes():
    gamma = user_connection((1, 2), [[['x1*v11']], [['t1 + v21^2']]],
                            [[['x2', 'v11']], [['sin(x1)', 'v21*x1']]])
    first, second = cubic_change(), affine_change()
    for jp in sample_box(np.random.default_rng(3), (1, 2), 10):
        point, m1, n1 = transform_connection(gamma, first, jp)
        _, m2, n2 = transform_connection(_frozen((1, 2), m1, n1), second, point)
        _, m, n = transform_connection(gamma, second.compose(first), jp)
        assert np.max(np.abs(m - m2)) <= 1e-10
        assert np.max(np.abs(n - n2)) <= 1e-10


def test_identity_change_leaves_coefficients():
    gamma = user_connection((2, 1), [[['x1', 't1'], ['t1', 'v11*v12']]], [[['v11'], ['x1^2']]])
    jp = JetPoint([0.1, 0.2], [0.3], [[0.4, 0.5]])
    point, m, n = transform_connection(gamma, CoordinateChange.identity((2, 1)), jp)
    m0, n0 = (smooth.values_of(c) for c in gamma.coefficients(jp))
    assert point.to_dict() == jp.to_dict()
    assert m == pytest.approx(m0)
    assert n == pytest.approx(n0)


def test_scaling_law_for_temporal_components():
    # M̃ = (b/a²)·M for constant a, b; linear changes add no inhomogeneous term
    gamma = user_connection((1, 1), [[['x1']]], [[['v11']]])
    _, m, n = transform_connection(gamma, scaling(2.0, 3.0), JetPoint([0.0], [1.0], [[2.0]]))
    assert m[0, 0, 0] == pytest.approx(3.0 / 4.0)
    assert n[0, 0, 0] == pytest.approx(2.0 / 2.0)


# -- pushforwards ---------------------------------------------------------------------

def test_push_spatial_metric_scaling():
    phi = MetricField.identity('spatial', (1, 1))
    pushed = push_spatial_metric(phi, scaling(1.0, 2.0))
    assert pushed.at(JetPoint([0.0], [5.0], [[0.0]]))[0, 0] == pytest.approx(0.25)


def test_push_spatial_metric_matches_jacobian(sphere_phi):
    change = cubic_change()
    pushed = push_spatial_metric(sphere_phi, change)
    x = np.array([0.8, 0.1])
    moved = change.map_x(x)
    j = change.spatial_jacobian(x)
    expected = np.linalg.inv(j).T @ sphere_phi.at(JetPoint([0.0], x, np.zeros((2, 1)))) @ np.linalg.inv(j)
    assert pushed.at(JetPoint([0.0], moved, np.zeros((2, 1)))) == pytest.approx(expected, abs=1e-12)


def test_push_temporal_metric():
    h = MetricField.from_exprs('temporal', (1, 1), [['exp(2*t1)']])
    change = CoordinateChange.from_exprs((1, 1), ['2*t1 + 1'], ['(t1 - 1)/2'])
    pushed = push_temporal_metric(h, change)
    t_new = 2.0
    assert pushed.matrix(t=np.array([t_new]))[0, 0] == pytest.approx(math.exp(t_new - 1) / 4)


def test_push_scalar_and_covector():
    layout = Layout(1, 1, ('t', 'x'))
    change = scaling(2.0, 3.0)
    f = push_scalar(exprlang.compile_field('x1^2 + t1', layout), change)
    assert f(t=np.array([4.0]), x=np.array([6.0])) == pytest.approx(4.0 + 2.0)
    (row,) = push_covector(((exprlang.compile_field('x1', layout),),), change, (1, 1))
    assert row[0](t=np.array([0.0]), x=np.array([6.0])) == pytest.approx(2.0 * 2.0 / 3.0)


def test_push_lagrangian():
    lagrangian = exprlang.compile_field('v11^2', Layout(1, 1))
    pushed = push_lagrangian(lagrangian, scaling(2.0, 3.0))
    value = pushed(t=np.array([0.0]), x=np.array([0.0]), v=np.array([[1.5]]))
    assert value == pytest.approx((2.0 * 1.5 / 3.0) ** 2)


def test_pushforward_needs_matching_kind(sphere_phi):
    with pytest.raises(ConfigError):
        push_temporal_metric(sphere_phi, cubic_change())
