import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jetconn import exprlang, smooth
from jetconn.errors import ConfigError
from jetconn.smooth import DimensionError, EvaluationError, Layout, ScalarField

coordinates = st.floats(min_value=-1.5, max_value=1.5, allow_nan=False, allow_infinity=False)

# fields on (t1, x1, x2, v11, v21); none is a polynomial of degree <= 2
CORPUS = [
    'sin(x1)*exp(t1)',
    'cos(x1*x2) + v11^3',
    'exp(x1 - x2)*v21',
    'log(2 + x1^2)*v11',
    'sqrt(3 + x2)*sin(v21)',
    'tan(0.5*x1) + t1^3',
    '1/(2 + cos(x2)) + x1^4',
    'exp(-t1^2)*cos(v11)',
    'sin(x1 + 2*x2)*cos(v21 - t1)',
    'x1^3*v11 + log(4 + v21)',
]
FD_POINT = [0.3, 0.2, -0.4, 0.5, -0.1]


def test_seed_partials_of_polynomial():
    x = smooth.seed([2.0, 3.0], 3)
    u = x[0] * x[0] * x[1]
    assert u.value == 12.0
    assert u.gradient() == pytest.approx([12.0, 4.0])
    assert u.hessian() == pytest.approx(np.array([[6.0, 4.0], [4.0, 0.0]]))
    assert u.partial(0, 0, 1) == pytest.approx(2.0)
    assert u.partial(1, 0, 0) == pytest.approx(2.0)


def test_partial_beyond_order_is_a_dimension_error():
    (x,) = smooth.seed([1.0], 2)
    with pytest.raises(DimensionError):
        (x * x).partial(0, 0, 0)


def test_derivative_lowers_order():
    x, y = smooth.seed([0.5, -1.0], 3)
    u = smooth.sin(x) * y
    dx = u.d(0)
    assert dx.order == 2
    assert dx.value == pytest.approx(math.cos(0.5) * -1.0)
    assert dx.partial(1) == pytest.approx(math.cos(0.5))


@given(coordinates, coordinates)
@settings(max_examples=50, deadline=None)
def test_leibniz_rule(a, b):
    x, y = smooth.seed([a, b], 2)
    f = smooth.sin(x) * y + smooth.exp(y)
    g = smooth.cos(x * y) + x
    product = f * g
    gradient = f.gradient() * g.value + f.value * g.gradient()
    hessian = (f.hessian() * g.value + np.outer(f.gradient(), g.gradient())
               + np.outer(g.gradient(), f.gradient()) + f.value * g.hessian())
    assert np.max(np.abs(product.gradient() - gradient)) <= 1e-13
    assert np.max(np.abs(product.hessian() - hessian)) <= 1e-13


@given(coordinates, coordinates, coordinates)
@settings(max_examples=50, deadline=None)
def test_mixed_partials_are_symmetric(a, b, c):
    x, y, z = smooth.seed([a, b, c], 3)
    u = smooth.exp(x * y) * smooth.sin(z + x) / (2 + y * y)
    third = u.third()
    assert np.max(np.abs(u.hessian() - u.hessian().T)) <= 1e-13
    assert abs(u.partial(0, 1, 2) - u.partial(2, 0, 1)) <= 1e-13
    assert np.max(np.abs(third - third.transpose(1, 0, 2))) <= 1e-13
    assert np.max(np.abs(third - third.transpose(2, 1, 0))) <= 1e-13


def test_compose_is_the_chain_rule():
    s = smooth.seed([0.7], 2)[0]
    inner = [s * s, smooth.sin(s)]
    # outer(u, w) = u*exp(w), expanded at the inner values
    u, w = smooth.seed([inner[0].value, inner[1].value], 2)
    outer = u * smooth.exp(w)
    composed = smooth.compose(outer, inner)
    direct = inner[0] * smooth.exp(inner[1])
    assert composed.value == pytest.approx(direct.value)
    assert composed.gradient() == pytest.approx(direct.gradient(), abs=1e-13)
    assert composed.hessian() == pytest.approx(direct.hessian(), abs=1e-12)


def test_compose_with_plain_floats_returns_the_value():
    u, w = smooth.seed([1.0, 2.0], 1)
    assert smooth.compose(u * w, [1.0, 2.0]) == 2.0


def test_inverse_of_taylor_matrix():
    x, y = smooth.seed([0.4, 1.3], 2)
    a = np.array([[2 + x * x, smooth.sin(y)], [smooth.sin(y), 3 + y]], dtype=object)
    identity = np.dot(a, smooth.inv(a))
    for (i, j), entry in np.ndenumerate(identity):
        assert entry.value == pytest.approx(1.0 if i == j else 0.0, abs=1e-14)
        assert np.max(np.abs(entry.gradient())) <= 1e-13
        assert np.max(np.abs(entry.hessian())) <= 1e-12


def test_restrict_keeps_selected_variables():
    x, y, z = smooth.seed([1.0, 2.0, 3.0], 2)
    u = (x * y * z).restrict((0, 2))
    assert u.nvars == 2
    assert u.gradient() == pytest.approx([6.0, 2.0])
    assert u.partial(0, 1) == pytest.approx(2.0)


@pytest.mark.parametrize('source', CORPUS)
def test_ad_matches_central_differences_at_second_order(source):
    field = exprlang.compile_field(source, Layout(1, 2))
    steps = np.array([4e-3, 2e-3, 1e-3])
    errors = [smooth.fd_check(field, FD_POINT, step).first for step in steps]
    slope = np.polyfit(np.log(steps), np.log(errors), 1)[0]
    assert 1.8 <= slope <= 2.2


def test_fd_check_agrees_on_second_partials():
    field = exprlang.compile_field(CORPUS[0], Layout(1, 2))
    report = smooth.fd_check(field, FD_POINT, 1e-4)
    assert report.second <= 1e-5
    assert report.max_deviation == max(report.first, report.second)


def test_fd_check_rejects_nonpositive_steps():
    field = exprlang.compile_field(CORPUS[0], Layout(1, 2))
    with pytest.raises(ConfigError) as info:
        smooth.fd_check(field, FD_POINT, 0.0)
    assert info.value.exit_code == 2


def test_eval_derivatives_rejects_order_four():
    field = ScalarField(lambda x: x[0] ** 5, Layout(1, 1, ('x',)))
    with pytest.raises(DimensionError):
        smooth.eval_derivatives(field, [1.0], 4)


def test_eval_derivatives_of_constant_field():
    field = ScalarField.constant(2.5, Layout(1, 1))
    u = smooth.eval_derivatives(field, [0.0, 1.0, 2.0], 2)
    assert u.value == 2.5
    assert not np.any(u.hessian())


def test_point_size_is_checked():
    field = ScalarField(lambda x: x[0], Layout(1, 2, ('x',)))
    with pytest.raises(DimensionError):
        smooth.eval_derivatives(field, [1.0], 1)


@pytest.mark.parametrize('function, argument', [(smooth.log, 0.0), (smooth.log, -1.0), (smooth.sqrt, -0.5)])
def test_domain_errors(function, argument):
    with pytest.raises(EvaluationError):
        function(argument)
    (u,) = smooth.seed([argument], 1)
    with pytest.raises(EvaluationError):
        function(u)


def test_division_by_zero():
    with pytest.raises(EvaluationError):
        smooth.divide(1.0, 0.0)


def test_layout_indexing():
    layout = Layout(2, 3)
    assert layout.size == 2 + 3 + 6
    assert layout.index('x', 1) == 3
    assert layout.index('v', 2, 1) == 5 + 2 * 2 + 1
    parts = layout.split(range(layout.size))
    assert parts['v'].shape == (3, 2)
    assert layout.join(**parts) == list(range(layout.size))
