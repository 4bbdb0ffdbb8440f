import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jetconn import exprlang, smooth
from jetconn.errors import ConfigError
from jetconn.exprlang import Binary, Call, Number, ParseError, Unary, UnboundVariable, Variable
from jetconn.jet import JetPoint
from jetconn.smooth import DimensionError, EvaluationError, Layout

DIMS = (2, 2)
NAMES = ['t1', 't2', 'x1', 'x2', 'v11', 'v12', 'v21', 'v22']


def value(source, dims=DIMS, **blocks):
    return exprlang.evaluate(exprlang.parse(source, dims), **blocks)


@pytest.mark.parametrize('source, expected', [
    ('1 + 2*3', 7.0),
    ('(1 + 2)*3', 9.0),
    ('1 - 2 - 3', -4.0),
    ('8/4/2', 1.0),
    ('2^3^2', 512.0),
    ('-2^2', -4.0),
    ('(-2)^2', 4.0),
    ('2*-3', -6.0),
    ('--3', 3.0),
    ('1.5e1 + .5', 15.5),
    ('abs(-3)', 3.0),
    ('sqrt(16) + exp(0) + log(1)', 5.0),
])
def test_precedence_and_associativity(source, expected):
    assert value(source) == pytest.approx(expected)


def test_variables_bind_to_blocks():
    t = np.array([1.0, 2.0])
    x = np.array([3.0, 4.0])
    v = np.array([[5.0, 6.0], [7.0, 8.0]])
    assert value('t2*x1 + v12 - v21', t=t, x=x, v=v) == 2.0 * 3.0 + 6.0 - 7.0


def test_long_fiber_names_past_nine():
    node = exprlang.parse('v_10_1 + x10', (1, 10))
    assert node.left == Variable('v', (9, 0))
    assert node.right == Variable('x', (9,))
    assert exprlang.print_expr(node, (1, 10)) == 'v_10_1+x10'


@pytest.mark.parametrize('source', ['x3', 't2', 'v13', 'v31', 'y1', 'v_3_1'])
def test_unbound_variables(source):
    with pytest.raises(UnboundVariable) as info:
        exprlang.parse(source, (1, 2))
    assert info.value.name == source


@pytest.mark.parametrize('source, offset', [
    ('1 + * 2', 4),
    ('sin(x1', 6),
    ('2x1', 1),
    ('x1 @ 2', 3),
    ('', 0),
    ('(1 + 2))', 7),
    ('cos x1', 4),
    ('1.2.3', 3),
    ('x1 +', 4),
])
def test_malformed_input_reports_offset(source, offset):
    with pytest.raises(ParseError) as info:
        exprlang.parse(source, (1, 2))
    assert info.value.offset == offset
    assert f'offset {offset}' in str(info.value)
    assert isinstance(info.value, ConfigError)


def test_sin_cos_identity(rng):
    node = exprlang.parse('sin(x1)^2 + cos(x1)^2', (1, 1))
    for x in rng.uniform(-10.0, 10.0, size=100):
        assert abs(exprlang.evaluate(node, x=[x]) - 1.0) <= 1e-15


def test_evaluation_error_carries_offset():
    node = exprlang.parse('1 + log(x1 - 1)', (1, 1))
    with pytest.raises(EvaluationError) as info:
        exprlang.evaluate(node, x=[0.5])
    assert 'offset 4' in str(info.value)


@pytest.mark.parametrize('source, x, offset', [
    ('exp(x1)*exp(x1)', 400.0, 7),
    ('1 + 1e999*x1', 1.0, 4),
    ('x1^2 - x1^2', 1e200, 2),
])
def test_overflow_is_an_evaluation_error(source, x, offset):
    node = exprlang.parse(source, (1, 1))
    with pytest.raises(EvaluationError) as info:
        exprlang.evaluate(node, x=[x])
    assert info.value.location == f'offset {offset}'


def test_overflowing_partials_are_rejected():
    field = exprlang.compile_field('exp(x1)*exp(x1)', Layout(1, 1))
    with pytest.raises(EvaluationError):
        smooth.eval_derivatives(field, [0.0, 400.0, 0.0], 1)


def test_eval_expr_derivatives():
    node = exprlang.parse('x1*x2 + v11^2', (1, 2))
    jp = JetPoint([0.0], [2.0, 3.0], [[1.5], [0.0]])
    u = exprlang.eval_expr(node, jp, 2)
    # layout t1, x1, x2, v11, v21
    assert u.value == pytest.approx(6.0 + 2.25)
    assert u.gradient() == pytest.approx([0.0, 3.0, 2.0, 3.0, 0.0])
    assert u.partial(1, 2) == pytest.approx(1.0)
    assert u.partial(3, 3) == pytest.approx(2.0)


def test_eval_expr_checks_dimensions():
    node = exprlang.parse('x2', (1, 2))
    with pytest.raises(DimensionError):
        exprlang.eval_expr(node, JetPoint([0.0], [1.0], [[0.0]]), 1)


def test_field_rejects_foreign_block():
    with pytest.raises(UnboundVariable):
        exprlang.compile_field('x1 + v11', Layout(1, 1, ('t', 'x')))


def test_constant_value():
    assert exprlang.constant_value(exprlang.parse('2*sqrt(4)', DIMS)) == 4.0
    with pytest.raises(ConfigError):
        exprlang.constant_value(exprlang.parse('x1', DIMS))


# -- printing -----------------------------------------------------------------

CORPUS = [
    '1', '0.25', '1e-07', 'x1', 'v21', '-x1', '--x1', 'x1+x2', 'x1-x2-t1', 'x1-(x2-t1)',
    'x1*x2/t1', 'x1/(x2*t1)', 'x1^x2^t1', '(x1^x2)^t1', '(-x1)^2', '-x1^2', 'x1^-x2',
    'x1*-x2', '-(x1+x2)', 'sin(x1)', 'cos(x1*x2)', 'exp(-t1)', 'log(1+x1^2)', 'sqrt(v11*v11+1)',
    'abs(x1-x2)', 'tan(0.5*t2)', 'sin(cos(x1))^2', '(x1+x2)*(x1-x2)', 'x1*(x2+t1)*v12',
    '1/(1+exp(-x1))', 'x1^2+2*x1*x2+x2^2', 'v11*v22-v12*v21', '(t1+t2)/2', '-sin(x1)*cos(x2)',
    '2^-1', 'x1-x2+t1-t2', 'x1/x2/t1', 'x1/(x2/t1)', 'exp(x1)^2', 'sqrt(x1)^(1/3)',
    '(1+x1)^(-0.5)', '3*x1^2*v11', 'v11^2+v21^2', '-(-(x1))', 'x1*x2^3', '(x1*x2)^3',
    'log(x1)/log(2)', 'sin(t1)*exp(t2)-x1', '1.5e+20*x1', '0.1+0.2',
]


@pytest.mark.parametrize('source', CORPUS)
def test_print_round_trip_corpus(source):
    node = exprlang.parse(source, DIMS)
    printed = exprlang.print_expr(node, DIMS)
    assert exprlang.parse(printed, DIMS) == node
    assert exprlang.print_expr(exprlang.parse(printed, DIMS), DIMS) == printed


leaves = st.one_of(
    st.floats(min_value=0.0, max_value=1e6, allow_nan=False, allow_infinity=False).map(lambda u: Number(abs(u))),
    st.sampled_from(NAMES).map(lambda name: exprlang.bind_variable(name, DIMS)),
)


def _extend(children):
    return st.one_of(
        st.builds(Unary, st.just('-'), children),
        st.builds(Binary, st.sampled_from('+-*/^'), children, children),
        st.builds(Call, st.sampled_from(sorted(exprlang.FUNCTIONS)), children),
    )


trees = st.recursive(leaves, _extend, max_leaves=12)


@given(trees)
@settings(max_examples=200, deadline=None)
def test_print_then_parse_is_identity(node):
    assert exprlang.parse(exprlang.print_expr(node, DIMS), DIMS) == node


def test_evaluate_with_taylor_scalars_matches_floats():
    node = exprlang.parse('exp(x1)*sin(v11) + t1^3', (1, 1))
    field = exprlang.to_field(node, Layout(1, 1))
    u = smooth.eval_derivatives(field, [0.5, 0.2, 1.1], 2)
    assert u.value == pytest.approx(math.exp(0.2) * math.sin(1.1) + 0.125)
    assert u.partial(0) == pytest.approx(0.75)
