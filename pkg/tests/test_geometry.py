import math

import numpy as np
import pytest

from jetconn.errors import ConfigError, NonconstantSignature, SingularMetric
from jetconn.geometry import (MetricField, SignatureKind, christoffel, christoffel_parametric, classify,
                              inverse_metric, signature)
from jetconn.jet import JetPoint


def point(x, t=(0.0,)):
    x = np.asarray(x, dtype=float)
    return JetPoint(t, x, np.zeros((len(x), len(t))))


@pytest.mark.parametrize('theta', [0.4, math.pi / 4, 1.2])
def test_sphere_christoffel_symbols(sphere_phi, theta):
    c = christoffel(sphere_phi, x=np.array([theta, 0.3])).c
    assert c[0, 1, 1] == pytest.approx(-math.sin(theta) * math.cos(theta), abs=1e-14)
    assert c[1, 0, 1] == pytest.approx(1 / math.tan(theta), abs=1e-14)
    assert c[1, 1, 0] == pytest.approx(c[1, 0, 1])
    for index in [(0, 0, 0), (0, 0, 1), (1, 1, 1)]:
        assert c[index] == pytest.approx(0.0, abs=1e-14)


def test_hyperbolic_christoffel_symbols(hyperbolic_phi):
    y = 1.7
    c = christoffel(hyperbolic_phi, x=np.array([0.2, y])).c
    assert c[0, 0, 1] == pytest.approx(-1 / y)
    assert c[1, 0, 0] == pytest.approx(1 / y)
    assert c[1, 1, 1] == pytest.approx(-1 / y)
    assert c[0, 0, 0] == pytest.approx(0.0, abs=1e-14)


def test_temporal_christoffel_of_exponential_metric():
    h = MetricField.from_exprs('temporal', (1, 2), [['exp(2*t1)']])
    assert christoffel(h, t=np.array([0.3])).c[0, 0, 0] == pytest.approx(1.0)


def test_parametric_christoffel_freezes_time():
    eps = MetricField.from_exprs('parametric', (1, 1), [['exp(t1)*(1 + x1^2)']])
    c = christoffel_parametric(eps, np.array([0.7]), np.array([0.5])).c
    # ½ ε⁻¹ ∂ε/∂x, the exp(t) factor cancels
    assert c[0, 0, 0] == pytest.approx(0.5 / 1.25)


def test_inverse_metric(sphere_phi):
    inverse = inverse_metric(sphere_phi, x=np.array([0.9, 0.0]))
    assert inverse @ sphere_phi.at(point([0.9, 0.0])) == pytest.approx(np.eye(2))


def test_singular_metric_is_reported(sphere_phi):
    with pytest.raises(SingularMetric) as info:
        inverse_metric(sphere_phi, x=np.array([0.0, 0.0]))
    assert 'x=[0.0, 0.0]' in str(info.value)
    degenerate = MetricField.constant('spatial', (1, 2), [[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(SingularMetric):
        christoffel(degenerate, x=np.zeros(2))


def test_asymmetric_sources_are_rejected():
    with pytest.raises(ConfigError):
        MetricField.from_exprs('spatial', (1, 2), [['1', 'x1'], ['x2', '1']], 'spatial_metric')


def test_wrong_shape_is_rejected():
    with pytest.raises(ConfigError):
        MetricField.from_exprs('temporal', (2, 1), [['1']], 'temporal_metric')


def test_fiber_metric_has_no_christoffel_symbols():
    g = MetricField.from_exprs('fiber', (1, 1), [['1 + v11^2']])
    with pytest.raises(ConfigError):
        christoffel(g, x=np.zeros(1))


@pytest.mark.parametrize('matrix, counts, kind', [
    ([[1.0, 0.0], [0.0, 2.0]], (2, 0), SignatureKind.RIEMANNIAN),
    ([[-1.0, 0.0], [0.0, 1.0]], (1, 1), SignatureKind.LORENTZIAN),
    ([[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]], (1, 2), SignatureKind.ANTI_LORENTZIAN),
    ([[-1.0, 0.0, 0.0, 0.0], [0.0, -1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]], (2, 2),
     SignatureKind.INDEFINITE),
])
def test_signature_classification(matrix, counts, kind):
    n = len(matrix)
    m = MetricField.constant('spatial', (1, n), matrix)
    samples = [point(np.full(n, s)) for s in (-1.0, 0.0, 1.0)]
    assert signature(m, samples) == counts
    assert classify(counts) is kind


def test_signature_must_be_constant():
    m = MetricField.from_exprs('spatial', (1, 1), [['x1']])
    with pytest.raises(NonconstantSignature) as info:
        signature(m, [point([1.0]), point([-1.0])])
    assert info.value.signatures == ((1, 0), (0, 1))


def test_signature_needs_samples():
    with pytest.raises(ConfigError):
        signature(MetricField.identity('spatial', (1, 2)), [])


def test_derivatives_returns_values_and_gradient(sphere_phi):
    values, grad = sphere_phi.derivatives('x', x=np.array([0.6, 0.0]))
    assert values[1, 1] == pytest.approx(math.sin(0.6) ** 2)
    assert grad[1, 1, 0] == pytest.approx(2 * math.sin(0.6) * math.cos(0.6))
    assert grad[0, 0] == pytest.approx([0.0, 0.0])
