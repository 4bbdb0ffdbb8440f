"""Nonlinear connections on J¹(T,M) and their canonical constructions.

Connection evaluators take a :class:`~jetconn.jet.JetPoint` whose ``t`` and
``x`` are floats; the fiber block ``v`` may carry Taylor scalars so that fiber
derivatives of the coefficients (torsion, affinity) come out exactly.
"""
import enum
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from jetconn import exprlang, smooth
from jetconn.errors import (ConfigError, DegenerateFactor, NoSpatialComponents, NotRegular,
                            WrongArity)
from jetconn.geometry import (MetricField, check_nondegenerate, christoffel, christoffel_parametric,
                              invert)
from jetconn.jet import JetPoint, sweep, transform_connection
from jetconn.smooth import Layout, ScalarField

logger = logging.getLogger(__name__)

PSI_OFFSETS = (0.5, 1.0, 2.0)


class Provenance(enum.Enum):
    GAMMA_ZERO = 'gamma-zero'
    ML_P1 = 'ML-p1'
    ML_PGE2 = 'ML-pge2'
    GML_REGULAR = 'GML-regular'
    GML_APRIORI = 'GML-apriori'
    USER = 'user'

    @property
    def affine(self) -> bool:
        return self in (Provenance.GAMMA_ZERO, Provenance.ML_PGE2, Provenance.GML_REGULAR,
                        Provenance.GML_APRIORI)


@dataclass(frozen=True)
class NonlinearConnection:
    """Temporal components M[i, α, β] and spatial components N[i, α, j]."""

    dims: tuple
    temporal_fn: Callable
    spatial_fn: Callable
    provenance: Provenance
    label: str = field(default='', compare=False)

    def temporal(self, jp: JetPoint) -> np.ndarray:
        p, n = self.dims
        m = smooth.as_array(self.temporal_fn(jp))
        if m.shape != (n, p, p):
            raise smooth.DimensionError(f'temporal components have shape {m.shape}, expected {(n, p, p)}')
        return m

    def spatial(self, jp: JetPoint) -> np.ndarray:
        p, n = self.dims
        nn = smooth.as_array(self.spatial_fn(jp))
        if nn.shape != (n, p, n):
            raise smooth.DimensionError(f'spatial components have shape {nn.shape}, expected {(n, p, n)}')
        return nn

    def coefficients(self, jp: JetPoint) -> tuple:
        return self.temporal(jp), self.spatial(jp)


@dataclass(frozen=True)
class FundamentalVerticalMetric:
    """G[α, β, i, j], symmetric under (α, i) ↔ (β, j)."""

    dims: tuple
    evaluator: Callable
    label: str = field(default='', compare=False)

    def __call__(self, jp: JetPoint) -> np.ndarray:
        p, n = self.dims
        g = smooth.as_array(self.evaluator(jp))
        if g.shape != (p, p, n, n):
            raise smooth.DimensionError(f'vertical metric has shape {g.shape}, expected {(p, p, n, n)}')
        return g


@dataclass(frozen=True)
class QuadraticLagrangian:
    """L = hᵅᵝ g_ij xⁱ_ᵅ xʲ_β + U⁽ᵅ⁾₍ᵢ₎ xⁱ_ᵅ + F."""

    h: MetricField
    g: MetricField
    U: tuple = None
    F: ScalarField = None

    def __post_init__(self):
        if self.h.kind != 'temporal' or self.g.kind != 'parametric':
            raise ConfigError('a quadratic Lagrangian needs a temporal h and a parametric g')

    @property
    def dims(self):
        return self.h.dims

    def covector(self, t, x) -> np.ndarray:
        p, n = self.dims
        if self.U is None:
            return np.zeros((p, n))
        return smooth.as_array([[self.U[a][i](t=t, x=x) for i in range(n)] for a in range(p)])

    def potential(self, t, x):
        return 0.0 if self.F is None else self.F(t=t, x=x)

    def evaluate(self, t, x, v):
        p, n = self.dims
        h_inv = invert(self.h.matrix(t=t))
        g = self.g.matrix(t=t, x=x)
        u = self.covector(t, x)
        v = np.asarray(v, dtype=object).reshape(n, p)
        total = self.potential(t, x)
        for a in range(p):
            for b in range(p):
                for i in range(n):
                    for j in range(n):
                        total = total + h_inv[a, b] * g[i, j] * v[i, a] * v[j, b]
        for a in range(p):
            for i in range(n):
                total = total + u[a, i] * v[i, a]
        return total

    def scalar(self) -> ScalarField:
        p, n = self.dims
        return ScalarField(self.evaluate, Layout(p, n), label='quadratic Lagrangian')


@dataclass(frozen=True)
class GeneralQuadraticLagrangian:
    """L = G⁽ᵅ⁾⁽ᵝ⁾₍ᵢ₎₍ⱼ₎(t, x) xⁱ_ᵅ xʲ_β + U⁽ᵅ⁾₍ᵢ₎ xⁱ_ᵅ + F with a separately given h."""

    h: MetricField
    G: tuple
    U: tuple = None
    F: ScalarField = None

    @property
    def dims(self):
        return self.h.dims

    def coefficients(self, t, x) -> np.ndarray:
        p, n = self.dims
        return smooth.as_array([[[[self.G[a][b][i][j](t=t, x=x) for j in range(n)] for i in range(n)]
                                 for b in range(p)] for a in range(p)])

    def evaluate(self, t, x, v):
        p, n = self.dims
        g = self.coefficients(t, x)
        v = np.asarray(v, dtype=object).reshape(n, p)
        total = 0.0 if self.F is None else self.F(t=t, x=x)
        for a in range(p):
            for b in range(p):
                for i in range(n):
                    for j in range(n):
                        total = total + g[a, b, i, j] * v[i, a] * v[j, b]
        if self.U is not None:
            for a in range(p):
                for i in range(n):
                    total = total + self.U[a][i](t=t, x=x) * v[i, a]
        return total

    def scalar(self) -> ScalarField:
        p, n = self.dims
        return ScalarField(self.evaluate, Layout(p, n), label='general quadratic Lagrangian')


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    worst: float
    location: dict = None
    tolerance: float = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            'name': self.name,
            'status': 'pass' if self.passed else 'fail',
            'worst': self.worst,
            'location': self.location,
            'tolerance': self.tolerance,
            'details': self.details,
        }


def _values(jp: JetPoint):
    return smooth.values_of(jp.t), smooth.values_of(jp.x)


def _temporal_components(h: MetricField, jp: JetPoint) -> np.ndarray:
    """M[i, α, β] = -H^γ_αβ xⁱ_γ."""
    t, _ = _values(jp)
    big_h = christoffel(h, t=t).c
    return -np.tensordot(np.asarray(jp.v, dtype=object), big_h, axes=([1], [0]))


def _christoffel_term(c: np.ndarray, jp: JetPoint) -> np.ndarray:
    """c[i, j, k] xᵏ_ᵅ rearranged as [i, α, j]."""
    return np.tensordot(c, np.asarray(jp.v, dtype=object), axes=([2], [0])).transpose(0, 2, 1)


# -- Γ₀ ----------------------------------------------------------------------------

def gamma_zero(h: MetricField, phi: MetricField) -> NonlinearConnection:
    """Canonical connection of a metric pair: M = -H^γ_αβ xⁱ_γ, N = γⁱⱼₖ xᵏ_β."""
    if h.kind != 'temporal' or phi.kind != 'spatial':
        raise ConfigError('gamma_zero needs a temporal and a spatial metric')

    def spatial(jp):
        _, x = _values(jp)
        return _christoffel_term(christoffel(phi, x=x).c, jp)

    logger.debug('gamma-zero connection of (%s, %s)', h.label, phi.label)
    return NonlinearConnection(h.dims, lambda jp: _temporal_components(h, jp), spatial, Provenance.GAMMA_ZERO,
                               label='gamma-zero')


# -- vertical metrics ------------------------------------------------------------

def _fiber_index(layout: Layout, i, a):
    return layout.index('v', i, a)


def _local_jet(field_: ScalarField, values, order):
    layout = field_.layout
    seeds = np.array(smooth.seed(values, order), dtype=object)
    return field_(**layout.split(seeds))


def fundamental_metric(lagrangian: ScalarField, dims) -> FundamentalVerticalMetric:
    """G⁽ᵅ⁾⁽ᵝ⁾₍ᵢ₎₍ⱼ₎ = ½ ∂²L/∂xⁱ_ᵅ∂xʲ_β."""
    p, n = dims
    layout = Layout(p, n)
    if lagrangian.layout != layout:
        raise ConfigError('a Lagrangian must be a field on all of J¹(T,M)')

    def evaluate(jp):
        flat = jp.flat()
        order = smooth.order_of(flat)
        values = [smooth.value_of(u) for u in flat]
        local = _local_jet(lagrangian, values, order + 2)
        if not smooth.is_taylor(local):
            return np.zeros((p, p, n, n))
        g = np.empty((p, p, n, n), dtype=object)
        for a in range(p):
            for b in range(p):
                for i in range(n):
                    for j in range(n):
                        second = local.d(_fiber_index(layout, i, a)).d(_fiber_index(layout, j, b)) * 0.5
                        g[a, b, i, j] = smooth.compose(second, flat) if order else second.value
        return g

    return FundamentalVerticalMetric(tuple(dims), evaluate, label=f'G[{lagrangian.label}]')


def vertical_metric_from_fiber_metric(g: MetricField, h: MetricField) -> FundamentalVerticalMetric:
    """G⁽ᵅ⁾⁽ᵝ⁾₍ᵢ₎₍ⱼ₎ = hᵅᵝ(t) g_ij(t, x, v)."""
    if h.kind != 'temporal':
        raise ConfigError('the vertical metric needs a temporal h')

    def evaluate(jp):
        h_inv = invert(h.matrix(t=jp.t))
        spatial = g.matrix(t=jp.t, x=jp.x, v=jp.v)
        return np.multiply.outer(h_inv, spatial)

    return FundamentalVerticalMetric(h.dims, evaluate, label=f'h^-1 x {g.label}')


@dataclass(frozen=True)
class SpatialFactor:
    """Accepted Kronecker factor g_ij of a vertical metric."""

    evaluator: Callable
    residual: float
    location: dict

    def __call__(self, jp: JetPoint) -> np.ndarray:
        return self.evaluator(jp)


def _trace_factor(g_values, h_values):
    p = h_values.shape[0]
    return np.tensordot(h_values, g_values, axes=([0, 1], [0, 1])) / p


def kronecker_residual(g_values, h_values):
    """(factor, |G - hᵅᵝ g|∞, |G|∞) for float arrays."""
    h_inv = np.linalg.inv(h_values)
    factor = _trace_factor(g_values, h_values)
    residual = float(np.max(np.abs(g_values - np.multiply.outer(h_inv, factor)))) if g_values.size else 0.0
    return factor, residual, float(np.max(np.abs(g_values))) if g_values.size else 0.0


def kronecker_factor(G: FundamentalVerticalMetric, h: MetricField, samples, tol=1e-9, workers=1) -> SpatialFactor:
    """Trace-extract g_ij = (1/p) h_αβ G⁽ᵅ⁾⁽ᵝ⁾₍ᵢ₎₍ⱼ₎ and certify G = hᵅᵝ g_ij at the samples."""
    p, n = G.dims
    samples = list(samples)
    if not samples:
        raise ConfigError('the Kronecker factorization needs at least one sample point', 'samples')

    def probe(jp):
        h_values = h.at(jp)
        check_nondegenerate(h_values, repr(jp))
        factor, residual, scale = kronecker_residual(smooth.values_of(G(jp)), h_values)
        rank = int(np.linalg.matrix_rank(factor)) if n else 0
        return residual, scale, rank, jp

    worst, worst_point = 0.0, None
    for residual, scale, rank, jp in sweep(probe, samples, workers):
        if rank < n:
            raise DegenerateFactor(rank, n, repr(jp))
        if residual > tol * scale:
            logger.info('vertical metric is not Kronecker regular at %r (residual %.3e)', jp, residual)
            raise NotRegular(residual, repr(jp))
        if worst_point is None or residual > worst:
            worst, worst_point = residual, jp

    def evaluate(jp):
        h_matrix = h.matrix(t=jp.t)
        return np.tensordot(h_matrix, G(jp), axes=([0, 1], [0, 1])) / p

    return SpatialFactor(evaluate, worst, worst_point.to_dict() if worst_point is not None else None)


def kronecker_projection(G: FundamentalVerticalMetric, h: MetricField) -> FundamentalVerticalMetric:
    """𝒢⁽ᵅ⁾⁽ᵝ⁾₍ᵢ₎₍ⱼ₎ = hᵅᵝ h_μν G⁽μ⁾⁽ν⁾₍ᵢ₎₍ⱼ₎."""

    def evaluate(jp):
        h_matrix = h.matrix(t=jp.t)
        trace = np.tensordot(h_matrix, G(jp), axes=([0, 1], [0, 1]))
        return np.multiply.outer(invert(h_matrix), trace)

    return FundamentalVerticalMetric(G.dims, evaluate, label=f'projected {G.label}')


# -- curl and the ML connections -------------------------------------------------------

def curl_tensor(U, t, x) -> np.ndarray:
    """U⁽ᵅ⁾₍ᵢ₎ⱼ = ∂U⁽ᵅ⁾₍ᵢ₎/∂xʲ - ∂U⁽ᵅ⁾₍ⱼ₎/∂xⁱ, shaped (p, n, n)."""
    x = np.asarray(x, dtype=float)
    p, n = len(U), len(x)
    seeds = np.array(smooth.seed(x, 1), dtype=object)
    grad = np.zeros((p, n, n))
    for a in range(p):
        for i in range(n):
            u = U[a][i](t=t, x=seeds)
            if smooth.is_taylor(u):
                grad[a, i] = u.gradient()
    return grad - grad.transpose(0, 2, 1)


def _ml_spatial(g: MetricField, h: MetricField, U, jp: JetPoint) -> np.ndarray:
    """Γⁱⱼₖxᵏ_ᵅ + (gⁱᵏ/2)∂g_jk/∂tᵅ + (gⁱᵏ/4)h_αγ U⁽ᵞ⁾₍ₖ₎ⱼ as [i, α, j]."""
    t, x = _values(jp)
    values, dt = g.derivatives('t', t=t, x=x)
    check_nondegenerate(values, repr(jp))
    g_inv = np.linalg.inv(values)
    term = _christoffel_term(christoffel_parametric(g, t, x).c, jp)
    # dt[j, k, a]
    term = term + 0.5 * np.einsum('ik,jka->iaj', g_inv, dt)
    if U is not None:
        curl = curl_tensor(U, t, x)
        term = term + 0.25 * np.einsum('ik,ac,ckj->iaj', g_inv, h.at(jp), curl)
    return term


def canonical_ml_pge2(lagrangian: QuadraticLagrangian) -> NonlinearConnection:
    p, n = lagrangian.dims
    if p < 2:
        raise WrongArity(f'the multi-time quadratic construction needs p >= 2, got p={p}')
    h, g, U = lagrangian.h, lagrangian.g, lagrangian.U
    logger.debug('ML connection (p=%d, n=%d)', p, n)
    return NonlinearConnection((p, n), lambda jp: _temporal_components(h, jp),
                               lambda jp: _ml_spatial(g, h, U, jp), Provenance.ML_PGE2, label='ML-pge2')


def canonical_general_quadratic(lagrangian: GeneralQuadraticLagrangian) -> NonlinearConnection:
    """Connection of a general quadratic Lagrangian through its Kronecker projection.

    The spatial factor is normalised by 1/p so that Kronecker regular input
    reproduces :func:`canonical_ml_pge2` exactly.
    """
    p, n = lagrangian.dims
    if p < 2:
        raise WrongArity(f'the general quadratic construction needs p >= 2, got p={p}')
    h = lagrangian.h
    layout = Layout(p, n, ('t', 'x'))

    @lru_cache(maxsize=64)
    def factor(values, order):
        seeds = np.array(smooth.seed(values, order), dtype=object)
        parts = layout.split(seeds)
        trace = np.tensordot(h.matrix(t=parts['t']), lagrangian.coefficients(parts['t'], parts['x']),
                             axes=([0, 1], [0, 1])) / p
        return trace

    fields = [[ScalarField.from_jet(lambda values, order, i=i, j=j: factor(values, order)[i, j], layout,
                                    f'g[{i + 1},{j + 1}]') for j in range(n)] for i in range(n)]
    g = MetricField.from_fields('parametric', (p, n), fields, label='projected factor')
    return canonical_ml_pge2(QuadraticLagrangian(h, g, lagrangian.U, lagrangian.F))


def _temporal_christoffel_jet(h: MetricField, t):
    """H¹₁₁ = ½ h¹¹ dh₁₁/dt for p = 1, as a Taylor scalar when ``t`` is one."""
    h11 = h.components[0][0](t=np.array([t], dtype=object))
    if not smooth.is_taylor(h11) or h11.order == 0:
        return 0.0, h11
    return h11.d(0) / h11 * 0.5, h11


def semispray_p1(lagrangian: ScalarField, h: MetricField) -> tuple:
    """Semispray coefficients Gⁱ(t, x, y) of a p = 1 Lagrangian as scalar fields.

    Gⁱ = (gⁱᵏ/4)[∂²L/∂xʰ∂yᵏ yʰ - ∂L/∂xᵏ + ∂²L/∂t∂yᵏ + ∂L/∂xᵏ H¹₁₁ + 2h¹¹H¹₁₁ g_kl yˡ]
    with g = ½∂²L/∂y∂y.
    """
    p, n = h.dims
    if p != 1:
        raise WrongArity(f'the semispray construction needs p = 1, got p={p}')
    layout = Layout(1, n)
    xs = [layout.index('x', k) for k in range(n)]
    ys = [layout.index('v', k, 0) for k in range(n)]

    @lru_cache(maxsize=64)
    def coefficients(values, order):
        local = _local_jet(lagrangian, values, order + 2)
        seeds = smooth.seed(values, order + 2)
        y = [seeds[idx] for idx in ys]
        if not smooth.is_taylor(local):
            return (0.0,) * n
        big_h, h11 = _temporal_christoffel_jet(h, seeds[0])
        lx = [local.d(idx) for idx in xs]
        ly = [local.d(idx) for idx in ys]
        g = np.array([[ly[k].d(ys[l]) * 0.5 for l in range(n)] for k in range(n)], dtype=object)
        g_inv = invert(g, f'values={list(values)}')
        bracket = []
        for k in range(n):
            total = ly[k].d(0) - lx[k] + lx[k] * big_h
            for m in range(n):
                total = total + ly[k].d(xs[m]) * y[m] + g[k, m] * y[m] * big_h * 2 / h11
            bracket.append(total)
        return tuple(_truncate(sum(g_inv[i, k] * bracket[k] for k in range(n)) * 0.25, order) for i in range(n))

    return tuple(ScalarField.from_jet(lambda values, order, i=i: coefficients(values, order)[i], layout,
                                      f'G{i + 1}') for i in range(n))


def _truncate(u, order):
    return u.truncate(order) if smooth.is_taylor(u) else u


def fiber_derivative(field_: ScalarField, i, a) -> ScalarField:
    """∂field/∂xⁱ_ᵅ as a field on the same layout."""
    layout = field_.layout
    index = layout.index('v', i, a)

    def jet(values, order):
        local = _local_jet(field_, values, order + 1)
        return local.d(index) if smooth.is_taylor(local) else 0.0

    return ScalarField.from_jet(jet, layout, f'd{field_.label}/dv{i + 1}{a + 1}')


def canonical_ml_p1(lagrangian: ScalarField, h: MetricField) -> NonlinearConnection:
    """N⁽ⁱ⁾₍₁₎ⱼ = ∂Gⁱ/∂yʲ and M⁽ⁱ⁾₍₁₎₁ = -H¹₁₁xⁱ₁."""
    semispray = semispray_p1(lagrangian, h)
    n = len(semispray)
    slopes = [[fiber_derivative(semispray[i], j, 0) for j in range(n)] for i in range(n)]

    def spatial(jp):
        out = np.empty((n, 1, n), dtype=object)
        for i in range(n):
            for j in range(n):
                out[i, 0, j] = slopes[i][j](t=jp.t, x=jp.x, v=jp.v)
        return out

    logger.debug('ML connection from a p=1 Lagrangian (n=%d)', n)
    return NonlinearConnection((1, n), lambda jp: _temporal_components(h, jp), spatial, Provenance.ML_P1,
                               label='ML-p1')


# -- GML ------------------------------------------------------------------------------

def energy_lagrangian(G: FundamentalVerticalMetric) -> ScalarField:
    """E_G = G⁽μ⁾⁽ν⁾₍m₎₍r₎ xᵐ_μ xʳ_ν."""
    p, n = G.dims

    def evaluate(t, x, v):
        g = G(JetPoint(t, x, v))
        v = np.asarray(v, dtype=object).reshape(n, p)
        total = 0.0
        for mu in range(p):
            for nu in range(p):
                for m in range(n):
                    for r in range(n):
                        total = total + g[mu, nu, m, r] * v[m, mu] * v[r, nu]
        return total

    return ScalarField(evaluate, Layout(p, n), label=f'E[{G.label}]')


@dataclass(frozen=True)
class PsiRegular:
    """Accepted decomposition E = ψᵅᵝε_ij xⁱ_ᵅxʲ_β + U⁽ᵅ⁾₍ᵢ₎xⁱ_ᵅ + F."""

    eps: MetricField
    U: tuple
    F: ScalarField
    residual_quadratic: float
    residual_product: float


def fiber_expansion(energy: ScalarField, t, x) -> tuple:
    """(E, ∂E/∂v, ∂²E/∂v∂v) at the zero section over (t, x), fiber indices i-major."""
    layout = energy.layout
    p, n = layout.p, layout.n
    fiber = list(layout.span('v'))
    expansion = smooth.eval_derivatives(energy, layout.join(t=t, x=x, v=np.zeros((n, p))), 2)
    return expansion.value, expansion.gradient()[fiber], expansion.hessian()[np.ix_(fiber, fiber)]


def quadratic_defect(energy: ScalarField, t, x, w, expansion=None) -> float:
    """|E(w) - second-order fiber Taylor model of E at w|, relative to max(1, |E(w)|)."""
    f0, grad, hess = expansion or fiber_expansion(energy, t, x)
    flat_w = np.asarray(w, dtype=float).ravel()
    exact = smooth.value_of(energy(t=t, x=x, v=np.asarray(w, dtype=float)))
    model = f0 + grad @ flat_w + 0.5 * flat_w @ hess @ flat_w
    return float(abs(exact - model) / max(1.0, abs(exact)))


def psi_regularity(energy: ScalarField, psi: MetricField, samples, tol=1e-9, seed=0, workers=1) -> PsiRegular:
    """Decompose ``energy`` at each sample base point and certify the Kronecker ψ-regular form."""
    p, n = psi.dims
    full = Layout(p, n)
    rng = np.random.default_rng(seed)
    samples = list(samples)
    if not samples:
        raise ConfigError('the psi-regularity test needs at least one sample point', 'samples')
    directions = [[rng.uniform(-1.0, 1.0, size=(n, p)) * s for s in PSI_OFFSETS] for _ in samples]

    def probe(item):
        jp, offsets = item
        t, x = _values(jp)
        expansion = fiber_expansion(energy, t, x)
        hess = expansion[2]
        quad_a = max(quadratic_defect(energy, t, x, w, expansion) for w in offsets)
        # Q[α, β, i, j] from the i-major fiber Hessian
        q = 0.5 * hess.reshape(n, p, n, p).transpose(1, 3, 0, 2)
        psi_values = psi.at(jp)
        check_nondegenerate(psi_values, repr(jp))
        factor, product, scale = kronecker_residual(q, psi_values)
        rank = int(np.linalg.matrix_rank(factor)) if n else 0
        return quad_a, product, scale, rank, jp

    worst_a = worst_b = 0.0
    for quad_a, product, scale, rank, jp in sweep(probe, list(zip(samples, directions)), workers):
        if quad_a > tol:
            logger.info('energy is not quadratic in the fibers at %r (residual %.3e)', jp, quad_a)
            raise NotRegular(quad_a, repr(jp), clause='a: non-quadratic')
        if product > tol * max(scale, 1.0):
            logger.info('quadratic part does not factor through psi at %r (residual %.3e)', jp, product)
            raise NotRegular(product, repr(jp), clause='b: non-product')
        if rank < n:
            raise DegenerateFactor(rank, n, repr(jp))
        worst_a, worst_b = max(worst_a, quad_a), max(worst_b, product)

    base = Layout(p, n, ('t', 'x'))
    keep = tuple(range(p + n))

    @lru_cache(maxsize=64)
    def decomposition(values, order):
        seeds = smooth.seed(tuple(values) + (0.0,) * (n * p), order + 2)
        parts = full.split(np.array(seeds, dtype=object))
        e = energy(**parts)
        if not smooth.is_taylor(e):
            e = smooth.TaylorScalar.constant(float(e), full.size, order + 2)
        psi_matrix = psi.matrix(t=parts['t'])
        eps = np.empty((n, n), dtype=object)
        for i in range(n):
            for j in range(n):
                total = 0.0
                for a in range(p):
                    for b in range(p):
                        second = e.d(full.index('v', i, a)).d(full.index('v', j, b)) * 0.5
                        total = total + psi_matrix[a, b] * second
                eps[i, j] = _restrict(total / p, keep, order)
        u = [[_restrict(e.d(full.index('v', i, a)), keep, order) for i in range(n)] for a in range(p)]
        return eps, u, _restrict(e, keep, order)

    eps_fields = [[ScalarField.from_jet(lambda values, order, i=i, j=j: decomposition(values, order)[0][i, j],
                                        base, f'eps[{i + 1},{j + 1}]') for j in range(n)] for i in range(n)]
    u_fields = tuple(tuple(ScalarField.from_jet(lambda values, order, a=a, i=i: decomposition(values, order)[1][a][i],
                                                base, f'U[{a + 1},{i + 1}]') for i in range(n)) for a in range(p))
    f_field = ScalarField.from_jet(lambda values, order: decomposition(values, order)[2], base, 'F')
    eps = MetricField.from_fields('parametric', (p, n), eps_fields, label='eps')
    logger.debug('energy is Kronecker psi-regular (residuals %.3e, %.3e)', worst_a, worst_b)
    return PsiRegular(eps, u_fields, f_field, worst_a, worst_b)


def _restrict(u, keep, order):
    if not smooth.is_taylor(u):
        return u
    return u.restrict(keep).truncate(order)


def _gml_regular_spatial(eps: MetricField, jp: JetPoint) -> np.ndarray:
    """Ψⁱⱼₘxᵐ_ᵅ + (εⁱᵐ/2)∂ε_jm/∂tᵅ."""
    t, x = _values(jp)
    values, dt = eps.derivatives('t', t=t, x=x)
    check_nondegenerate(values, repr(jp))
    eps_inv = np.linalg.inv(values)
    term = _christoffel_term(christoffel_parametric(eps, t, x).c, jp)
    return term + 0.5 * np.einsum('im,jma->iaj', eps_inv, dt)


def canonical_gml(G: FundamentalVerticalMetric, h: MetricField, psi: MetricField = None, fallback: MetricField = None,
                  samples=(), tol=1e-9, seed=0, workers=1) -> NonlinearConnection:
    """Γ_G: temporal part from h; spatial part from ψ-regularity of E_G, else from ``fallback``."""
    psi = psi or h

    def temporal(jp):
        return _temporal_components(h, jp)

    try:
        regular = psi_regularity(energy_lagrangian(G), psi, samples, tol, seed=seed, workers=workers)
    except (NotRegular, DegenerateFactor) as error:
        if fallback is None:
            raise NoSpatialComponents(str(error)) from error
        logger.info('falling back to the a-priori spatial components of %s', fallback.label or 'phi')

        def spatial(jp):
            _, x = _values(jp)
            return _christoffel_term(christoffel(fallback, x=x).c, jp)

        return NonlinearConnection(h.dims, temporal, spatial, Provenance.GML_APRIORI, label='GML-apriori')
    eps = regular.eps
    return NonlinearConnection(h.dims, temporal, lambda jp: _gml_regular_spatial(eps, jp), Provenance.GML_REGULAR,
                               label='GML-regular')


# -- user connections -------------------------------------------------------------------

def user_connection(dims, temporal_sources, spatial_sources) -> NonlinearConnection:
    """Connection whose M[i][α][β] and N[i][α][j] are expression strings."""
    p, n = dims
    layout = Layout(p, n)

    def compile_array(sources, shape, path):
        array = np.asarray(sources, dtype=object)
        if array.shape != shape:
            raise ConfigError(f'expected an array of shape {shape}, got {array.shape}', path)
        return np.vectorize(lambda s: exprlang.compile_field(str(s), layout), otypes=[object])(array)

    m_fields = compile_array(temporal_sources, (n, p, p), 'connection.M')
    n_fields = compile_array(spatial_sources, (n, p, n), 'connection.N')

    def evaluate(fields):
        def run(jp):
            out = np.empty(fields.shape, dtype=object)
            for index, f in np.ndenumerate(fields):
                out[index] = f(t=jp.t, x=jp.x, v=jp.v)
            return out
        return run

    return NonlinearConnection((p, n), evaluate(m_fields), evaluate(n_fields), Provenance.USER, label='user')


# -- checks -------------------------------------------------------------------------------

def _fiber_seeded(jp: JetPoint, order):
    n, p = jp.v.shape
    seeds = smooth.seed(smooth.values_of(jp.v).ravel(), order)
    t, x = _values(jp)
    return JetPoint(t, x, np.array(seeds, dtype=object).reshape(n, p))


def _fiber_jacobian(array, nvars, order=1) -> np.ndarray:
    """Stack of fiber derivatives: shape array.shape + (nvars,) * order."""
    out = np.zeros(array.shape + (nvars,) * order)
    for index, u in np.ndenumerate(array):
        if smooth.is_taylor(u):
            out[index] = u.gradient() if order == 1 else u.hessian()
    return out


def _max_result(name, results, tol) -> CheckResult:
    worst, location = 0.0, None
    for value, point in results:
        if location is None or value > worst:
            worst, location = value, point
    return CheckResult(name, worst <= tol, float(worst), location.to_dict() if location is not None else None, tol)


def torsion_free_check(connection: NonlinearConnection, samples, tol=1e-10, workers=1) -> CheckResult:
    """max |∂N⁽ⁱ⁾₍ᵅ₎ⱼ/∂xᵏ_γ - ∂N⁽ⁱ⁾₍ᵅ₎ₖ/∂xʲ_γ| over the samples."""
    p, n = connection.dims

    def probe(jp):
        seeded = _fiber_seeded(jp, 1)
        d = _fiber_jacobian(connection.spatial(seeded), n * p).reshape(n, p, n, n, p)
        return float(np.max(np.abs(d - d.transpose(0, 1, 3, 2, 4)))), jp

    return _max_result('torsion', sweep(probe, samples, workers), tol)


def affinity_check(connection: NonlinearConnection, samples, tol=1e-10, workers=1) -> CheckResult:
    """max |∂²N/∂v∂v|; zero iff the spatial components are affine in the fibers."""
    p, n = connection.dims

    def probe(jp):
        seeded = _fiber_seeded(jp, 2)
        d = _fiber_jacobian(connection.spatial(seeded), n * p, order=2)
        return float(np.max(np.abs(d))) if d.size else 0.0, jp

    return _max_result('affinity', sweep(probe, samples, workers), tol)


def naturality_check(connection: NonlinearConnection, direct: NonlinearConnection, change, samples, tol=1e-8,
                     workers=1) -> CheckResult:
    """Compare the transformed coefficients with ``direct`` built from pushed-forward inputs."""

    def probe(jp):
        point, m_new, n_new = transform_connection(connection, change, jp)
        m_direct = smooth.values_of(direct.temporal(point))
        n_direct = smooth.values_of(direct.spatial(point))
        gap = max(np.max(np.abs(m_new - m_direct), initial=0.0), np.max(np.abs(n_new - n_direct), initial=0.0))
        return float(gap), jp

    return _max_result('naturality', sweep(probe, samples, workers), tol)


def group_action_check(connection: NonlinearConnection, change, samples, tol=1e-9, workers=1) -> CheckResult:
    """Transform by ``change`` then by its inverse; the coefficients must come back."""

    def probe(jp):
        m0, n0 = (smooth.values_of(c) for c in connection.coefficients(jp))
        point, m1, n1 = transform_connection(connection, change, jp)
        frozen = NonlinearConnection(connection.dims, lambda _: m1, lambda _: n1, connection.provenance)
        _, m2, n2 = transform_connection(frozen, change.inverse(), point)
        return float(max(np.max(np.abs(m2 - m0)), np.max(np.abs(n2 - n0)))), jp

    return _max_result('group-action', sweep(probe, samples, workers), tol)
