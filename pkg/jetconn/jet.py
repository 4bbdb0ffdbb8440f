"""Points of J¹(T,M), product coordinate changes and the transformation laws they induce."""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from jetconn import exprlang, smooth
from jetconn.errors import ConfigError, SingularJacobian
from jetconn.geometry import MetricField
from jetconn.smooth import Layout, ScalarField

logger = logging.getLogger(__name__)

JACOBIAN_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class JetPoint:
    """(tᵅ, xⁱ, xⁱ_ᵅ) with ``v[i, a]`` the partial velocity xⁱ_ᵅ."""

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        t = smooth.as_array(np.asarray(self.t, dtype=object).ravel())
        x = smooth.as_array(np.asarray(self.x, dtype=object).ravel())
        v = np.asarray(self.v, dtype=object)
        p, n = len(t), len(x)
        if v.size != n * p:
            raise smooth.DimensionError(f'v has {v.size} entries, expected n*p = {n}*{p}')
        v = smooth.as_array(v.reshape(n, p))
        for name, block in (('t', t), ('x', x), ('v', v)):
            if block.dtype != object and not np.all(np.isfinite(block)):
                raise smooth.DimensionError(f'jet point has non-finite {name} entries')
        object.__setattr__(self, 't', t)
        object.__setattr__(self, 'x', x)
        object.__setattr__(self, 'v', v)

    @property
    def p(self) -> int:
        return len(self.t)

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def dims(self) -> tuple:
        return self.p, self.n

    def flat(self) -> list:
        return Layout(self.p, self.n).join(t=self.t, x=self.x, v=self.v)

    @classmethod
    def from_flat(cls, vector, p, n):
        parts = Layout(p, n).split(vector)
        return cls(parts['t'], parts['x'], parts['v'])

    def with_v(self, v) -> 'JetPoint':
        return JetPoint(self.t, self.x, v)

    def values(self) -> 'JetPoint':
        return JetPoint(smooth.values_of(self.t), smooth.values_of(self.x), smooth.values_of(self.v))

    def to_dict(self) -> dict:
        point = self.values()
        return {'t': point.t.tolist(), 'x': point.x.tolist(), 'v': point.v.tolist()}

    def __repr__(self):
        return f'JetPoint(t={self.t.tolist()}, x={self.x.tolist()}, v={self.v.tolist()})'


def sample_box(rng: np.random.Generator, dims, count, t_box=(-1.0, 1.0), x_box=(-1.0, 1.0),
               v_box=(-1.0, 1.0)) -> list:
    """``count`` jet points drawn uniformly from a coordinate box."""
    p, n = dims
    points = []
    for _ in range(count):
        t = rng.uniform(*t_box, size=p)
        x = rng.uniform(*x_box, size=n)
        v = rng.uniform(*v_box, size=(n, p))
        points.append(JetPoint(t, x, v))
    return points


def sweep(fn, items, workers=1) -> list:
    """``[fn(item) for item in items]``, fanned out over a thread pool, results in input order."""
    items = list(items)
    if workers is None or workers <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# -- coordinate changes ---------------------------------------------------------

def _apply(maps, block, args) -> np.ndarray:
    return np.array([f(**{block: args}) for f in maps], dtype=object)


def _jacobian(images, offset, size) -> np.ndarray:
    jac = np.empty((len(images), size), dtype=object)
    for a, u in enumerate(images):
        for b in range(size):
            jac[a, b] = u.d(offset + b) if smooth.is_taylor(u) else 0.0
    return jac


def _check_jacobian(values, which, where):
    values = np.asarray(values, dtype=float)
    d = values.shape[0]
    scale = np.max(np.abs(values))
    det = np.linalg.det(values)
    if scale == 0.0 or not np.isfinite(det) or abs(det) < JACOBIAN_TOLERANCE * scale ** d:
        raise SingularJacobian(which, where)


@dataclass(frozen=True)
class CoordinateChange:
    """Product change t̃ = t̃(t), x̃ = x̃(x) with declared inverse maps."""

    dims: tuple
    temporal: tuple
    temporal_inverse: tuple
    spatial: tuple
    spatial_inverse: tuple
    label: str = field(default='', compare=False)

    def __post_init__(self):
        p, n = self.dims
        if len(self.temporal) != p or len(self.temporal_inverse) != p:
            raise smooth.DimensionError(f'temporal change needs {p} component maps each way')
        if len(self.spatial) != n or len(self.spatial_inverse) != n:
            raise smooth.DimensionError(f'spatial change needs {n} component maps each way')

    @classmethod
    def identity(cls, dims):
        p, n = dims
        t_layout = Layout(p, n, ('t',))
        x_layout = Layout(p, n, ('x',))
        temporal = tuple(ScalarField(lambda t, a=a: t[a], t_layout, f't{a + 1}') for a in range(p))
        spatial = tuple(ScalarField(lambda x, i=i: x[i], x_layout, f'x{i + 1}') for i in range(n))
        return cls(tuple(dims), temporal, temporal, spatial, spatial, 'identity')

    @classmethod
    def from_exprs(cls, dims, temporal=None, temporal_inverse=None, spatial=None, spatial_inverse=None,
                   path='change'):
        """Build a change from expression lists; an omitted factor is the identity."""
        p, n = dims
        base = cls.identity(dims)

        def compile_maps(sources, block, count, key, fallback):
            if sources is None:
                return fallback
            if len(sources) != count:
                raise ConfigError(f'expected {count} expressions', f'{path}.{key}')
            layout = Layout(p, n, (block,))
            return tuple(exprlang.compile_field(str(s), layout) for s in sources)

        if (temporal is None) != (temporal_inverse is None) or (spatial is None) != (spatial_inverse is None):
            raise ConfigError('every map needs a declared inverse', path)
        return cls(
            tuple(dims),
            compile_maps(temporal, 't', p, 'temporal', base.temporal),
            compile_maps(temporal_inverse, 't', p, 'temporal_inverse', base.temporal_inverse),
            compile_maps(spatial, 'x', n, 'spatial', base.spatial),
            compile_maps(spatial_inverse, 'x', n, 'spatial_inverse', base.spatial_inverse),
            label=path,
        )

    def inverse(self) -> 'CoordinateChange':
        return CoordinateChange(self.dims, self.temporal_inverse, self.temporal,
                                self.spatial_inverse, self.spatial, f'({self.label})^-1')

    def compose(self, first: 'CoordinateChange') -> 'CoordinateChange':
        """The change ``self ∘ first`` (apply ``first``, then ``self``)."""
        if tuple(first.dims) != tuple(self.dims):
            raise smooth.DimensionError('cannot compose changes of different dimensions')

        def chain(outer, inner, block):
            layout = inner[0].layout
            return tuple(ScalarField(lambda f=f, **parts: f(**{block: _apply(inner, block, parts[block])}),
                                     layout, f.label) for f in outer)

        return CoordinateChange(
            self.dims,
            chain(self.temporal, first.temporal, 't'),
            chain(first.temporal_inverse, self.temporal_inverse, 't'),
            chain(self.spatial, first.spatial, 'x'),
            chain(first.spatial_inverse, self.spatial_inverse, 'x'),
            label=f'{self.label}∘{first.label}',
        )

    def map_t(self, t) -> np.ndarray:
        return smooth.as_array(_apply(self.temporal, 't', t))

    def map_x(self, x) -> np.ndarray:
        return smooth.as_array(_apply(self.spatial, 'x', x))

    def temporal_jacobian(self, t) -> np.ndarray:
        """A[a, b] = ∂t̃ᵃ/∂tᵇ at a float point."""
        images = _apply(self.temporal, 't', smooth.seed(t, 1))
        return smooth.values_of(_jacobian(images, 0, len(t)))

    def spatial_jacobian(self, x) -> np.ndarray:
        images = _apply(self.spatial, 'x', smooth.seed(x, 1))
        return smooth.values_of(_jacobian(images, 0, len(x)))

    def round_trip_error(self, points) -> float:
        """Largest coordinate gap of inverse∘forward and forward∘inverse over ``points``."""
        worst = 0.0
        for point in points:
            t = smooth.values_of(point.t)
            x = smooth.values_of(point.x)
            back_t = smooth.values_of(_apply(self.temporal_inverse, 't', self.map_t(t)))
            back_x = smooth.values_of(_apply(self.spatial_inverse, 'x', self.map_x(x)))
            there_t = smooth.values_of(_apply(self.temporal, 't', _apply(self.temporal_inverse, 't', t)))
            there_x = smooth.values_of(_apply(self.spatial, 'x', _apply(self.spatial_inverse, 'x', x)))
            worst = max(worst, *np.abs(back_t - t), *np.abs(back_x - x),
                        *np.abs(there_t - t), *np.abs(there_x - x))
        return float(worst)


def prolong(change: CoordinateChange, jp: JetPoint) -> JetPoint:
    """x̃ⁱ_ᵅ = (∂x̃ⁱ/∂xʲ)(∂tᵝ/∂t̃ᵅ)xʲ_β."""
    t = smooth.values_of(jp.t)
    x = smooth.values_of(jp.x)
    where = repr(jp.values())
    a = change.temporal_jacobian(t)
    j = change.spatial_jacobian(x)
    _check_jacobian(a, 'temporal', where)
    _check_jacobian(j, 'spatial', where)
    v = np.dot(np.dot(j, jp.v), np.linalg.inv(a))
    return JetPoint(change.map_t(t), change.map_x(x), v)


def _velocity_jet(change, t, x, v):
    """ṽ = J v A⁻¹ as Taylor scalars over the seeds (t, x), plus the float Jacobians."""
    p, n = len(t), len(x)
    seeds = smooth.seed(np.concatenate([t, x]), 2)
    t_images = _apply(change.temporal, 't', np.array(seeds[:p], dtype=object))
    x_images = _apply(change.spatial, 'x', np.array(seeds[p:], dtype=object))
    a = _jacobian(t_images, 0, p)
    j = _jacobian(x_images, p, n)
    a_values = smooth.values_of(a)
    j_values = smooth.values_of(j)
    return np.dot(np.dot(j, v), smooth.inv(a)), a_values, j_values


def _partial(u, k):
    return u.partial(k) if smooth.is_taylor(u) else 0.0


def transform_connection(connection, change: CoordinateChange, jp: JetPoint):
    """Coefficients of ``connection`` in the new coordinates, at ``prolong(change, jp)``.

    Returns ``(point, M̃, Ñ)`` with M̃ shaped (n, p, p) and Ñ shaped (n, p, n).
    """
    t = smooth.values_of(jp.t)
    x = smooth.values_of(jp.x)
    v = smooth.values_of(jp.v)
    p, n = len(t), len(x)
    where = repr(jp)
    velocity, a, j = _velocity_jet(change, t, x, v.astype(object))
    _check_jacobian(a, 'temporal', where)
    _check_jacobian(j, 'spatial', where)
    a_inv = np.linalg.inv(a)
    j_inv = np.linalg.inv(j)
    d_dt = np.array([[[_partial(velocity[k, b], al) for al in range(p)] for b in range(p)] for k in range(n)])
    d_dx = np.array([[[_partial(velocity[k, b], p + i) for i in range(n)] for b in range(p)] for k in range(n)])

    point = JetPoint(t, x, v)
    m = smooth.values_of(connection.temporal(point))
    nn = smooth.values_of(connection.spatial(point))
    # R[j, b, a] = M[k, c, a] J[j, k] A⁻¹[c, b] - ∂ṽ[j, b]/∂tᵃ
    r = np.einsum('kca,jk,cb->jba', m, j, a_inv) - d_dt
    m_new = np.einsum('jba,am->jbm', r, a_inv)
    s = np.einsum('kci,jk,cb->jbi', nn, j, a_inv) - d_dx
    n_new = np.einsum('jbi,ik->jbk', s, j_inv)
    return prolong(change, point), m_new, n_new


# -- pushforwards ------------------------------------------------------------------
#
# A pushed field is evaluated in the new coordinates: its local jet seeds the new
# coordinates one order above the request, pulls back through the inverse maps and
# differentiates them for the Jacobians.

def _inverse_frame(change, layout, parts):
    """Original coordinates and the inverse Jacobians ∂t/∂t̃, ∂x/∂x̃ as Taylor scalars."""
    t = x = b = k = None
    if 't' in parts:
        t = _apply(change.temporal_inverse, 't', parts['t'])
        b = _jacobian(t, layout.offset('t'), layout.p)
    if 'x' in parts:
        x = _apply(change.spatial_inverse, 'x', parts['x'])
        k = _jacobian(x, layout.offset('x'), layout.n)
    return t, x, b, k


def _metric_jet(metric: MetricField, change: CoordinateChange):
    p, n = metric.dims
    blocks = metric.layout.blocks

    @lru_cache(maxsize=64)
    def matrix(values, order):
        seeds = np.array(smooth.seed(values, order + 1), dtype=object)
        layout = metric.layout
        parts = layout.split(seeds)
        t, x, b, k = _inverse_frame(change, layout, parts)
        original = metric.matrix(t=t, x=x)
        frame = b if metric.kind == 'temporal' else k
        pushed = np.dot(np.dot(frame.T, original), frame)
        return tuple(tuple(_lower(u, order) for u in row) for row in pushed)

    return matrix, Layout(p, n, blocks)


def _lower(u, order):
    return u.truncate(order) if smooth.is_taylor(u) else u


def _push_metric(metric: MetricField, change: CoordinateChange) -> MetricField:
    matrix, layout = _metric_jet(metric, change)
    d = metric.size
    fields = [[None] * d for _ in range(d)]
    for a in range(d):
        for c in range(a, d):
            fields[a][c] = ScalarField.from_jet(lambda values, order, a=a, c=c: matrix(values, order)[a][c],
                                                layout, f'pushed {metric.label}[{a + 1},{c + 1}]')
    return MetricField.from_fields(metric.kind, metric.dims, fields, f'pushed {metric.label}')


def push_temporal_metric(h: MetricField, change: CoordinateChange) -> MetricField:
    """h̃ = (∂t/∂t̃)ᵀ h (∂t/∂t̃) as a field of t̃."""
    if h.kind != 'temporal':
        raise ConfigError(f'expected a temporal metric, got {h.kind}')
    return _push_metric(h, change)


def push_spatial_metric(phi: MetricField, change: CoordinateChange) -> MetricField:
    if phi.kind != 'spatial':
        raise ConfigError(f'expected a spatial metric, got {phi.kind}')
    return _push_metric(phi, change)


def push_parametric_metric(eps: MetricField, change: CoordinateChange) -> MetricField:
    """ε̃(t̃, x̃) = (∂x/∂x̃)ᵀ ε(t, x) (∂x/∂x̃)."""
    if eps.kind != 'parametric':
        raise ConfigError(f'expected a parametric metric, got {eps.kind}')
    return _push_metric(eps, change)


def push_scalar(field_: ScalarField, change: CoordinateChange) -> ScalarField:
    """F̃(t̃, x̃) = F(t(t̃), x(x̃)) for a field on (t, x)."""
    layout = field_.layout
    if 'v' in layout.blocks:
        raise ConfigError('use push_lagrangian for fields on the fibers')

    def jet(values, order):
        seeds = np.array(smooth.seed(values, max(order, 1)), dtype=object)
        parts = layout.split(seeds)
        t, x, _, _ = _inverse_frame(change, layout, parts)
        u = field_(t=t, x=x)
        return _lower(u, order)

    return ScalarField.from_jet(jet, layout, f'pushed {field_.label}')


def push_covector(u_fields, change: CoordinateChange, dims) -> tuple:
    """Ũ⁽ᵝ⁾₍ⱼ₎ = U⁽ᵅ⁾₍ᵢ₎ (∂xⁱ/∂x̃ʲ)(∂t̃ᵝ/∂tᵅ) for a (p, n) array of fields on (t, x)."""
    p, n = dims
    layout = Layout(p, n, ('t', 'x'))

    @lru_cache(maxsize=64)
    def covector(values, order):
        seeds = np.array(smooth.seed(values, order + 1), dtype=object)
        parts = layout.split(seeds)
        t, x, b, k = _inverse_frame(change, layout, parts)
        a = smooth.inv(b)
        original = np.array([[u_fields[al][i](t=t, x=x) for i in range(n)] for al in range(p)], dtype=object)
        # Ũ[be, j] = U[al, i] K[i, j] A[be, al]
        pushed = np.dot(np.dot(a, original), k)
        return tuple(tuple(_lower(u, order) for u in row) for row in pushed)

    return tuple(tuple(ScalarField.from_jet(lambda values, order, al=al, i=i: covector(values, order)[al][i],
                                            layout, f'pushed U[{al + 1},{i + 1}]')
                       for i in range(n)) for al in range(p))


def push_lagrangian(lagrangian: ScalarField, change: CoordinateChange) -> ScalarField:
    """L̃(t̃, x̃, ṽ) = L(t, x, v) with v = (∂x/∂x̃) ṽ (∂t̃/∂t)."""
    layout = lagrangian.layout
    p, n = layout.p, layout.n
    full = Layout(p, n)

    def jet(values, order):
        seeds = np.array(smooth.seed(values, order + 1), dtype=object)
        parts = full.split(seeds)
        t, x, b, k = _inverse_frame(change, full, parts)
        v = np.dot(np.dot(k, parts['v']), smooth.inv(b))
        return _lower(lagrangian(t=t, x=x, v=v), order)

    return ScalarField.from_jet(jet, full, f'pushed {lagrangian.label}')
