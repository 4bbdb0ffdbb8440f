"""Semi-Riemannian metric fields on T, M, T×M and J¹(T,M) and their Christoffel symbols."""
import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from jetconn import exprlang, smooth
from jetconn.errors import ConfigError, NonconstantSignature, SingularMetric
from jetconn.smooth import Layout, ScalarField

logger = logging.getLogger(__name__)

DET_TOLERANCE = 1e-12
INVERSE_RESIDUAL = 1e-10

KIND_BLOCKS = {
    'temporal': ('t',),
    'spatial': ('x',),
    'parametric': ('t', 'x'),
    'fiber': ('t', 'x', 'v'),
}


class SignatureKind(enum.Enum):
    RIEMANNIAN = 'riemannian'
    LORENTZIAN = 'lorentzian'
    ANTI_LORENTZIAN = 'anti-lorentzian'
    INDEFINITE = 'indefinite'


@dataclass(frozen=True)
class MetricField:
    """Symmetric matrix of scalar fields; entry (a, b) and (b, a) are the same object."""

    kind: str
    dims: tuple
    components: tuple
    label: str = field(default='', compare=False)

    def __post_init__(self):
        if self.kind not in KIND_BLOCKS:
            raise ConfigError(f'unknown metric kind {self.kind!r}')
        d = self.size
        if len(self.components) != d or any(len(row) != d for row in self.components):
            raise smooth.DimensionError(f'{self.kind} metric needs a {d}x{d} component array')
        for a in range(d):
            for b in range(a):
                if self.components[a][b] is not self.components[b][a]:
                    raise ConfigError(f'{self.kind} metric components ({a + 1},{b + 1}) and '
                                      f'({b + 1},{a + 1}) must be the same field')

    @property
    def p(self):
        return self.dims[0]

    @property
    def n(self):
        return self.dims[1]

    @property
    def size(self) -> int:
        return self.dims[0] if self.kind == 'temporal' else self.dims[1]

    @property
    def layout(self) -> Layout:
        return Layout(self.p, self.n, KIND_BLOCKS[self.kind])

    # -- construction ------------------------------------------------------

    @classmethod
    def from_fields(cls, kind, dims, fields, label=''):
        d = dims[0] if kind == 'temporal' else dims[1]
        rows = [[None] * d for _ in range(d)]
        for a in range(d):
            for b in range(a, d):
                rows[a][b] = rows[b][a] = fields[a][b]
        return cls(kind, tuple(dims), tuple(tuple(row) for row in rows), label)

    @classmethod
    def from_exprs(cls, kind, dims, sources, path=None):
        """Parse a d×d matrix of expression strings; the lower triangle must repeat the upper one."""
        layout = Layout(dims[0], dims[1], KIND_BLOCKS[kind])
        d = dims[0] if kind == 'temporal' else dims[1]
        if len(sources) != d or any(len(row) != d for row in sources):
            raise ConfigError(f'expected a {d}x{d} matrix of expressions', path)
        fields = [[None] * d for _ in range(d)]
        for a in range(d):
            for b in range(a, d):
                upper = exprlang.parse(str(sources[a][b]), dims)
                lower = exprlang.parse(str(sources[b][a]), dims)
                if upper != lower:
                    raise ConfigError(f'matrix is not symmetric at ({a + 1},{b + 1})', path)
                fields[a][b] = exprlang.to_field(upper, layout, str(sources[a][b]))
        return cls.from_fields(kind, dims, fields, label=path or '')

    @classmethod
    def constant(cls, kind, dims, matrix, label=''):
        matrix = np.asarray(matrix, dtype=float)
        layout = Layout(dims[0], dims[1], KIND_BLOCKS[kind])
        d = matrix.shape[0]
        fields = [[ScalarField.constant(matrix[a, b], layout) if b >= a else None for b in range(d)]
                  for a in range(d)]
        return cls.from_fields(kind, dims, fields, label)

    @classmethod
    def identity(cls, kind, dims):
        d = dims[0] if kind == 'temporal' else dims[1]
        return cls.constant(kind, dims, np.eye(d), label='identity')

    # -- evaluation --------------------------------------------------------

    def matrix(self, t=None, x=None, v=None) -> np.ndarray:
        """Component matrix; entries are Taylor scalars when any argument is."""
        d = self.size
        entries = np.empty((d, d), dtype=object)
        for a in range(d):
            for b in range(a, d):
                entries[a, b] = entries[b, a] = self.components[a][b](t=t, x=x, v=v)
        return smooth.as_array(entries)

    def at(self, point) -> np.ndarray:
        return smooth.values_of(self.matrix(t=point.t, x=point.x, v=point.v))

    def derivatives(self, block, t=None, x=None, v=None):
        """Values and first partials along ``block`` at a float point: (m[a,b], dm[a,b,k])."""
        parts = {'t': t, 'x': x, 'v': v}
        base = np.asarray(parts[block], dtype=float)
        seeds = smooth.seed(base.ravel(), 1)
        parts[block] = np.array(seeds, dtype=object).reshape(base.shape)
        entries = self.matrix(**parts)
        d, k = self.size, base.size
        values = np.empty((d, d))
        grad = np.zeros((d, d, k))
        for a in range(d):
            for b in range(d):
                u = entries[a, b]
                if smooth.is_taylor(u):
                    values[a, b] = u.value
                    grad[a, b] = u.gradient()
                else:
                    values[a, b] = float(u)
        return values, grad


def _where(t=None, x=None, v=None):
    parts = []
    for name, block in (('t', t), ('x', x), ('v', v)):
        if block is not None:
            parts.append(f'{name}={np.round(smooth.values_of(block), 12).tolist()}')
    return ', '.join(parts)


def check_nondegenerate(values: np.ndarray, where=None) -> float:
    """Determinant of ``values``; SingularMetric if |det| < 1e-12·(max|entry|)^d."""
    values = np.asarray(values, dtype=float)
    d = values.shape[0]
    scale = np.max(np.abs(values)) if values.size else 0.0
    det = float(np.linalg.det(values))
    if scale == 0.0 or not np.isfinite(det) or abs(det) < DET_TOLERANCE * scale ** d:
        raise SingularMetric(det, where)
    return det


def invert(matrix, where=None) -> np.ndarray:
    """Inverse of a metric matrix whose entries may be Taylor scalars."""
    check_nondegenerate(smooth.values_of(matrix), where)
    return smooth.inv(matrix)


def inverse_metric(m: MetricField, t=None, x=None, v=None) -> np.ndarray:
    values = smooth.values_of(m.matrix(t=t, x=x, v=v))
    where = _where(t, x, v)
    check_nondegenerate(values, where)
    inverse = np.linalg.inv(values)
    inverse = 0.5 * (inverse + inverse.T)
    residual = np.max(np.abs(values @ inverse - np.eye(m.size)))
    if residual > INVERSE_RESIDUAL:
        logger.debug('inverse residual %.3e at %s', residual, where)
        raise SingularMetric(float(np.linalg.det(values)), where)
    return inverse


@dataclass(frozen=True)
class Christoffel:
    """Symbols c[l, j, k] with the upper index first, symmetric in (j, k)."""

    dim: int
    c: np.ndarray

    def __getitem__(self, index):
        return self.c[index]

    def contract(self, vector) -> np.ndarray:
        """c[l, j, k]·w[k] as an l×j array (entries may be Taylor scalars)."""
        return np.tensordot(self.c, np.asarray(vector, dtype=object), axes=([2], [0]))


def christoffel_from_derivatives(values, grad, where=None) -> Christoffel:
    check_nondegenerate(values, where)
    inverse = np.linalg.inv(values)
    # bracket[i, j, k] = d_k m_ij + d_j m_ik - d_i m_jk
    bracket = grad + grad.transpose(0, 2, 1) - grad.transpose(2, 0, 1)
    bracket = 0.5 * (bracket + bracket.transpose(0, 2, 1))
    c = 0.5 * np.einsum('li,ijk->ljk', inverse, bracket)
    return Christoffel(values.shape[0], c)


def christoffel(m: MetricField, t=None, x=None) -> Christoffel:
    """Christoffel symbols of ``m`` in its own variable block."""
    if m.kind == 'temporal':
        values, grad = m.derivatives('t', t=t)
        return christoffel_from_derivatives(values, grad, _where(t=t))
    if m.kind == 'spatial':
        values, grad = m.derivatives('x', x=x)
        return christoffel_from_derivatives(values, grad, _where(x=x))
    if m.kind == 'parametric':
        return christoffel_parametric(m, t, x)
    raise ConfigError('Christoffel symbols of a fiber-dependent metric are not defined')


def christoffel_parametric(eps: MetricField, t, x) -> Christoffel:
    """Spatial Christoffel symbols of ε(t, x) with t frozen."""
    values, grad = eps.derivatives('x', t=t, x=x)
    return christoffel_from_derivatives(values, grad, _where(t=t, x=x))


def signature(m: MetricField, samples) -> tuple:
    """Eigenvalue sign counts (n_plus, n_minus), required to agree at every sample."""
    samples = list(samples)
    if not samples:
        raise ConfigError('signature needs at least one sample point')
    first = first_point = None
    for point in samples:
        values = m.at(point)
        where = _where(point.t, point.x, point.v)
        check_nondegenerate(values, where)
        eigenvalues = np.linalg.eigvalsh(0.5 * (values + values.T))
        counts = (int(np.sum(eigenvalues > 0)), int(np.sum(eigenvalues < 0)))
        if first is None:
            first, first_point = counts, where
        elif counts != first:
            raise NonconstantSignature(first, counts, first_point, where)
    return first


def classify(counts: tuple) -> SignatureKind:
    n_plus, n_minus = counts
    if n_minus == 0:
        return SignatureKind.RIEMANNIAN
    if n_minus == 1:
        return SignatureKind.LORENTZIAN
    if n_plus == 1:
        return SignatureKind.ANTI_LORENTZIAN
    return SignatureKind.INDEFINITE
