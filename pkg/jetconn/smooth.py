"""Forward-mode differentiation on truncated multivariate Taylor polynomials.

A :class:`TaylorScalar` stores the Taylor coefficients of a scalar quantity
with respect to a flat list of seed variables, one coefficient per monomial
of total degree ``<= order``.  Mixed partials are therefore stored once, under
the sorted variable-index tuple of the monomial, and read back through
:meth:`TaylorScalar.partial` for any permutation of the indices.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache, cached_property
from typing import Callable, Sequence

import numpy as np

from jetconn.errors import ConfigError, JetconnError, MathError

logger = logging.getLogger(__name__)

MAX_ORDER = 3
MAX_INTERNAL_ORDER = 5
BLOCKS = ('t', 'x', 'v')


class DimensionError(JetconnError, ValueError):
    """A point or index does not match the declared variable layout."""


class EvaluationError(MathError):
    """A non-finite or undefined intermediate value was produced."""

    def __init__(self, message, location=None):
        self.location = location
        if location is not None:
            message = f'{message} (at {location})'
        super().__init__(message)


class TaylorAlgebra:
    """Monomial tables for ``nvars`` variables truncated at ``order``."""

    def __init__(self, nvars: int, order: int):
        if order < 0 or order > MAX_INTERNAL_ORDER:
            raise DimensionError(f'unsupported derivative order {order}')
        self.nvars = nvars
        self.order = order
        self.keys = [key
                     for degree in range(order + 1)
                     for key in itertools.combinations_with_replacement(range(nvars), degree)]
        self.index = {key: position for position, key in enumerate(self.keys)}
        self.size = len(self.keys)
        self.factorials = np.array([_multi_factorial(key) for key in self.keys])

    def __repr__(self):
        return f'<TaylorAlgebra nvars={self.nvars} order={self.order}>'

    @cached_property
    def product_table(self):
        left, right, target = [], [], []
        for i, a in enumerate(self.keys):
            for j, b in enumerate(self.keys):
                if len(a) + len(b) <= self.order:
                    left.append(i)
                    right.append(j)
                    target.append(self.index[tuple(sorted(a + b))])
        return np.array(left, dtype=int), np.array(right, dtype=int), np.array(target, dtype=int)

    def derivative_table(self, variable: int):
        """Source positions and multipliers for d/d(variable), one order down."""
        lower = algebra(self.nvars, self.order - 1)
        sources = np.empty(lower.size, dtype=int)
        weights = np.empty(lower.size)
        for position, key in enumerate(lower.keys):
            raised = tuple(sorted(key + (variable,)))
            sources[position] = self.index[raised]
            weights[position] = key.count(variable) + 1
        return lower, sources, weights

    def restriction_table(self, keep: tuple):
        lower = algebra(len(keep), self.order)
        sources = np.array([self.index[tuple(keep[k] for k in key)] for key in lower.keys], dtype=int)
        return lower, sources


@lru_cache(maxsize=None)
def algebra(nvars: int, order: int) -> TaylorAlgebra:
    return TaylorAlgebra(nvars, order)


@lru_cache(maxsize=None)
def _derivative_table(nvars, order, variable):
    return algebra(nvars, order).derivative_table(variable)


@lru_cache(maxsize=None)
def _restriction_table(nvars, order, keep):
    return algebra(nvars, order).restriction_table(keep)


def _multi_factorial(key):
    result = 1
    for variable in set(key):
        result *= math.factorial(key.count(variable))
    return result


class TaylorScalar:
    """Value plus all partial derivatives up to ``order`` of a scalar."""

    __slots__ = ('coefficients', 'algebra')

    def __init__(self, coefficients, taylor_algebra: TaylorAlgebra):
        self.coefficients = coefficients
        self.algebra = taylor_algebra

    @classmethod
    def constant(cls, value, nvars, order):
        space = algebra(nvars, order)
        coefficients = np.zeros(space.size)
        coefficients[0] = value
        return cls(coefficients, space)

    @property
    def value(self) -> float:
        return float(self.coefficients[0])

    @property
    def order(self) -> int:
        return self.algebra.order

    @property
    def nvars(self) -> int:
        return self.algebra.nvars

    def __repr__(self):
        return f'TaylorScalar({self.value!r}, nvars={self.nvars}, order={self.order})'

    def __float__(self):
        return self.value

    # -- derivative access -------------------------------------------------

    def partial(self, *indices) -> float:
        if len(indices) > self.order:
            raise DimensionError(f'partial of order {len(indices)} requested from an order-{self.order} scalar')
        for index in indices:
            if not 0 <= index < self.nvars:
                raise DimensionError(f'variable index {index} out of range for {self.nvars} variables')
        key = tuple(sorted(indices))
        position = self.algebra.index[key]
        return float(self.coefficients[position] * self.algebra.factorials[position])

    def gradient(self) -> np.ndarray:
        return self._dense(1)

    def hessian(self) -> np.ndarray:
        return self._dense(2)

    def third(self) -> np.ndarray:
        return self._dense(3)

    @property
    def partials(self) -> tuple:
        return tuple(self._dense(k) for k in range(1, self.order + 1))

    def _dense(self, degree):
        if degree > self.order:
            raise DimensionError(f'order-{degree} partials not carried by an order-{self.order} scalar')
        dense = np.zeros((self.nvars,) * degree)
        for position, key in enumerate(self.algebra.keys):
            if len(key) != degree:
                continue
            entry = self.coefficients[position] * self.algebra.factorials[position]
            for permutation in set(itertools.permutations(key)):
                dense[permutation] = entry
        return dense

    def d(self, variable: int) -> 'TaylorScalar':
        """The partial derivative with respect to ``variable`` as a scalar one order lower."""
        if self.order == 0:
            raise DimensionError('cannot differentiate an order-0 scalar')
        lower, sources, weights = _derivative_table(self.nvars, self.order, variable)
        return TaylorScalar(self.coefficients[sources] * weights, lower)

    def truncate(self, order: int) -> 'TaylorScalar':
        if order >= self.order:
            return self
        lower = algebra(self.nvars, order)
        return TaylorScalar(self.coefficients[:lower.size].copy(), lower)

    def restrict(self, keep: Sequence[int]) -> 'TaylorScalar':
        """Keep only the derivatives with respect to the variables in ``keep``."""
        lower, sources = _restriction_table(self.nvars, self.order, tuple(keep))
        return TaylorScalar(self.coefficients[sources], lower)

    # -- arithmetic --------------------------------------------------------

    def _match(self, other):
        if isinstance(other, TaylorScalar):
            if other.algebra is self.algebra:
                return self, other
            if other.nvars != self.nvars:
                raise DimensionError(f'cannot combine scalars seeded over {self.nvars} and {other.nvars} variables')
            order = min(self.order, other.order)
            return self.truncate(order), other.truncate(order)
        return self, None

    def __add__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        left, right = self._match(other)
        if right is None:
            coefficients = left.coefficients.copy()
            coefficients[0] += other
            return TaylorScalar(coefficients, left.algebra)
        return TaylorScalar(left.coefficients + right.coefficients, left.algebra)

    __radd__ = __add__

    def __neg__(self):
        return TaylorScalar(-self.coefficients, self.algebra)

    def __pos__(self):
        return self

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        left, right = self._match(other)
        if right is None:
            return TaylorScalar(left.coefficients * other, left.algebra)
        a, b, target = left.algebra.product_table
        product = np.bincount(target, weights=left.coefficients[a] * right.coefficients[b],
                              minlength=left.algebra.size)
        return TaylorScalar(product, left.algebra)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        if isinstance(other, TaylorScalar):
            return self * other.reciprocal()
        if other == 0:
            raise EvaluationError('division by zero')
        return TaylorScalar(self.coefficients / other, self.algebra)

    def __rtruediv__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        return self.reciprocal() * other

    def __pow__(self, exponent):
        if isinstance(exponent, TaylorScalar):
            return (exponent * self.log()).exp()
        return self.power(float(exponent))

    def __rpow__(self, base):
        if base <= 0:
            raise EvaluationError(f'power with non-positive base {base} and variable exponent')
        return (self * math.log(base)).exp()

    def __abs__(self):
        if self.value > 0:
            return self
        if self.value < 0:
            return -self
        if self.order == 0:
            return self
        raise EvaluationError('abs is not differentiable at 0')

    def __lt__(self, other):
        return self.value < value_of(other)

    def __gt__(self, other):
        return self.value > value_of(other)

    # -- elementary functions ---------------------------------------------

    def compose_univariate(self, derivatives: Sequence[float]) -> 'TaylorScalar':
        """Apply a univariate function given its derivatives at ``self.value``."""
        if not all(math.isfinite(d) for d in derivatives):
            raise EvaluationError('non-finite derivative of an elementary function')
        delta = TaylorScalar(self.coefficients.copy(), self.algebra)
        delta.coefficients[0] = 0.0
        order = self.order
        result = TaylorScalar.constant(derivatives[order] / math.factorial(order), self.nvars, order)
        for k in range(order - 1, -1, -1):
            result = result * delta + derivatives[k] / math.factorial(k)
        return result

    def power(self, exponent: float) -> 'TaylorScalar':
        if exponent.is_integer() and exponent >= 0:
            result = TaylorScalar.constant(1.0, self.nvars, self.order)
            base, count = self, int(exponent)
            while count:
                if count & 1:
                    result = result * base
                base = base * base
                count >>= 1
            return result
        u = self.value
        if u < 0 and not exponent.is_integer():
            raise EvaluationError(f'non-integer power {exponent} of negative value {u}')
        derivatives = []
        falling = 1.0
        for k in range(self.order + 1):
            if falling == 0.0:
                derivatives.append(0.0)
            elif u == 0.0 and exponent - k < 0:
                raise EvaluationError(f'power {exponent} is singular at 0')
            else:
                derivatives.append(falling * u ** (exponent - k))
            falling *= exponent - k
        return self.compose_univariate(derivatives)

    def reciprocal(self):
        if self.value == 0.0:
            raise EvaluationError('division by zero')
        return self.power(-1.0)

    def sqrt(self):
        if self.value < 0:
            raise EvaluationError(f'sqrt of negative value {self.value}')
        return self.power(0.5)

    def exp(self):
        e = math.exp(self.value)
        return self.compose_univariate([e] * (self.order + 1))

    def log(self):
        u = self.value
        if u <= 0:
            raise EvaluationError(f'log of non-positive value {u}')
        derivatives = [math.log(u)]
        derivatives += [(-1) ** (k + 1) * math.factorial(k - 1) / u ** k for k in range(1, self.order + 1)]
        return self.compose_univariate(derivatives)

    def sin(self):
        s, c = math.sin(self.value), math.cos(self.value)
        cycle = [s, c, -s, -c]
        return self.compose_univariate([cycle[k % 4] for k in range(self.order + 1)])

    def cos(self):
        s, c = math.sin(self.value), math.cos(self.value)
        cycle = [c, -s, -c, s]
        return self.compose_univariate([cycle[k % 4] for k in range(self.order + 1)])

    def tan(self):
        cosine = self.cos()
        if cosine.value == 0.0:
            raise EvaluationError('tan is singular here')
        return self.sin() / cosine


def value_of(u) -> float:
    return u.value if isinstance(u, TaylorScalar) else float(u)


def values_of(array) -> np.ndarray:
    array = np.asarray(array, dtype=object)
    return np.vectorize(value_of, otypes=[float])(array) if array.size else array.astype(float)


def is_taylor(u) -> bool:
    return isinstance(u, TaylorScalar)


def order_of(*items) -> int:
    """Highest order among the Taylor scalars found in ``items`` (0 for plain floats)."""
    order = 0
    for item in items:
        for u in np.asarray(item, dtype=object).ravel():
            if isinstance(u, TaylorScalar):
                order = max(order, u.order)
    return order


def seed(values: Sequence[float], order: int) -> list:
    """Independent variables for a point: one Taylor scalar per coordinate."""
    values = [float(v) for v in values]
    space = algebra(len(values), order)
    seeds = []
    for i, v in enumerate(values):
        coefficients = np.zeros(space.size)
        coefficients[0] = v
        if order >= 1:
            coefficients[space.index[(i,)]] = 1.0
        seeds.append(TaylorScalar(coefficients, space))
    return seeds


def compose(outer: TaylorScalar, inner: Sequence) -> TaylorScalar | float:
    """Chain rule: substitute ``inner`` (functions of some seeds) into the Taylor polynomial ``outer``.

    ``outer`` must be expanded at the values of ``inner``.
    """
    if len(inner) != outer.nvars:
        raise DimensionError(f'composition needs {outer.nvars} inner scalars, got {len(inner)}')
    taylors = [u for u in inner if isinstance(u, TaylorScalar)]
    if not taylors:
        return outer.value
    nvars = taylors[0].nvars
    order = min(min(u.order for u in taylors), outer.order)
    deltas = []
    for u in inner:
        if isinstance(u, TaylorScalar):
            delta = u.truncate(order) - u.value
        else:
            delta = None
        deltas.append(delta)
    products = {(): TaylorScalar.constant(1.0, nvars, order)}
    result = TaylorScalar.constant(0.0, nvars, order)
    for position, key in enumerate(outer.algebra.keys):
        if len(key) > order:
            break
        coefficient = outer.coefficients[position]
        if key:
            prefix = products.get(key[:-1])
            delta = deltas[key[-1]]
            product = None if prefix is None or delta is None else prefix * delta
            products[key] = product
        else:
            product = products[()]
        if product is not None and coefficient != 0.0:
            result = result + product * coefficient
    return result


def inv(matrix) -> np.ndarray:
    """Inverse of a small square matrix whose entries may be Taylor scalars."""
    a = np.array(matrix, dtype=object)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f'cannot invert an array of shape {a.shape}')
    if not any(isinstance(u, TaylorScalar) for u in a.ravel()):
        return np.linalg.inv(a.astype(float))
    size = a.shape[0]
    augmented = np.empty((size, 2 * size), dtype=object)
    augmented[:, :size] = a
    augmented[:, size:] = np.eye(size)
    for column in range(size):
        pivot = max(range(column, size), key=lambda row: abs(value_of(augmented[row, column])))
        if value_of(augmented[pivot, column]) == 0.0:
            raise EvaluationError('singular matrix')
        if pivot != column:
            augmented[[column, pivot]] = augmented[[pivot, column]]
        augmented[column] = augmented[column] / augmented[column, column]
        for row in range(size):
            if row != column:
                factor = augmented[row, column]
                augmented[row] = augmented[row] - factor * augmented[column]
    return augmented[:, size:]


# -- elementary functions on floats or Taylor scalars -------------------------

def _float_domain(name, u):
    if name == 'log' and u <= 0:
        raise EvaluationError(f'log of non-positive value {u}')
    if name == 'sqrt' and u < 0:
        raise EvaluationError(f'sqrt of negative value {u}')


def _elementary(name):
    float_function = getattr(math, name)

    def function(u):
        if isinstance(u, TaylorScalar):
            return getattr(u, name)()
        _float_domain(name, u)
        return float_function(u)

    function.__name__ = name
    return function


sin = _elementary('sin')
cos = _elementary('cos')
tan = _elementary('tan')
exp = _elementary('exp')
log = _elementary('log')
sqrt = _elementary('sqrt')


def absolute(u):
    return abs(u)


def divide(a, b):
    if not isinstance(b, TaylorScalar) and b == 0:
        raise EvaluationError('division by zero')
    return a / b


def power(base, exponent):
    if isinstance(base, TaylorScalar) or isinstance(exponent, TaylorScalar):
        return base ** exponent
    if base < 0 and not float(exponent).is_integer():
        raise EvaluationError(f'non-integer power {exponent} of negative value {base}')
    if base == 0 and exponent < 0:
        raise EvaluationError('division by zero')
    return float(base) ** float(exponent)


# -- scalar fields ----------------------------------------------------------

@dataclass(frozen=True)
class Layout:
    """The flat seed-variable list ``t1..tp, x1..xn, v11..vnp`` restricted to some blocks."""

    p: int
    n: int
    blocks: tuple = BLOCKS

    def __post_init__(self):
        unknown = set(self.blocks) - set(BLOCKS)
        if unknown:
            raise DimensionError(f'unknown variable blocks {sorted(unknown)}')
        object.__setattr__(self, 'blocks', tuple(b for b in BLOCKS if b in self.blocks))

    def block_size(self, block):
        return {'t': self.p, 'x': self.n, 'v': self.n * self.p}[block]

    @property
    def size(self):
        return sum(self.block_size(b) for b in self.blocks)

    def offset(self, block):
        if block not in self.blocks:
            raise DimensionError(f'block {block!r} is not part of layout {self.blocks}')
        position = 0
        for b in self.blocks:
            if b == block:
                return position
            position += self.block_size(b)

    def index(self, block, *indices):
        """Flat position of ``t[a]``, ``x[i]`` or ``v[i][a]``."""
        if block == 'v':
            i, a = indices
            return self.offset('v') + i * self.p + a
        (i,) = indices
        return self.offset(block) + i

    def span(self, block):
        start = self.offset(block)
        return range(start, start + self.block_size(block))

    def split(self, vector) -> dict:
        vector = list(vector)
        if len(vector) != self.size:
            raise DimensionError(f'point has {len(vector)} coordinates, layout {self.blocks} '
                                 f'with p={self.p}, n={self.n} needs {self.size}')
        parts, position = {}, 0
        for b in self.blocks:
            chunk = vector[position:position + self.block_size(b)]
            position += self.block_size(b)
            if b == 'v':
                parts[b] = np.array(chunk, dtype=object).reshape(self.n, self.p)
            else:
                parts[b] = np.array(chunk, dtype=object)
        return parts

    def join(self, **parts) -> list:
        flat = []
        for b in self.blocks:
            part = parts.get(b)
            if part is None:
                raise DimensionError(f'missing block {b!r}')
            flat.extend(np.asarray(part, dtype=object).ravel().tolist())
        if len(flat) != self.size:
            raise DimensionError(f'expected {self.size} coordinates, got {len(flat)}')
        return flat


@dataclass(frozen=True)
class ScalarField:
    """A smooth scalar on some blocks of J¹(T,M).

    ``func`` receives one keyword argument per block of ``layout`` (``t`` and
    ``x`` as vectors, ``v`` as an ``n x p`` array) whose entries are floats or
    Taylor scalars, and must be pure.
    """

    func: Callable
    layout: Layout
    label: str = field(default='', compare=False)

    def __call__(self, t=None, x=None, v=None):
        given = {'t': t, 'x': x, 'v': v}
        kwargs = {}
        for b in self.layout.blocks:
            if given[b] is None:
                raise DimensionError(f'field {self.label or "<anonymous>"} needs block {b!r}')
            kwargs[b] = given[b]
        return self.func(**kwargs)

    def at(self, point) -> float:
        return value_of(self(**self.layout.split(point)))

    @classmethod
    def constant(cls, value, layout):
        return cls(lambda **_: float(value), layout, label=repr(value))

    @classmethod
    def from_jet(cls, jet: Callable, layout: Layout, label=''):
        """Field defined by ``jet(values, order) -> TaylorScalar`` over fresh seeds at ``values``."""

        def func(**parts):
            flat = layout.join(**parts)
            order = order_of(flat)
            values = [value_of(u) for u in flat]
            local = jet(tuple(values), order)
            if order == 0 or not isinstance(local, TaylorScalar):
                return value_of(local)
            return compose(local, flat)

        return cls(func, layout, label)


def eval_derivatives(field: ScalarField, point, order: int) -> TaylorScalar:
    """Value and all partials up to ``order`` of ``field`` at ``point``."""
    if order not in (0, 1, 2, 3):
        raise DimensionError(f'derivative order must be 0..{MAX_ORDER}, got {order}')
    point = np.asarray(point, dtype=float).ravel()
    if len(point) != field.layout.size:
        raise DimensionError(f'point has {len(point)} coordinates, field expects {field.layout.size}')
    seeds = seed(point, max(order, 1))
    result = field(**field.layout.split(seeds))
    if not isinstance(result, TaylorScalar):
        result = TaylorScalar.constant(float(result), len(point), max(order, 1))
    return result.truncate(order)


@dataclass(frozen=True)
class FDReport:
    first: float
    second: float

    @property
    def max_deviation(self) -> float:
        return max(self.first, self.second)


def fd_check(field: ScalarField, point, step: float) -> FDReport:
    """Largest relative gap between AD partials and central differences (orders 1 and 2)."""
    if step <= 0:
        raise ConfigError('step must be positive', 'step')
    point = np.asarray(point, dtype=float).ravel()
    exact = eval_derivatives(field, point, 2)
    size = len(point)
    basis = np.eye(size) * step

    def f(offset):
        return field.at(point + offset)

    centre = f(np.zeros(size))
    first = 0.0
    second = 0.0
    for i in range(size):
        forward, backward = f(basis[i]), f(-basis[i])
        approx = (forward - backward) / (2 * step)
        first = max(first, _relative(exact.partial(i), approx))
        approx = (forward - 2 * centre + backward) / step ** 2
        second = max(second, _relative(exact.partial(i, i), approx))
        for j in range(i + 1, size):
            approx = (f(basis[i] + basis[j]) - f(basis[i] - basis[j])
                      - f(-basis[i] + basis[j]) + f(-basis[i] - basis[j])) / (4 * step ** 2)
            second = max(second, _relative(exact.partial(i, j), approx))
    return FDReport(first, second)


def _relative(exact, approx):
    return abs(exact - approx) / max(1.0, abs(exact))


def as_array(items, shape=None) -> np.ndarray:
    """Float array if every entry is a float, object array otherwise."""
    array = np.array(items, dtype=object)
    if shape is not None:
        array = array.reshape(shape)
    if any(isinstance(u, TaylorScalar) for u in array.ravel()):
        return array
    return array.astype(float)
