"""h-generalized harmonic maps: residuals, p = 1 integrators, p = 2 grid residuals and the energy functional."""
import io
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate

from jetconn import exprlang, smooth
from jetconn.errors import (BlowUp, BoundaryViolation, CoefficientError, ConfigError, GridTooSmall, MathError,
                            OutOfDomain)
from jetconn.geometry import MetricField, christoffel, inverse_metric
from jetconn.jet import JetPoint, sweep
from jetconn.smooth import Layout, ScalarField

logger = logging.getLogger(__name__)

MIN_NODES = 5
MIN_STEPS = 10
BOUNDARY_TOLERANCE = 1e-12
RULES = ('simpson', 'trapezoid')


@dataclass(frozen=True, eq=False)
class SmoothMap:
    """A map T → M, analytic (component fields of t) or sampled on a uniform lattice.

    Discrete maps keep ``values`` shaped ``(*nodes, n)`` and optionally exact
    first partials ``derivatives`` shaped ``(*nodes, n, p)`` (trajectories
    carry their velocities).
    """

    dims: tuple
    kind: str
    components: tuple = None
    domain: tuple = None
    axes: tuple = None
    values: np.ndarray = None
    derivatives: np.ndarray = None
    label: str = field(default='', compare=False)

    def __post_init__(self):
        p, n = self.dims
        if self.kind == 'analytic':
            if self.components is None or len(self.components) != n:
                raise smooth.DimensionError(f'an analytic map needs {n} component fields')
            return
        if self.kind not in ('trajectory', 'grid'):
            raise ConfigError(f'unknown map representation {self.kind!r}')
        if len(self.axes) != p:
            raise smooth.DimensionError(f'a discrete map on a {p}-dimensional T needs {p} axes')
        for axis in self.axes:
            _check_axis(axis)
        shape = tuple(len(axis) for axis in self.axes) + (n,)
        if self.values.shape != shape:
            raise smooth.DimensionError(f'node values have shape {self.values.shape}, expected {shape}')
        if not np.all(np.isfinite(self.values)):
            raise smooth.DimensionError('node values must be finite')

    @property
    def p(self):
        return self.dims[0]

    @property
    def n(self):
        return self.dims[1]

    @property
    def discrete(self) -> bool:
        return self.kind != 'analytic'

    # -- construction ------------------------------------------------------

    @classmethod
    def from_exprs(cls, dims, sources, domain=None, label=''):
        p, n = dims
        if len(sources) != n:
            raise ConfigError(f'a map into M needs {n} component expressions')
        layout = Layout(p, n, ('t',))
        components = tuple(exprlang.compile_field(str(s), layout) for s in sources)
        domain = tuple(tuple(map(float, d)) for d in domain) if domain is not None else ((0.0, 1.0),) * p
        return cls(tuple(dims), 'analytic', components=components, domain=domain, label=label)

    @classmethod
    def from_fields(cls, dims, components, domain=None, label=''):
        domain = domain if domain is not None else ((0.0, 1.0),) * dims[0]
        return cls(tuple(dims), 'analytic', components=tuple(components), domain=tuple(domain), label=label)

    @classmethod
    def from_nodes(cls, axes, values, derivatives=None, label=''):
        axes = tuple(np.asarray(axis, dtype=float) for axis in axes)
        values = np.asarray(values, dtype=float)
        dims = (len(axes), values.shape[-1])
        kind = 'trajectory' if len(axes) == 1 else 'grid'
        return cls(dims, kind, axes=axes, values=values,
                   derivatives=None if derivatives is None else np.asarray(derivatives, dtype=float), label=label)

    @classmethod
    def from_trajectory(cls, trajectory: 'Trajectory'):
        n = trajectory.states.shape[1]
        return cls.from_nodes((trajectory.times,), trajectory.states,
                              trajectory.velocities.reshape(-1, n, 1), label='trajectory')

    # -- evaluation --------------------------------------------------------

    def jet(self, t, order=2):
        """(x, v[i, α], second[i, α, β]) at ``t``; ``second`` is None when ``order`` < 2."""
        if self.discrete:
            return self._discrete_jet(t, order)
        t = np.asarray(t, dtype=float).ravel()
        p, n = self.dims
        seeds = np.array(smooth.seed(t, max(order, 1)), dtype=object)
        x = np.zeros(n)
        v = np.zeros((n, p))
        second = np.zeros((n, p, p)) if order >= 2 else None
        for i, component in enumerate(self.components):
            u = component(t=seeds)
            if smooth.is_taylor(u):
                x[i] = u.value
                v[i] = u.gradient()
                if second is not None:
                    second[i] = u.hessian()
            else:
                x[i] = float(u)
        return x, v, second

    def node_index(self, t) -> tuple:
        t = np.asarray(t, dtype=float).ravel()
        index = []
        for axis, coordinate in zip(self.axes, t):
            k = int(np.argmin(np.abs(axis - coordinate)))
            step = axis[1] - axis[0]
            if abs(axis[k] - coordinate) > 1e-9 * max(1.0, abs(step)):
                raise OutOfDomain(f't={coordinate} is not a node of the map lattice')
            index.append(k)
        return tuple(index)

    def _discrete_jet(self, t, order):
        index = self.node_index(t)
        return self.jet_at_node(index, order)

    def jet_at_node(self, index, order=2):
        p, n = self.dims
        steps = [axis[1] - axis[0] for axis in self.axes]
        x = self.values[index]
        interior = all(0 < k < len(axis) - 1 for k, axis in zip(index, self.axes))
        v = self.partials[index]
        if order < 2:
            return x, v, None
        if not interior:
            raise OutOfDomain(f'node {index} is on the boundary; second differences need interior nodes')
        second = np.empty((n, p, p))
        for a in range(p):
            for b in range(p):
                if a == b:
                    second[:, a, a] = (self.values[_shift(index, a, 1)] - 2 * x
                                       + self.values[_shift(index, a, -1)]) / steps[a] ** 2
                else:
                    second[:, a, b] = (self.values[_shift(_shift(index, a, 1), b, 1)]
                                       - self.values[_shift(_shift(index, a, 1), b, -1)]
                                       - self.values[_shift(_shift(index, a, -1), b, 1)]
                                       + self.values[_shift(_shift(index, a, -1), b, -1)]) / (4 * steps[a] * steps[b])
        return x, v, second

    @cached_property
    def partials(self) -> np.ndarray:
        """First partials at every node, shaped (*nodes, n, p); second-order one-sided at the edges."""
        if self.derivatives is not None:
            return self.derivatives
        grads = [np.gradient(self.values, axis[1] - axis[0], axis=a, edge_order=2) for a, axis in enumerate(self.axes)]
        return np.stack(grads, axis=-1)

    def nodes(self):
        """Node coordinates shaped (*nodes, p) for discrete maps."""
        return np.stack(np.meshgrid(*self.axes, indexing='ij'), axis=-1)

    def perturbed(self, eta: 'SmoothMap', eps: float) -> 'SmoothMap':
        """The map f + eps·eta; ``eta`` must be analytic."""
        if eta.discrete:
            raise ConfigError('perturbations must be analytic maps')
        if tuple(eta.dims) != tuple(self.dims):
            raise smooth.DimensionError('perturbation and map have different dimensions')
        if not self.discrete:
            layout = self.components[0].layout
            components = tuple(
                ScalarField(lambda t, f=f, g=g: f(t=t) + eps * g(t=t), layout, f'{f.label}+eps*{g.label}')
                for f, g in zip(self.components, eta.components))
            return SmoothMap(self.dims, 'analytic', components=components, domain=self.domain, label=self.label)
        grid = self.nodes()
        values = self.values.copy()
        derivatives = None if self.derivatives is None else self.derivatives.copy()
        for index in np.ndindex(*grid.shape[:-1]):
            x, v, _ = eta.jet(grid[index], order=1)
            values[index] += eps * x
            if derivatives is not None:
                derivatives[index] += eps * v
        return SmoothMap(self.dims, self.kind, axes=self.axes, values=values, derivatives=derivatives,
                         label=self.label)


def _shift(index, axis, offset):
    index = list(index)
    index[axis] += offset
    return tuple(index)


def _check_axis(axis):
    if axis.ndim != 1 or len(axis) < MIN_NODES:
        raise GridTooSmall(f'discrete maps need at least {MIN_NODES} nodes per axis, got {len(axis)}')
    steps = np.diff(axis)
    if np.any(steps <= 0):
        raise ConfigError('lattice nodes must be strictly increasing')
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        raise ConfigError('lattice spacing must be uniform')


# -- Definition of the residual -----------------------------------------------------

def _residual_at(connection, h: MetricField, t, x, v, second) -> np.ndarray:
    """hᵅᵝ{xⁱ_αβ + M⁽ⁱ⁾₍ᵅ₎β + N⁽ⁱ⁾₍ᵅ₎ₘ xᵐ_β}."""
    jp = JetPoint(t, x, v)
    m = smooth.values_of(connection.temporal(jp))
    nn = smooth.values_of(connection.spatial(jp))
    h_inv = inverse_metric(h, t=np.asarray(t, dtype=float))
    inner = second + m + np.einsum('iam,mb->iab', nn, v)
    return np.einsum('ab,iab->i', h_inv, inner)


def harmonic_residual(f: SmoothMap, connection, h: MetricField, t) -> np.ndarray:
    t = np.asarray(t, dtype=float).ravel()
    x, v, second = f.jet(t, order=2)
    return _residual_at(connection, h, t, x, v, second)


@dataclass(frozen=True)
class GridResidual:
    residuals: np.ndarray
    max_norm: float


def grid_residual_p2(f: SmoothMap, connection, h: MetricField, workers=1) -> GridResidual:
    """Residual at every interior node of a p = 2 lattice map."""
    if f.p != 2 or not f.discrete:
        raise ConfigError('grid residuals need a p = 2 lattice map')
    shape = tuple(len(axis) for axis in f.axes)
    if min(shape) < MIN_NODES:
        raise GridTooSmall(f'grid {shape[0]}x{shape[1]} is smaller than {MIN_NODES}x{MIN_NODES}')
    interior = [(i, j) for i in range(1, shape[0] - 1) for j in range(1, shape[1] - 1)]

    def probe(index):
        x, v, second = f.jet_at_node(index, order=2)
        t = np.array([f.axes[0][index[0]], f.axes[1][index[1]]])
        return _residual_at(connection, h, t, x, v, second)

    values = sweep(probe, interior, workers)
    residuals = np.array(values).reshape(shape[0] - 2, shape[1] - 2, f.n)
    return GridResidual(residuals, float(np.max(np.abs(residuals))) if residuals.size else 0.0)


# -- p = 1 integrators ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    velocities: np.ndarray
    step: float
    method_order: int = 4

    @property
    def n(self):
        return self.states.shape[1]

    def header(self) -> str:
        return ','.join(['t'] + [f'x{i + 1}' for i in range(self.n)] + [f'v{i + 1}' for i in range(self.n)])

    def to_csv(self, target=None) -> str:
        """Write ``t,x1..xn,v1..vn`` rows with 17 significant digits; returns the text."""
        table = np.column_stack([self.times, self.states, self.velocities])
        buffer = io.StringIO()
        np.savetxt(buffer, table, fmt='%.17g', delimiter=',', header=self.header(), comments='')
        text = buffer.getvalue()
        if target is not None:
            with open(target, 'w', encoding='utf-8') as handle:
                handle.write(text)
        return text

    @classmethod
    def read_csv(cls, source) -> 'Trajectory':
        table = np.atleast_2d(np.loadtxt(source, delimiter=',', skiprows=1))
        n = (table.shape[1] - 1) // 2
        times = table[:, 0]
        step = float(times[1] - times[0]) if len(times) > 1 else 0.0
        return cls(times, table[:, 1:1 + n], table[:, 1 + n:], step)


def _rk4(rhs, t0, y0, step, steps, bound):
    times = t0 + step * np.arange(steps + 1)
    states = np.empty((steps + 1, len(y0)))
    states[0] = y0
    y = np.asarray(y0, dtype=float)
    for k in range(steps):
        t = times[k]
        k1 = rhs(t, y)
        k2 = rhs(t + step / 2, y + step / 2 * k1)
        k3 = rhs(t + step / 2, y + step / 2 * k2)
        k4 = rhs(t + step, y + step * k3)
        y = y + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        norm = float(np.max(np.abs(y)))
        if not np.isfinite(norm) or norm > bound:
            logger.warning('integration blew up at t=%s (|state|=%.3e)', times[k + 1], norm)
            raise BlowUp(float(times[k + 1]), norm, bound)
        states[k + 1] = y
    return times, states


def _guarded(acceleration):
    def rhs(t, y):
        n = len(y) // 2
        x, v = y[:n], y[n:]
        try:
            a = acceleration(t, x, v)
        except MathError as error:
            raise CoefficientError(float(t), error) from error
        return np.concatenate([v, a])
    return rhs


def _initial(initial: JetPoint, t_span, steps):
    if initial.p != 1:
        raise ConfigError(f'geodesic integration needs p = 1, got p={initial.p}')
    if steps < MIN_STEPS:
        raise ConfigError(f'at least {MIN_STEPS} steps are required, got {steps}')
    t0, t1 = map(float, t_span)
    if t1 <= t0:
        raise ConfigError('t_span must be increasing')
    y0 = np.concatenate([smooth.values_of(initial.x), smooth.values_of(initial.v)[:, 0]])
    return t0, (t1 - t0) / steps, y0


def _trajectory(times, states, step):
    n = states.shape[1] // 2
    return Trajectory(times, states[:, :n], states[:, n:], step)


def connection_acceleration(connection):
    """x″ⁱ = -M⁽ⁱ⁾₍₁₎₁ - N⁽ⁱ⁾₍₁₎ₘ x′ᵐ as a function of (t, x, x′)."""

    def acceleration(t, x, v):
        jp = JetPoint([t], x, v.reshape(-1, 1))
        m = smooth.values_of(connection.temporal(jp))
        nn = smooth.values_of(connection.spatial(jp))
        return -m[:, 0, 0] - nn[:, 0, :] @ v

    return acceleration


def semispray_acceleration(semispray, h: MetricField):
    """x″ⁱ = H¹₁₁x′ⁱ - 2Gⁱ(t, x, x′)."""

    def acceleration(t, x, v):
        big_h = christoffel(h, t=np.array([t])).c[0, 0, 0]
        g = np.array([smooth.value_of(G(t=np.array([t]), x=x, v=v.reshape(-1, 1))) for G in semispray])
        return big_h * v - 2 * g

    return acceleration


def integrate_p1(connection, h: MetricField, initial: JetPoint, t_span, steps, bound=1e8) -> Trajectory:
    """x″ⁱ = -M⁽ⁱ⁾₍₁₎₁ - N⁽ⁱ⁾₍₁₎ₘ x′ᵐ by classical RK4."""
    t0, step, y0 = _initial(initial, t_span, steps)
    logger.info('integrating %s over [%s, %s] in %d steps', connection.label, *t_span, steps)
    times, states = _rk4(_guarded(connection_acceleration(connection)), t0, y0, step, steps, bound)
    return _trajectory(times, states, step)


def integrate_semispray_p1(semispray, h: MetricField, initial: JetPoint, t_span, steps, bound=1e8) -> Trajectory:
    """x″ⁱ = -M⁽ⁱ⁾₍₁₎₁ - 2Gⁱ(t, x, x′) with M = -H¹₁₁x′."""
    t0, step, y0 = _initial(initial, t_span, steps)
    logger.info('integrating the semispray over [%s, %s] in %d steps', *t_span, steps)
    times, states = _rk4(_guarded(semispray_acceleration(semispray, h)), t0, y0, step, steps, bound)
    return _trajectory(times, states, step)


def _five_point(w, k, step):
    return (w[k - 2] - 8 * w[k - 1] + 8 * w[k + 1] - w[k + 2]) / (12 * step)


def ode_residual(trajectory: Trajectory, acceleration) -> float:
    """max over interior nodes of |x″ - acceleration(t, x, x′)|, x″ by five-point differences of x′."""
    worst = 0.0
    w = trajectory.velocities
    for k in range(2, len(trajectory.times) - 2):
        expected = acceleration(float(trajectory.times[k]), trajectory.states[k], w[k])
        gap = _five_point(w, k, trajectory.step) - expected
        worst = max(worst, float(np.max(np.abs(gap))))
    return worst


def energy_function(lagrangian: ScalarField, trajectory: Trajectory) -> tuple:
    """(x′ⁱ∂L/∂yⁱ - L, ∂L/∂t) at every node."""
    layout = lagrangian.layout
    fiber = list(layout.span('v'))
    time = layout.index('t', 0)
    values = np.empty(len(trajectory.times))
    rates = np.empty(len(trajectory.times))
    for k, t in enumerate(trajectory.times):
        v = trajectory.velocities[k]
        point = layout.join(t=[t], x=trajectory.states[k], v=v.reshape(-1, 1))
        expansion = smooth.eval_derivatives(lagrangian, point, 1)
        grad = expansion.gradient()
        values[k] = v @ grad[fiber] - expansion.value
        rates[k] = grad[time]
    return values, rates


def energy_drift(lagrangian: ScalarField, trajectory: Trajectory, h: MetricField):
    """Largest change of the energy function along ``trajectory``.

    None unless L is autonomous and h has vanishing Christoffel symbols on the
    trajectory's interval; only then is the energy function a first integral.
    """
    if any(christoffel(h, t=np.array([t])).c[0, 0, 0] != 0.0 for t in trajectory.times):
        return None
    values, rates = energy_function(lagrangian, trajectory)
    if np.max(np.abs(rates)) > 0.0:
        return None
    return float(np.max(np.abs(values - values[0])))


def classical_residual(trajectory: Trajectory, h: MetricField, phi: MetricField) -> float:
    """max over interior nodes of |x″ - H¹₁₁x′ + γⁱⱼₖx′ʲx′ᵏ|, x″ by five-point differences of x′."""
    worst = 0.0
    step = trajectory.step
    w = trajectory.velocities
    for k in range(2, len(trajectory.times) - 2):
        t = np.array([trajectory.times[k]])
        x, v = trajectory.states[k], w[k]
        accel = _five_point(w, k, step)
        big_h = christoffel(h, t=t).c[0, 0, 0]
        gamma = christoffel(phi, x=x).c
        residual = accel - big_h * v + np.einsum('ijk,j,k->i', gamma, v, v)
        worst = max(worst, float(np.max(np.abs(residual))))
    return worst


def speed_profile(trajectory: Trajectory, h: MetricField, phi: MetricField) -> np.ndarray:
    """φ(x′, x′)/h₁₁ at every node; constant along Γ₀ geodesics."""
    speeds = np.empty(len(trajectory.times))
    for k, t in enumerate(trajectory.times):
        phi_values = phi.at(JetPoint([t], trajectory.states[k], trajectory.velocities[k].reshape(-1, 1)))
        h11 = h.at(JetPoint([t], trajectory.states[k], trajectory.velocities[k].reshape(-1, 1)))[0, 0]
        v = trajectory.velocities[k]
        speeds[k] = v @ phi_values @ v / h11
    return speeds


def speed_drift(trajectory: Trajectory, h: MetricField, phi: MetricField) -> float:
    speeds = speed_profile(trajectory, h, phi)
    return float(np.max(np.abs(speeds - speeds[0])))


# -- energy -----------------------------------------------------------------------------

def _quadrature(values, axes, rule):
    if rule not in RULES:
        raise ConfigError(f'unknown quadrature rule {rule!r}; use one of {", ".join(RULES)}')
    result = values
    for axis in reversed(axes):
        if rule == 'simpson':
            result = integrate.simpson(result, x=axis, axis=-1)
        else:
            result = integrate.trapezoid(result, x=axis, axis=-1)
    return float(result)


def _lattice(f: SmoothMap, nodes):
    if f.discrete:
        return f.axes
    if nodes < 3:
        raise ConfigError('energy quadrature needs at least 3 nodes per axis')
    return tuple(np.linspace(a, b, nodes) for a, b in f.domain)


def energy(lagrangian: ScalarField, f: SmoothMap, h: MetricField, nodes=101, rule='simpson', psi=None) -> float:
    """∫_T L(t, x(t), x_α(t)) √|det h| dt by composite quadrature.

    With ``psi`` the volume element is taken from ψ instead of h.
    """
    volume = psi if psi is not None else h
    axes = _lattice(f, nodes)
    shape = tuple(len(axis) for axis in axes)
    integrand = np.empty(shape)
    grid = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1)
    for index in np.ndindex(*shape):
        t = grid[index]
        if f.discrete:
            x, v, _ = f.jet_at_node(index, order=1)
        else:
            x, v, _ = f.jet(t, order=1)
        jp = JetPoint(t, x, v)
        value = smooth.value_of(lagrangian(t=jp.t, x=jp.x, v=jp.v))
        density = np.sqrt(abs(np.linalg.det(volume.at(jp))))
        integrand[index] = value * density
    return _quadrature(integrand, axes, rule)


def _boundary_check(eta: SmoothMap, axes):
    grid = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1)
    shape = grid.shape[:-1]
    for index in np.ndindex(*shape):
        if not any(k in (0, size - 1) for k, size in zip(index, shape)):
            continue
        x, _, _ = eta.jet(grid[index], order=1)
        worst = float(np.max(np.abs(x)))
        if worst > BOUNDARY_TOLERANCE:
            raise BoundaryViolation(worst, grid[index].tolist())


def first_variation(lagrangian: ScalarField, f: SmoothMap, h: MetricField, eta: SmoothMap, eps=1e-4, nodes=101,
                    rule='simpson', richardson=False, psi=None) -> float:
    """d/dε 𝔼(f + ε·η) at ε = 0 by a central difference, optionally Richardson-refined."""
    if eps <= 0:
        raise ConfigError('eps must be positive')
    axes = _lattice(f, nodes)
    _boundary_check(eta, axes)

    def central(step):
        plus = energy(lagrangian, f.perturbed(eta, step), h, nodes, rule, psi)
        minus = energy(lagrangian, f.perturbed(eta, -step), h, nodes, rule, psi)
        return (plus - minus) / (2 * step)

    coarse = central(eps)
    if not richardson:
        return coarse
    fine = central(eps / 2)
    return (4 * fine - coarse) / 3
