"""Problem definitions, reports, and the builders that turn a config into library objects."""
import hashlib
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from jetconn import connection as conn
from jetconn import exprlang
from jetconn.connection import CheckResult, GeneralQuadraticLagrangian, QuadraticLagrangian
from jetconn.errors import EXIT_CONFIG, EXIT_FAILED, EXIT_OK, ConfigError, JetconnError
from jetconn.geometry import MetricField
from jetconn.harmonic import SmoothMap
from jetconn.jet import (CoordinateChange, JetPoint, push_covector, push_lagrangian, push_parametric_metric,
                         push_scalar, push_spatial_metric, push_temporal_metric, sample_box)
from jetconn.smooth import Layout

logger = logging.getLogger(__name__)

REPORT_VERSION = '1'
CONSTRUCTIONS = ('gamma0', 'ml', 'gml', 'user')


@dataclass
class ProblemConfig:
    version: int
    dims: tuple
    temporal_metric: list
    name: str = ''
    psi: list = None
    spatial_metric: list = None
    parametric_metric: list = None
    fiber_metric: list = None
    fallback_metric: list = None
    lagrangian: dict = None
    change: dict = None
    connection: dict = None
    samples: dict = None
    tolerances: dict = field(default_factory=dict)
    geodesic: dict = None
    energy: dict = None
    document: dict = field(default=None, repr=False)

    def __repr__(self):
        return f'<ProblemConfig "{self.name or "unnamed"}" p={self.dims[0]} n={self.dims[1]}>'

    @property
    def p(self):
        return self.dims[0]

    @property
    def n(self):
        return self.dims[1]

    @property
    def digest(self):
        if self.document is None:
            return None
        canonical = json.dumps(self.document, sort_keys=True, separators=(',', ':'))
        return 'sha256:' + hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    def tolerance(self, key, default):
        return self.tolerances.get(key, default)


@dataclass
class Report:
    command: str
    digest: str = None
    checks: list = field(default_factory=list)
    data: dict = field(default_factory=dict)
    error: dict = None
    timings: dict = field(default_factory=dict)
    version: str = REPORT_VERSION
    error_code: int = field(default=None, repr=False)

    def __repr__(self):
        return f'<Report "{self.command}" {self.status}>'

    def add_check(self, result: CheckResult):
        self.checks.append(result.to_dict())

    def record_error(self, error: JetconnError):
        self.error = {
            'type': type(error).__name__,
            'message': str(error),
            'path': getattr(error, 'path', None),
        }
        self.error_code = error.exit_code

    @property
    def status(self):
        if self.error is not None:
            return 'error'
        return 'fail' if any(check['status'] != 'pass' for check in self.checks) else 'pass'

    @property
    def exit_code(self):
        if self.error is not None:
            return self.error_code or EXIT_CONFIG
        return EXIT_FAILED if self.status == 'fail' else EXIT_OK


# -- builders -----------------------------------------------------------------------------

def _metric(kind, dims, sources, path):
    if sources is None:
        return None
    return MetricField.from_exprs(kind, dims, sources, path)


def _point(point) -> JetPoint:
    return JetPoint(point['t'], point['x'], point['v'])


def _box(box):
    lo, hi = box
    return np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)


@dataclass
class Problem:
    """Library objects built from a :class:`ProblemConfig`; absent inputs are None."""

    config: ProblemConfig
    h: MetricField
    psi: MetricField = None
    phi: MetricField = None
    eps: MetricField = None
    fiber: MetricField = None
    fallback: MetricField = None
    lagrangian: object = None
    quadratic: object = None
    change: CoordinateChange = None
    user: object = None

    @property
    def dims(self):
        return self.config.dims

    @property
    def p(self):
        return self.config.p

    @classmethod
    def build(cls, config: ProblemConfig) -> 'Problem':
        dims = config.dims
        problem = cls(
            config,
            h=_metric('temporal', dims, config.temporal_metric, 'temporal_metric'),
            psi=_metric('temporal', dims, config.psi, 'psi'),
            phi=_metric('spatial', dims, config.spatial_metric, 'spatial_metric'),
            eps=_metric('parametric', dims, config.parametric_metric, 'parametric_metric'),
            fiber=_metric('fiber', dims, config.fiber_metric, 'fiber_metric'),
            fallback=_metric('spatial', dims, config.fallback_metric, 'fallback_metric'),
        )
        if config.lagrangian is not None:
            problem.lagrangian, problem.quadratic = _lagrangian(config.lagrangian, problem.h, dims)
        if config.change is not None:
            problem.change = CoordinateChange.from_exprs(dims, path='change', **config.change)
        if config.connection is not None:
            problem.user = conn.user_connection(dims, config.connection['M'], config.connection['N'])
        logger.debug('built problem %r', config)
        return problem

    def pushed(self) -> 'Problem':
        """The same inputs expressed in the coordinates of ``change``."""
        change = self.require('change', 'change')

        def push(metric, pusher):
            return None if metric is None else pusher(metric, change)

        if self.fiber is not None:
            raise ConfigError('fiber metrics cannot be pushed forward; give a Lagrangian instead', 'fiber_metric')
        pushed = Problem(
            self.config,
            h=push_temporal_metric(self.h, change),
            psi=push(self.psi, push_temporal_metric),
            phi=push(self.phi, push_spatial_metric),
            eps=push(self.eps, push_parametric_metric),
            fallback=push(self.fallback, push_spatial_metric),
        )
        quadratic = self.quadratic
        if isinstance(quadratic, GeneralQuadraticLagrangian):
            raise ConfigError('the general quadratic form cannot be pushed forward; use g', 'lagrangian.G')
        if isinstance(quadratic, QuadraticLagrangian):
            u = None if quadratic.U is None else push_covector(quadratic.U, change, self.dims)
            f = None if quadratic.F is None else push_scalar(quadratic.F, change)
            pushed.quadratic = QuadraticLagrangian(pushed.h, push_parametric_metric(quadratic.g, change), u, f)
            pushed.lagrangian = pushed.quadratic.scalar()
        elif self.lagrangian is not None:
            pushed.lagrangian = push_lagrangian(self.lagrangian, change)
        return pushed

    def require(self, attribute, path):
        value = getattr(self, attribute)
        if value is None:
            raise ConfigError('required for this command', path)
        return value

    def samples(self, seed) -> list:
        spec = self.config.samples or {}
        if 'points' in spec:
            return [_point(point) for point in spec['points']]
        box = spec['random']
        rng = np.random.default_rng(seed)
        return sample_box(rng, self.dims, box['count'], _box(box['t_box']), _box(box['x_box']), _box(box['v_box']))

    def seed(self, override, default):
        if override is not None:
            return override
        return (self.config.samples or {}).get('seed', default)

    def vertical_metric(self) -> conn.FundamentalVerticalMetric:
        if self.fiber is not None:
            return conn.vertical_metric_from_fiber_metric(self.fiber, self.h)
        if self.lagrangian is not None:
            return conn.fundamental_metric(self.lagrangian, self.dims)
        raise ConfigError('a fiber_metric or a lagrangian is required for the vertical metric', 'lagrangian')

    def connection(self, which, samples=(), tol=1e-9, seed=0, workers=1) -> conn.NonlinearConnection:
        if which not in CONSTRUCTIONS:
            raise ConfigError(f'unknown construction {which!r}')
        if which == 'gamma0':
            return conn.gamma_zero(self.h, self.require('phi', 'spatial_metric'))
        if which == 'user':
            return self.require('user', 'connection')
        if which == 'gml':
            return conn.canonical_gml(self.vertical_metric(), self.h, self.psi, self.fallback, samples, tol, seed,
                                      workers)
        if self.p == 1:
            return conn.canonical_ml_p1(self.require('lagrangian', 'lagrangian'), self.h)
        if isinstance(self.quadratic, QuadraticLagrangian):
            return conn.canonical_ml_pge2(self.quadratic)
        if isinstance(self.quadratic, GeneralQuadraticLagrangian):
            return conn.canonical_general_quadratic(self.quadratic)
        raise ConfigError('ml with p >= 2 needs a quadratic Lagrangian (g or G)', 'lagrangian')

    def default_construction(self):
        if self.user is not None:
            return 'user'
        if self.phi is not None:
            return 'gamma0'
        return 'ml'

    def energy_map(self) -> SmoothMap:
        spec = self.require_spec('energy')
        return SmoothMap.from_exprs(self.dims, spec['map'], spec.get('domain'), label='energy.map')

    def perturbations(self) -> list:
        spec = self.require_spec('energy')
        domain = spec.get('domain')
        return [SmoothMap.from_exprs(self.dims, eta, domain, label=f'energy.perturbations.{k}')
                for k, eta in enumerate(spec['perturbations'])]

    def initial_point(self) -> JetPoint:
        return _point(self.require_spec('geodesic')['initial'])

    def require_spec(self, key):
        spec = getattr(self.config, key)
        if spec is None:
            raise ConfigError('required for this command', key)
        return spec


def _lagrangian(spec, h, dims):
    p, n = dims
    full = Layout(p, n)
    base = Layout(p, n, ('t', 'x'))
    if 'expr' in spec:
        return exprlang.compile_field(spec['expr'], full), None
    u = None
    if 'U' in spec:
        u = tuple(tuple(exprlang.compile_field(s, base) for s in row) for row in spec['U'])
    f = exprlang.compile_field(spec['F'], base) if 'F' in spec else None
    if 'g' in spec:
        g = MetricField.from_exprs('parametric', dims, spec['g'], 'lagrangian.g')
        quadratic = QuadraticLagrangian(h, g, u, f)
    else:
        big_g = tuple(tuple(tuple(tuple(exprlang.compile_field(s, base) for s in row) for row in block)
                            for block in blocks) for blocks in spec['G'])
        quadratic = GeneralQuadraticLagrangian(h, big_g, u, f)
    return quadratic.scalar(), quadratic
