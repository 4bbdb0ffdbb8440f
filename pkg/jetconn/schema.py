import json

from marshmallow import ValidationError, fields, post_load, validate, validates_schema

from jetconn.errors import ConfigError
from jetconn.extensions import marshmallow
from jetconn.models import ProblemConfig

CONFIG_VERSIONS = (1,)
RULES = ('simpson', 'trapezoid')


class Expression(fields.Field):
    """An exprlang source string; bare JSON numbers are accepted and stringified."""

    default_error_messages = {'invalid': 'Not a valid expression.'}

    def _deserialize(self, value, attr, data, **kwargs):
        if isinstance(value, bool):
            raise self.make_error('invalid')
        if isinstance(value, (int, float)):
            return repr(value) if isinstance(value, float) else str(value)
        if not isinstance(value, str) or not value.strip():
            raise self.make_error('invalid')
        return value

    def _serialize(self, value, attr, obj, **kwargs):
        return value


class Box(fields.Field):
    """``[lo, hi]`` for every component, or one ``[lo, hi]`` pair per component."""

    default_error_messages = {'invalid': 'Not a valid box: use [lo, hi] or [[lo, hi], ...].'}

    def _deserialize(self, value, attr, data, **kwargs):
        if not isinstance(value, list) or not value:
            raise self.make_error('invalid')
        if all(isinstance(u, list) for u in value):
            pairs = [self._pair(u) for u in value]
            return [[lo for lo, _ in pairs], [hi for _, hi in pairs]]
        return list(self._pair(value))

    def _pair(self, value):
        if len(value) != 2 or not all(isinstance(u, (int, float)) and not isinstance(u, bool) for u in value):
            raise self.make_error('invalid')
        lo, hi = float(value[0]), float(value[1])
        if not lo < hi:
            raise ValidationError('Box bounds must satisfy lo < hi.')
        return lo, hi

    def _serialize(self, value, attr, obj, **kwargs):
        return value


def Matrix(**kwargs):
    return fields.List(fields.List(Expression()), **kwargs)


def _shape(value):
    shape = []
    while isinstance(value, list):
        shape.append(len(value))
        if not value:
            break
        lengths = {len(u) if isinstance(u, list) else None for u in value}
        if len(lengths) != 1:
            return None
        value = value[0]
    return tuple(shape)


class DimsSchema(marshmallow.Schema):
    p = fields.Integer(required=True, validate=validate.Range(min=1))
    n = fields.Integer(required=True, validate=validate.Range(min=1))


class LagrangianSchema(marshmallow.Schema):
    expr = Expression()
    g = Matrix()
    G = fields.List(fields.List(Matrix()))
    U = Matrix()
    F = Expression()

    @validates_schema
    def one_form(self, data, **kwargs):
        given = [key for key in ('expr', 'g', 'G') if key in data]
        if len(given) != 1:
            raise ValidationError('Give exactly one of expr, g or G.', '_schema')
        if 'expr' in data and ('U' in data or 'F' in data):
            raise ValidationError('U and F belong to the quadratic forms only.', 'expr')


class ChangeSchema(marshmallow.Schema):
    temporal = fields.List(Expression())
    temporal_inverse = fields.List(Expression())
    spatial = fields.List(Expression())
    spatial_inverse = fields.List(Expression())


class ConnectionSchema(marshmallow.Schema):
    M = fields.List(fields.List(fields.List(Expression())), required=True)
    N = fields.List(fields.List(fields.List(Expression())), required=True)


class PointSchema(marshmallow.Schema):
    t = fields.List(fields.Float(allow_nan=False), required=True)
    x = fields.List(fields.Float(allow_nan=False), required=True)
    v = fields.List(fields.List(fields.Float(allow_nan=False)), required=True)


class RandomBoxSchema(marshmallow.Schema):
    count = fields.Integer(load_default=20, validate=validate.Range(min=1, max=100000))
    t_box = Box(load_default=[-1.0, 1.0])
    x_box = Box(load_default=[-1.0, 1.0])
    v_box = Box(load_default=[-1.0, 1.0])


class SamplesSchema(marshmallow.Schema):
    points = fields.List(fields.Nested(PointSchema))
    random = fields.Nested(RandomBoxSchema)
    seed = fields.Integer(validate=validate.Range(min=0, max=2 ** 64 - 1))

    @validates_schema
    def one_source(self, data, **kwargs):
        if ('points' in data) == ('random' in data):
            raise ValidationError('Give exactly one of points or random.', '_schema')


class TolerancesSchema(marshmallow.Schema):
    structural = fields.Float(validate=validate.Range(min=0, min_inclusive=False))
    torsion = fields.Float(validate=validate.Range(min=0, min_inclusive=False))
    naturality = fields.Float(validate=validate.Range(min=0, min_inclusive=False))
    residual = fields.Float(validate=validate.Range(min=0, min_inclusive=False))


class GeodesicSchema(marshmallow.Schema):
    initial = fields.Nested(PointSchema, required=True)
    t_span = fields.List(fields.Float(), validate=validate.Length(equal=2), load_default=[0.0, 1.0])
    steps = fields.Integer(validate=validate.Range(min=10), load_default=1000)


class EnergySchema(marshmallow.Schema):
    map = fields.List(Expression(), required=True)
    domain = fields.List(fields.List(fields.Float(), validate=validate.Length(equal=2)))
    nodes = fields.Integer(validate=validate.Range(min=3), load_default=101)
    rule = fields.String(validate=validate.OneOf(RULES), load_default='simpson')
    volume = fields.String(validate=validate.OneOf(('h', 'psi')), load_default='h')
    perturbations = fields.List(fields.List(Expression()), load_default=list)
    eps = fields.Float(validate=validate.Range(min=0, min_inclusive=False), load_default=1e-4)
    richardson = fields.Boolean(load_default=False)


class ProblemConfigSchema(marshmallow.Schema):
    version = fields.Integer(required=True, validate=validate.OneOf(CONFIG_VERSIONS))
    name = fields.String(load_default='')
    dims = fields.Nested(DimsSchema, required=True)
    temporal_metric = Matrix(required=True)
    psi = Matrix()
    spatial_metric = Matrix()
    parametric_metric = Matrix()
    fiber_metric = Matrix()
    fallback_metric = Matrix()
    lagrangian = fields.Nested(LagrangianSchema)
    change = fields.Nested(ChangeSchema)
    connection = fields.Nested(ConnectionSchema)
    samples = fields.Nested(SamplesSchema, load_default=lambda: {'random': {'count': 20, 't_box': [-1.0, 1.0],
                                                                            'x_box': [-1.0, 1.0],
                                                                            'v_box': [-1.0, 1.0]}})
    tolerances = fields.Nested(TolerancesSchema, load_default=dict)
    geodesic = fields.Nested(GeodesicSchema)
    energy = fields.Nested(EnergySchema)

    @validates_schema
    def consistent_dimensions(self, data, **kwargs):
        dims = data.get('dims')
        if not dims:
            return
        p, n = dims['p'], dims['n']
        expected = {
            'temporal_metric': (p, p),
            'psi': (p, p),
            'spatial_metric': (n, n),
            'parametric_metric': (n, n),
            'fiber_metric': (n, n),
            'fallback_metric': (n, n),
        }
        errors = {}
        for key, shape in expected.items():
            if key in data and _shape(data[key]) != shape:
                errors[key] = [f'Expected a {shape[0]}x{shape[1]} matrix for p={p}, n={n}.']
        lagrangian = data.get('lagrangian') or {}
        for key, shape in (('g', (n, n)), ('G', (p, p, n, n)), ('U', (p, n))):
            if key in lagrangian and _shape(lagrangian[key]) != shape:
                errors.setdefault('lagrangian', {})[key] = [f'Expected shape {list(shape)}.']
        connection = data.get('connection')
        if connection:
            for key, shape in (('M', (n, p, p)), ('N', (n, p, n))):
                if _shape(connection[key]) != shape:
                    errors.setdefault('connection', {})[key] = [f'Expected shape {list(shape)}.']
        change = data.get('change') or {}
        for key in ('temporal', 'temporal_inverse', 'spatial', 'spatial_inverse'):
            count = p if key.startswith('temporal') else n
            if key in change and len(change[key]) != count:
                errors.setdefault('change', {})[key] = [f'Expected {count} expressions.']
        geodesic = data.get('geodesic')
        if geodesic and _point_shape(geodesic['initial']) != (p, n):
            errors['geodesic'] = {'initial': [f'Expected a jet point with p={p}, n={n}.']}
        energy = data.get('energy')
        if energy:
            if len(energy['map']) != n:
                errors.setdefault('energy', {})['map'] = [f'Expected {n} component expressions.']
            if 'domain' in energy and len(energy['domain']) != p:
                errors.setdefault('energy', {})['domain'] = [f'Expected {p} [a, b] intervals.']
            for k, eta in enumerate(energy['perturbations']):
                if len(eta) != n:
                    errors.setdefault('energy', {}).setdefault('perturbations', {})[k] = [
                        f'Expected {n} component expressions.']
        samples = data.get('samples') or {}
        for k, point in enumerate(samples.get('points', [])):
            if _point_shape(point) != (p, n):
                errors.setdefault('samples', {}).setdefault('points', {})[k] = [
                    f'Expected a jet point with p={p}, n={n}.']
        if errors:
            raise ValidationError(errors)

    @post_load
    def make_config(self, data, **kwargs):
        dims = data.pop('dims')
        return ProblemConfig(dims=(dims['p'], dims['n']), **data)


def _point_shape(point):
    p, n = len(point['t']), len(point['x'])
    if _shape(point['v']) != (n, p):
        return None
    return p, n


class CheckSchema(marshmallow.Schema):
    name = fields.String()
    status = fields.String()
    worst = fields.Float()
    location = fields.Raw(allow_none=True)
    tolerance = fields.Float(allow_none=True)
    details = fields.Raw()


class ReportSchema(marshmallow.Schema):
    version = fields.String()
    command = fields.String()
    digest = fields.String(allow_none=True)
    status = fields.String()
    exit_code = fields.Integer()
    checks = fields.List(fields.Nested(CheckSchema))
    data = fields.Raw()
    error = fields.Raw(allow_none=True)
    timings = fields.Dict(keys=fields.String(), values=fields.Float())


problem_config_schema = ProblemConfigSchema()
report_schema = ReportSchema()


def _first_error(messages, path=()):
    """(dotted path, message) of the first leaf in a marshmallow error dict."""
    if isinstance(messages, dict):
        key = sorted(messages, key=str)[0]
        return _first_error(messages[key], path + (str(key),))
    if isinstance(messages, list) and messages and isinstance(messages[0], (dict, list)):
        return _first_error(messages[0], path)
    text = messages[0] if isinstance(messages, list) and messages else str(messages)
    dotted = '.'.join(part for part in path if part != '_schema')
    return dotted or None, text


def load_config(document) -> ProblemConfig:
    """Validate a parsed JSON document into a :class:`ProblemConfig`."""
    if not isinstance(document, dict):
        raise ConfigError('a problem definition must be a JSON object')
    try:
        config = problem_config_schema.load(document)
    except ValidationError as error:
        path, message = _first_error(error.messages)
        raise ConfigError(message, path) from error
    config.document = document
    return config


def dump_report(report) -> str:
    return json.dumps(report_schema.dump(report), sort_keys=True, indent=2)
