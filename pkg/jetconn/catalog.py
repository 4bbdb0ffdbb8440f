"""Builtin problem definitions, emitted by ``jetconn example NAME`` and accepted by ``--example``."""
import copy

from jetconn.errors import ConfigError

PI = '3.141592653589793'

# x~ = x + x^3/10 and its real (Cardano) inverse written with sinh(asinh(w)/3) in exponential form.
CUBIC = 'x1 + 0.1*x1^3'
CUBIC_INVERSE = ('(1/sqrt(0.3))*((sqrt(0.675)*x1 + sqrt(0.675*x1^2 + 1))^(1/3)'
                 ' - (sqrt(0.675)*x1 + sqrt(0.675*x1^2 + 1))^(-1/3))')

FLAT = {
    'version': 1,
    'name': 'flat',
    'dims': {'p': 1, 'n': 2},
    'temporal_metric': [['1']],
    'spatial_metric': [['1', '0'], ['0', '1']],
    'lagrangian': {'expr': 'v11^2 + v21^2'},
    'change': {
        'temporal': ['2*t1 + 1'],
        'temporal_inverse': ['(t1 - 1)/2'],
        'spatial': [CUBIC, 'x2'],
        'spatial_inverse': [CUBIC_INVERSE, 'x2'],
    },
    'samples': {'random': {'count': 20}, 'seed': 20240101},
    'geodesic': {'initial': {'t': [0.0], 'x': [0.0, 0.0], 'v': [[1.0], [0.0]]}, 't_span': [0.0, 1.0], 'steps': 100},
    'energy': {
        'map': ['2*t1', '3*t1'],
        'domain': [[0.0, 1.0]],
        'nodes': 101,
        'perturbations': [[f'sin({PI}*t1)', '0'], ['t1*(1 - t1)', f'sin(2*{PI}*t1)']],
    },
}

SPHERE = {
    'version': 1,
    'name': 'sphere',
    'dims': {'p': 1, 'n': 2},
    'temporal_metric': [['1']],
    'spatial_metric': [['1', '0'], ['0', 'sin(x1)^2']],
    'lagrangian': {'expr': 'v11^2 + sin(x1)^2*v21^2'},
    'change': {
        'temporal': ['2*t1 + 1'],
        'temporal_inverse': ['(t1 - 1)/2'],
        'spatial': [CUBIC, 'x2'],
        'spatial_inverse': [CUBIC_INVERSE, 'x2'],
    },
    'samples': {'random': {'count': 20, 'x_box': [[0.5, 1.2], [-1.0, 1.0]]}, 'seed': 20240101},
    'geodesic': {
        'initial': {'t': [0.0], 'x': [1.5707963267948966, 0.0], 'v': [[0.0], [1.0]]},
        't_span': [0.0, 1.0],
        'steps': 10000,
    },
    'energy': {
        'map': ['1.5707963267948966', 't1'],
        'domain': [[0.0, 1.0]],
        'nodes': 101,
        'perturbations': [[f'0.1*sin({PI}*t1)', '0']],
    },
}

HYPERBOLIC = {
    'version': 1,
    'name': 'hyperbolic',
    'dims': {'p': 1, 'n': 2},
    'temporal_metric': [['1']],
    'spatial_metric': [['1/x2^2', '0'], ['0', '1/x2^2']],
    'lagrangian': {'expr': '(v11^2 + v21^2)/x2^2'},
    'change': {
        'temporal': ['t1 + 0.5'],
        'temporal_inverse': ['t1 - 0.5'],
        'spatial': ['x1 + 0.5*x2', 'x2'],
        'spatial_inverse': ['x1 - 0.5*x2', 'x2'],
    },
    'samples': {'random': {'count': 20, 'x_box': [[-1.0, 1.0], [0.5, 2.0]]}, 'seed': 20240101},
    'geodesic': {'initial': {'t': [0.0], 'x': [0.0, 1.0], 'v': [[0.0], [1.0]]}, 't_span': [0.0, 1.0], 'steps': 1000},
}

OSCILLATOR = {
    'version': 1,
    'name': 'oscillator',
    'dims': {'p': 1, 'n': 1},
    'temporal_metric': [['1']],
    'lagrangian': {'expr': 'v11^2 - x1^2'},
    'samples': {'random': {'count': 20}, 'seed': 20240101},
    'geodesic': {'initial': {'t': [0.0], 'x': [1.0], 'v': [[0.0]]}, 't_span': [0.0, 2 * 3.141592653589793],
                 'steps': 10000},
    'energy': {
        'map': ['cos(t1)'],
        'domain': [[0.0, 1.0]],
        'nodes': 201,
        'perturbations': [[f'sin({PI}*t1)'], ['t1*(1 - t1)'], [f't1*(1 - t1)*sin(3*{PI}*t1)']],
    },
}

EM_QUADRATIC = {
    'version': 1,
    'name': 'em-quadratic',
    'dims': {'p': 2, 'n': 2},
    'temporal_metric': [['1', '0'], ['0', '1']],
    'lagrangian': {
        'g': [['exp(t1)', '0'], ['0', '1 + x1^2']],
        'U': [['x2', '-x1'], ['0', 'x1*x2']],
        'F': 'x1^2',
    },
    'change': {
        'temporal': ['t1 + 0.5*t2', 't2'],
        'temporal_inverse': ['t1 - 0.5*t2', 't2'],
        'spatial': [CUBIC, 'x2 + 1'],
        'spatial_inverse': [CUBIC_INVERSE, 'x2 - 1'],
    },
    'samples': {'random': {'count': 20}, 'seed': 20240101},
    'energy': {
        'map': ['t1 + t2', 't1*t2'],
        'domain': [[0.0, 1.0], [0.0, 1.0]],
        'nodes': 21,
    },
}

EXAMPLES = {
    'flat': FLAT,
    'sphere': SPHERE,
    'hyperbolic': HYPERBOLIC,
    'oscillator': OSCILLATOR,
    'em-quadratic': EM_QUADRATIC,
}


def example(name) -> dict:
    try:
        return copy.deepcopy(EXAMPLES[name])
    except KeyError:
        raise ConfigError(f'unknown example {name!r}; choose from {", ".join(sorted(EXAMPLES))}') from None
