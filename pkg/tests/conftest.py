import json

import numpy as np
import pytest

from jetconn import create_app
from jetconn.config import TestingConfig
from jetconn.geometry import MetricField


@pytest.fixture
def app():
    app = create_app(TestingConfig)
    yield app


@pytest.fixture
def runner(app):
    return app.test_cli_runner()


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


@pytest.fixture
def write_config(tmp_path):
    """Dump a config dict to a file and return its path as a string."""

    def write(document, name='problem.json'):
        path = tmp_path / name
        path.write_text(json.dumps(document), encoding='utf-8')
        return str(path)

    return write


@pytest.fixture
def flat_h():
    return MetricField.identity('temporal', (1, 2))


@pytest.fixture
def sphere_phi():
    return MetricField.from_exprs('spatial', (1, 2), [['1', '0'], ['0', 'sin(x1)^2']])


@pytest.fixture
def hyperbolic_phi():
    return MetricField.from_exprs('spatial', (1, 2), [['1/x2^2', '0'], ['0', '1/x2^2']])
