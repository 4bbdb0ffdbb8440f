import json
import math

import pytest

from jetconn import catalog

ASYMMETRIC = {'M': [[['0']], [['0']]], 'N': [[['v21', '0']], [['0', '0']]]}
DIRECTION_DEPENDENT = {
    'version': 1,
    'dims': {'p': 1, 'n': 2},
    'temporal_metric': [['1']],
    'fiber_metric': [['1 + v11^2', '0'], ['0', '1']],
}


def report_of(result):
    """The JSON report in the command output; log and error lines may surround it."""
    lines = result.output.splitlines()
    start = lines.index('{')
    end = len(lines) - 1 - lines[::-1].index('}')
    return json.loads('\n'.join(lines[start:end + 1]))


def test_example_prints_a_loadable_config(runner, tmp_path):
    result = runner.invoke(args=['example', 'flat'])
    assert result.exit_code == 0
    assert json.loads(result.output)['name'] == 'flat'
    target = tmp_path / 'flat.json'
    result = runner.invoke(args=['example', 'sphere', '--out', str(target)])
    assert result.exit_code == 0
    assert json.loads(target.read_text())['dims'] == {'p': 1, 'n': 2}


def test_flat_connection_vanishes(runner):
    result = runner.invoke(args=['connection', '--example', 'flat', '--which', 'gamma0'])
    assert result.exit_code == 0
    report = report_of(result)
    assert report['status'] == 'pass'
    assert report['data']['provenance'] == 'gamma-zero'
    assert len(report['data']['samples']) == 20
    for row in report['data']['samples']:
        assert all(value == 0.0 for block in row['N'] for line in block for value in line)


def test_sphere_connection_at_a_point(runner, write_config):
    document = catalog.example('sphere')
    document['samples'] = {'points': [{'t': [0.0], 'x': [math.pi / 4, 0.0], 'v': [[0.7], [-1.3]]}]}
    result = runner.invoke(args=['connection', '--config', write_config(document)])
    assert result.exit_code == 0
    (row,) = report_of(result)['data']['samples']
    assert row['N'][0][0][1] == pytest.approx(0.65)
    assert row['N'][1][0][0] == pytest.approx(-1.3)


def test_connection_as_csv(runner):
    result = runner.invoke(args=['connection', '--example', 'flat', '--format', 'csv'])
    assert result.exit_code == 0
    lines = [line for line in result.output.splitlines() if line]
    assert lines[0] == 'sample,component,i,alpha,k,value'
    # 20 samples, 2 temporal and 4 spatial entries each
    assert len(lines) == 1 + 20 * 6


def test_gml_without_spatial_components(runner, write_config):
    result = runner.invoke(args=['connection', '--config', write_config(DIRECTION_DEPENDENT), '--which', 'gml'])
    assert result.exit_code == 3
    assert 'NoSpatialComponents' in result.output
    assert report_of(result)['error']['type'] == 'NoSpatialComponents'


def test_gml_with_fallback(runner, write_config):
    document = dict(DIRECTION_DEPENDENT, fallback_metric=[['1', '0'], ['0', '1']])
    result = runner.invoke(args=['connection', '--config', write_config(document), '--which', 'gml'])
    assert result.exit_code == 0
    assert report_of(result)['data']['provenance'] == 'GML-apriori'


def test_verify_naturality_on_the_sphere(runner):
    result = runner.invoke(args=['verify', '--which', 'naturality', '--example', 'sphere'])
    assert result.exit_code == 0
    checks = {check['name']: check for check in report_of(result)['checks']}
    assert checks['naturality']['status'] == 'pass'
    assert checks['change-round-trip']['worst'] <= 1e-9


def test_verify_torsion_failure_exits_one(runner, write_config):
    document = dict(catalog.example('flat'), connection=ASYMMETRIC)
    path = write_config(document)
    result = runner.invoke(args=['verify', '--which', 'torsion', '--config', path])
    assert result.exit_code == 1
    report = report_of(result)
    assert report['status'] == 'fail'
    assert report['checks'][0]['worst'] == pytest.approx(1.0)
    result = runner.invoke(args=['verify', '--which', 'torsion', '--config', path, '--tol', '10'])
    assert result.exit_code == 0


def test_verify_torsion_of_gamma_zero(runner):
    result = runner.invoke(args=['verify', '--which', 'torsion', '--example', 'hyperbolic'])
    assert result.exit_code == 0
    assert [check['name'] for check in report_of(result)['checks']] == ['torsion', 'affinity']


def test_verify_regularity(runner):
    result = runner.invoke(args=['verify', '--which', 'regularity', '--example', 'em-quadratic'])
    assert result.exit_code == 0
    report = report_of(result)
    assert report['checks'][0]['name'] == 'kronecker'
    assert report['data']['factor'][0]['g'][1][0] == pytest.approx(0.0)


def test_verify_regularity_failure(runner, write_config):
    document = dict(DIRECTION_DEPENDENT, psi=[['1']])
    result = runner.invoke(args=['verify', '--which', 'regularity', '--config', write_config(document)])
    assert result.exit_code == 1
    checks = {check['name']: check for check in report_of(result)['checks']}
    assert checks['kronecker']['status'] == 'pass'
    assert checks['psi-regularity']['details']['clause'] == 'a: non-quadratic'


def test_verify_regularity_with_a_degenerate_factor(runner, write_config):
    document = dict(DIRECTION_DEPENDENT, fiber_metric=[['1', '0'], ['0', '0']])
    result = runner.invoke(args=['verify', '--which', 'regularity', '--config', write_config(document)])
    assert result.exit_code == 1
    (check,) = report_of(result)['checks']
    assert check['name'] == 'kronecker'
    assert check['status'] == 'fail'
    assert check['details'] == {'rank': 1, 'expected': 2}


def test_verify_equivalence_multi_time(runner):
    result = runner.invoke(args=['verify', '--which', 'equivalence', '--example', 'em-quadratic'])
    assert result.exit_code == 0
    assert report_of(result)['checks'][0]['name'] == 'ml-gml'


def test_verify_equivalence_oscillator(runner):
    result = runner.invoke(args=['verify', '--which', 'equivalence', '--example', 'oscillator'])
    assert result.exit_code == 0
    (check,) = report_of(result)['checks']
    assert check['name'] == 'extremal'
    assert len(check['details']['first_variation']) == 3


def test_geodesic_writes_csv(runner, tmp_path):
    target = tmp_path / 'line.csv'
    result = runner.invoke(args=['geodesic', '--example', 'flat', '--out', str(target)])
    assert result.exit_code == 0
    report = report_of(result)
    assert report['data']['endpoint']['x'] == pytest.approx([1.0, 0.0])
    assert report['data']['csv'] == str(target)
    lines = target.read_text().splitlines()
    assert lines[0] == 't,x1,x2,v1,v2'
    assert len(lines) == 102


def test_sphere_geodesic_passes_its_checks(runner):
    result = runner.invoke(args=['geodesic', '--example', 'sphere', '--steps', '2000'])
    assert result.exit_code == 0
    report = report_of(result)
    assert {check['name'] for check in report['checks']} == {'route-ode', 'speed', 'classical-ode'}
    assert report['data']['endpoint']['x'] == pytest.approx([math.pi / 2, 1.0])


def test_oscillator_by_semispray(runner):
    result = runner.invoke(args=['geodesic', '--example', 'oscillator', '--route', 'semispray', '--steps', '1000'])
    assert result.exit_code == 0
    endpoint = report_of(result)['data']['endpoint']
    assert endpoint['x'][0] == pytest.approx(1.0, abs=1e-6)
    checks = {check['name']: check for check in report_of(result)['checks']}
    assert set(checks) == {'route-ode', 'energy-function'}
    assert checks['energy-function']['worst'] <= 1e-8
    assert checks['route-ode']['status'] == 'pass'


def test_geodesic_needs_enough_steps(runner):
    result = runner.invoke(args=['geodesic', '--example', 'flat', '--steps', '5'])
    assert result.exit_code == 2


def test_energy_of_flat_line(runner):
    result = runner.invoke(args=['energy', '--example', 'flat'])
    assert result.exit_code == 0
    data = report_of(result)['data']
    assert data['energy'] == pytest.approx(13.0)
    assert data['first_variation'] == pytest.approx([0.0, 0.0], abs=1e-8)


@pytest.mark.parametrize('document, path', [
    ({'version': 1, 'temporal_metric': [['1']]}, 'dims'),
    ({'version': 1, 'dims': {'p': 1, 'n': 1}, 'temporal_metric': [['1 + * 2']]}, None),
    ({'version': 2, 'dims': {'p': 1, 'n': 1}, 'temporal_metric': [['1']]}, 'version'),
    ({'version': 1, 'dims': {'p': 1, 'n': 2}, 'temporal_metric': [['1']], 'spatial_metric': [['1']]},
     'spatial_metric'),
])
def test_config_errors_exit_two(runner, write_config, document, path):
    result = runner.invoke(args=['connection', '--config', write_config(document)])
    assert result.exit_code == 2
    error = report_of(result)['error']
    assert error['path'] == path


def test_config_and_example_are_exclusive(runner, write_config):
    path = write_config(catalog.example('flat'))
    assert runner.invoke(args=['connection', '--config', path, '--example', 'flat']).exit_code == 2
    assert runner.invoke(args=['connection']).exit_code == 2


def test_invalid_json(runner, tmp_path):
    path = tmp_path / 'broken.json'
    path.write_text('{"version": 1,', encoding='utf-8')
    result = runner.invoke(args=['connection', '--config', str(path)])
    assert result.exit_code == 2


def test_reports_are_deterministic(runner):
    reports = []
    for _ in range(2):
        report = report_of(runner.invoke(args=['connection', '--example', 'sphere']))
        report.pop('timings')
        reports.append(report)
    assert reports[0] == reports[1]
    assert reports[0]['digest'].startswith('sha256:')


def test_seed_option_moves_the_samples(runner):
    first = report_of(runner.invoke(args=['connection', '--example', 'flat', '--seed', '1']))
    second = report_of(runner.invoke(args=['connection', '--example', 'flat', '--seed', '2']))
    assert first['data']['samples'][0]['point'] != second['data']['samples'][0]['point']
