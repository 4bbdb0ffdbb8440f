import click
from flask import current_app

from jetconn.connection import CheckResult, semispray_p1
from jetconn.dynamics import bp
from jetconn.harmonic import (RULES, classical_residual, connection_acceleration, energy, energy_drift, first_variation,
                              integrate_p1, integrate_semispray_p1, ode_residual, semispray_acceleration,
                              speed_drift)
from jetconn.jet import sweep
from jetconn.main.options import problem_options, reported
from jetconn.models import CONSTRUCTIONS

ROUTES = ('connection', 'semispray')


@bp.cli.command('geodesic')
@click.option('--route', type=click.Choice(ROUTES), default='connection', show_default=True)
@click.option('--connection', 'construction', type=click.Choice(CONSTRUCTIONS), default=None,
              help='Connection for the connection route.')
@click.option('--t-span', type=(float, float), default=None, help='Integration interval (defaults to the config).')
@click.option('--steps', type=int, default=None, help='RK4 steps (at least 10).')
@problem_options
@reported('geodesic', out_is_report=False)
def geodesic(problem, report, settings, route, construction, t_span, steps):
    """Integrate a p = 1 trajectory; --out receives the CSV, stdout the report."""
    spec = problem.require_spec('geodesic')
    t_span = list(t_span or spec['t_span'])
    steps = steps or spec['steps']
    bound = current_app.config['BLOWUP_BOUND']
    initial = problem.initial_point()
    if route == 'semispray':
        semispray = semispray_p1(problem.require('lagrangian', 'lagrangian'), problem.h)
        trajectory = integrate_semispray_p1(semispray, problem.h, initial, t_span, steps, bound)
        construction = None
    else:
        construction = construction or problem.default_construction()
        gamma = problem.connection(construction, problem.samples(settings.seed), settings.tolerance('structural'),
                                   settings.seed, settings.workers)
        trajectory = integrate_p1(gamma, problem.h, initial, t_span, steps, bound)

    report.data = {
        'route': route,
        'construction': construction,
        't_span': t_span,
        'steps': steps,
        'method_order': trajectory.method_order,
        'endpoint': {
            't': float(trajectory.times[-1]),
            'x': trajectory.states[-1].tolist(),
            'v': trajectory.velocities[-1].tolist(),
        },
    }
    tol = settings.tolerance('residual')
    if route == 'semispray':
        acceleration = semispray_acceleration(semispray, problem.h)
        drift = energy_drift(problem.lagrangian, trajectory, problem.h)
        if drift is not None:
            report.add_check(CheckResult('energy-function', drift <= tol, drift, None, tol))
    else:
        acceleration = connection_acceleration(gamma)
    residual = ode_residual(trajectory, acceleration)
    report.add_check(CheckResult('route-ode', residual <= tol, residual, None, tol))
    if problem.phi is not None and construction == 'gamma0':
        drift = speed_drift(trajectory, problem.h, problem.phi)
        report.add_check(CheckResult('speed', drift <= tol, drift, None, tol))
        residual = classical_residual(trajectory, problem.h, problem.phi)
        report.add_check(CheckResult('classical-ode', residual <= tol, residual, None, tol))
    if settings.out:
        trajectory.to_csv(settings.out)
        report.data['csv'] = settings.out
        current_app.logger.info('wrote %d nodes to %s', len(trajectory.times), settings.out)
    return trajectory.to_csv()


@bp.cli.command('energy')
@click.option('--nodes', type=int, default=None, help='Quadrature nodes per axis (defaults to the config).')
@click.option('--rule', type=click.Choice(RULES), default=None)
@click.option('--richardson/--no-richardson', default=None, help='Richardson-refine first variations.')
@problem_options
@reported('energy')
def energy_command(problem, report, settings, nodes, rule, richardson):
    """Energy of the configured map and its first variation along each perturbation."""
    spec = problem.require_spec('energy')
    lagrangian = problem.require('lagrangian', 'lagrangian')
    nodes = nodes or spec['nodes']
    rule = rule or spec['rule']
    richardson = spec['richardson'] if richardson is None else richardson
    psi = problem.require('psi', 'psi') if spec['volume'] == 'psi' else None
    f = problem.energy_map()
    value = energy(lagrangian, f, problem.h, nodes, rule, psi)
    variations = sweep(lambda eta: first_variation(lagrangian, f, problem.h, eta, spec['eps'], nodes, rule, richardson,
                                                   psi), problem.perturbations(), settings.workers)
    report.data = {
        'energy': value,
        'nodes': nodes,
        'rule': rule,
        'volume': spec['volume'],
        'first_variation': [float(u) for u in variations],
    }
