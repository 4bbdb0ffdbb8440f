import io
import json
import logging

import click
import numpy as np
from flask import current_app

from jetconn import catalog, smooth
from jetconn.connection import (CheckResult, QuadraticLagrangian, affinity_check, canonical_gml, canonical_ml_pge2,
                                energy_lagrangian, gamma_zero, group_action_check, kronecker_factor,
                                naturality_check, psi_regularity, semispray_p1, torsion_free_check,
                                vertical_metric_from_fiber_metric)
from jetconn.errors import ConfigError, DegenerateFactor, NotRegular
from jetconn.harmonic import (SmoothMap, classical_residual, first_variation, integrate_p1, integrate_semispray_p1,
                              speed_drift)
from jetconn.jet import prolong, sweep
from jetconn.main import bp
from jetconn.main.options import problem_options, reported
from jetconn.models import CONSTRUCTIONS

logger = logging.getLogger(__name__)

CHECKS = ('naturality', 'torsion', 'regularity', 'equivalence')
EXTREMAL_TOLERANCE = 1e-5


def _coefficient_row(connection, jp):
    m, n = (smooth.values_of(c) for c in connection.coefficients(jp))
    return {'point': jp.to_dict(), 'M': m.tolist(), 'N': n.tolist()}


def coefficient_csv(rows) -> str:
    buffer = io.StringIO()
    buffer.write('sample,component,i,alpha,k,value\n')
    for s, row in enumerate(rows):
        for name in ('M', 'N'):
            for (i, a, k), value in np.ndenumerate(np.asarray(row[name])):
                buffer.write(f'{s},{name},{i + 1},{a + 1},{k + 1},{value:.17g}\n')
    return buffer.getvalue()


@bp.cli.command('connection')
@click.option('--which', type=click.Choice(CONSTRUCTIONS), default=None,
              help='Construction; defaults to user, then gamma0, then ml.')
@problem_options
@reported('connection')
def connection(problem, report, settings, which):
    """Build a canonical connection and tabulate M, N at the sample points."""
    which = which or problem.default_construction()
    samples = problem.samples(settings.seed)
    gamma = problem.connection(which, samples, settings.tolerance('structural'), settings.seed, settings.workers)
    rows = sweep(lambda jp: _coefficient_row(gamma, jp), samples, settings.workers)
    report.data = {
        'construction': which,
        'provenance': gamma.provenance.value,
        'dims': list(problem.dims),
        'samples': rows,
    }
    return coefficient_csv(rows)


# -- verify --------------------------------------------------------------------------

def _verify_naturality(problem, report, settings, construction):
    samples = problem.samples(settings.seed)
    change = problem.require('change', 'change')
    structural = settings.tolerance('structural')
    round_trip = change.round_trip_error(samples)
    report.add_check(CheckResult('change-round-trip', round_trip <= structural, round_trip, None, structural))
    gamma = problem.connection(construction, samples, structural, settings.seed, settings.workers)
    tol = settings.tolerance('naturality')
    if construction == 'user':
        report.add_check(group_action_check(gamma, change, samples, tol, settings.workers))
        return
    pushed = problem.pushed()
    moved = [prolong(change, jp) for jp in samples]
    direct = pushed.connection(construction, moved, structural, settings.seed, settings.workers)
    report.add_check(naturality_check(gamma, direct, change, samples, tol, settings.workers))


def _verify_torsion(problem, report, settings, construction):
    samples = problem.samples(settings.seed)
    structural = settings.tolerance('structural')
    gamma = problem.connection(construction, samples, structural, settings.seed, settings.workers)
    report.data['provenance'] = gamma.provenance.value
    report.add_check(torsion_free_check(gamma, samples, settings.tolerance('torsion'), settings.workers))
    if gamma.provenance.affine:
        report.add_check(affinity_check(gamma, samples, structural, settings.workers))


def _failed_structure(name, error, tol) -> CheckResult:
    if isinstance(error, DegenerateFactor):
        return CheckResult(name, False, float(error.expected - error.rank), {'point': error.where}, tol,
                           {'rank': error.rank, 'expected': error.expected})
    return CheckResult(name, False, error.residual, {'point': error.where}, tol, {'clause': error.clause})


def _verify_regularity(problem, report, settings, construction):
    samples = problem.samples(settings.seed)
    tol = settings.tolerance('structural')
    G = problem.vertical_metric()
    try:
        factor = kronecker_factor(G, problem.h, samples, tol, settings.workers)
    except (NotRegular, DegenerateFactor) as error:
        report.add_check(_failed_structure('kronecker', error, tol))
    else:
        report.add_check(CheckResult('kronecker', True, factor.residual, factor.location, tol))
        report.data['factor'] = [{'point': jp.to_dict(), 'g': smooth.values_of(factor(jp)).tolist()}
                                 for jp in samples]
    if problem.psi is None:
        return
    try:
        regular = psi_regularity(energy_lagrangian(G), problem.psi, samples, tol, settings.seed, settings.workers)
    except (NotRegular, DegenerateFactor) as error:
        report.add_check(_failed_structure('psi-regularity', error, tol))
    else:
        report.add_check(CheckResult('psi-regularity', True, max(regular.residual_quadratic, regular.residual_product),
                                     None, tol))


def _verify_equivalence(problem, report, settings, construction):
    if problem.p == 1:
        _equivalence_p1(problem, report, settings)
    else:
        _equivalence_multi_time(problem, report, settings)
    if not report.checks:
        raise ConfigError('equivalence needs a spatial_metric with a geodesic, or a lagrangian with energy '
                          'perturbations (p = 1), or a quadratic g (p >= 2)')


def _equivalence_p1(problem, report, settings):
    bound = current_app.config['BLOWUP_BOUND']
    tol = settings.tolerance('residual')
    if problem.phi is not None and problem.config.geodesic is not None:
        spec = problem.config.geodesic
        trajectory = integrate_p1(gamma_zero(problem.h, problem.phi), problem.h, problem.initial_point(),
                                  spec['t_span'], spec['steps'], bound)
        residual = classical_residual(trajectory, problem.h, problem.phi)
        report.add_check(CheckResult('classical-ode', residual <= tol, residual, None, tol))
        drift = speed_drift(trajectory, problem.h, problem.phi)
        report.add_check(CheckResult('speed', drift <= tol, drift, None, tol))
    spec = problem.config.energy
    if problem.lagrangian is None or spec is None or not spec['perturbations']:
        return
    # extremals of the energy: integrate the semispray across the energy domain
    initial = problem.initial_point() if problem.config.geodesic is not None else None
    if initial is None:
        raise ConfigError('required for the extremal check', 'geodesic')
    domain = spec.get('domain') or [[0.0, 1.0]]
    steps = problem.config.geodesic['steps']
    semispray = semispray_p1(problem.lagrangian, problem.h)
    trajectory = integrate_semispray_p1(semispray, problem.h, initial, domain[0], steps, bound)
    extremal = SmoothMap.from_trajectory(trajectory)
    variations = sweep(lambda eta: first_variation(problem.lagrangian, extremal, problem.h, eta, spec['eps'],
                                                   rule=spec['rule'], richardson=spec['richardson']),
                       problem.perturbations(), settings.workers)
    worst = float(np.max(np.abs(variations)))
    report.add_check(CheckResult('extremal', worst <= EXTREMAL_TOLERANCE, worst, None, EXTREMAL_TOLERANCE,
                                 {'first_variation': [float(u) for u in variations]}))


def _equivalence_multi_time(problem, report, settings):
    quadratic = problem.quadratic
    if not isinstance(quadratic, QuadraticLagrangian):
        return
    samples = problem.samples(settings.seed)
    structural = settings.tolerance('structural')
    ml = canonical_ml_pge2(QuadraticLagrangian(problem.h, quadratic.g))
    G = vertical_metric_from_fiber_metric(quadratic.g, problem.h)
    gml = canonical_gml(G, problem.h, problem.h, None, samples, structural, settings.seed, settings.workers)

    def gap(jp):
        return float(np.max(np.abs(smooth.values_of(ml.spatial(jp)) - smooth.values_of(gml.spatial(jp))))), jp

    results = sweep(gap, samples, settings.workers)
    worst, location = max(results, key=lambda item: item[0])
    report.add_check(CheckResult('ml-gml', worst <= structural, worst, location.to_dict(), structural))


VERIFIERS = {
    'naturality': _verify_naturality,
    'torsion': _verify_torsion,
    'regularity': _verify_regularity,
    'equivalence': _verify_equivalence,
}


@bp.cli.command('verify')
@click.option('--which', type=click.Choice(CHECKS), required=True, help='Property to verify.')
@click.option('--connection', 'construction', type=click.Choice(CONSTRUCTIONS), default=None,
              help='Connection under test; defaults as for the connection command.')
@problem_options
@reported('verify')
def verify(problem, report, settings, which, construction):
    """Check a structural property; exits 1 when any check fails."""
    construction = construction or problem.default_construction()
    report.data['check'] = which
    report.data['construction'] = construction
    VERIFIERS[which](problem, report, settings, construction)


@bp.cli.command('example')
@click.argument('name', type=click.Choice(sorted(catalog.EXAMPLES)))
@click.option('--out', type=click.Path(dir_okay=False), help='Write the config here instead of stdout.')
def example(name, out):
    """Print a builtin problem definition."""
    text = json.dumps(catalog.example(name), indent=2, sort_keys=True)
    if out:
        with open(out, 'w', encoding='utf-8') as handle:
            handle.write(text + '\n')
    else:
        click.echo(text)
