import functools
import json
import time
from dataclasses import dataclass

import click
from flask import current_app

from jetconn import catalog
from jetconn.errors import ConfigError, JetconnError
from jetconn.models import Problem, ProblemConfig, Report
from jetconn.schema import dump_report, load_config

TOLERANCE_KEYS = {
    'structural': 'DEFAULT_TOLERANCE',
    'torsion': 'TORSION_TOLERANCE',
    'naturality': 'NATURALITY_TOLERANCE',
    'residual': 'RESIDUAL_TOLERANCE',
}


@dataclass
class Settings:
    """Per-invocation knobs: command-line overrides on top of the config and the app config."""

    config: ProblemConfig
    seed: int
    tol: float
    workers: int
    out: str
    fmt: str

    def tolerance(self, key):
        if self.tol is not None:
            return self.tol
        return self.config.tolerance(key, current_app.config[TOLERANCE_KEYS[key]])


def problem_options(fn):
    options = [
        click.option('--config', 'config_path', type=click.Path(dir_okay=False), help='Problem definition (JSON).'),
        click.option('--example', type=click.Choice(sorted(catalog.EXAMPLES)), help='Use a builtin problem.'),
        click.option('--seed', type=int, help='Seed for random sample points.'),
        click.option('--tol', type=float, help='Override the check tolerance.'),
        click.option('--out', type=click.Path(dir_okay=False), help='Output file.'),
        click.option('--format', 'fmt', type=click.Choice(['json', 'csv']), default='json', show_default=True),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def read_problem(config_path, example) -> ProblemConfig:
    if (config_path is None) == (example is None):
        raise ConfigError('give exactly one of --config FILE or --example NAME')
    if example is not None:
        return load_config(catalog.example(example))
    try:
        with open(config_path, encoding='utf-8') as handle:
            document = json.load(handle)
    except OSError as error:
        raise ConfigError(f'cannot read {config_path}: {error.strerror}') from error
    except json.JSONDecodeError as error:
        raise ConfigError(f'invalid JSON: {error.msg}', f'line {error.lineno} column {error.colno}') from error
    return load_config(document)


def _write(text, path):
    with open(path, 'w', encoding='utf-8') as handle:
        handle.write(text)
        if not text.endswith('\n'):
            handle.write('\n')


def reported(command, out_is_report=True):
    """Run a command body against a loaded problem and emit its report.

    The body receives ``(problem, report, settings, **options)`` and may return
    a CSV rendering that replaces the report under ``--format csv``.
    """

    def decorator(fn):
        @functools.wraps(fn)
        def wrapper(config_path, example, seed, tol, out, fmt, **options):
            report = Report(command)
            started = time.perf_counter()
            output = None
            try:
                config = read_problem(config_path, example)
                report.digest = config.digest
                problem = Problem.build(config)
                settings = Settings(config, problem.seed(seed, current_app.config['DEFAULT_SEED']), tol,
                                    current_app.config['JETCONN_THREADS'], out, fmt)
                current_app.logger.info('%s on %r (seed %d)', command, config, settings.seed)
                output = fn(problem, report, settings, **options)
            except JetconnError as error:
                current_app.logger.error('%s failed: %s', command, error)
                click.echo(f'error: {type(error).__name__}: {error}', err=True)
                report.record_error(error)
            report.timings['total_s'] = round(time.perf_counter() - started, 6)

            text = output if fmt == 'csv' and output is not None and report.error is None else dump_report(report)
            if out and out_is_report:
                _write(text, out)
            elif out:
                # the body wrote its own artifact to --out
                click.echo(dump_report(report))
            else:
                click.echo(text)
            click.get_current_context().exit(report.exit_code)

        return wrapper

    return decorator
