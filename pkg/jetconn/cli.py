from flask.cli import FlaskGroup

from jetconn import create_app

cli = FlaskGroup(
    name='jetconn',
    help='Canonical nonlinear connections on J1(T,M) and h-harmonic maps.',
    create_app=create_app,
    add_default_commands=False,
    add_version_option=False,
)
