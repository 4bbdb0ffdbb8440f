import logging
import os

from flask import Flask

from jetconn.config import config
from jetconn.extensions import marshmallow

__version__ = '1.0.0'


def create_app(config_class=None):
    if config_class is None:
        config_class = config[os.environ.get('JETCONN_CONFIG', 'default')]
    app = Flask(__name__)
    app.config.from_object(config_class)
    config_class.init_app(app)

    logging.getLogger('jetconn').setLevel(app.config['LOG_LEVEL'])
    app.logger.setLevel(app.config['LOG_LEVEL'])

    # Initialize Flask extensions here
    marshmallow.init_app(app)

    # Register blueprints here
    from jetconn.main import bp as main_bp
    app.register_blueprint(main_bp)

    from jetconn.dynamics import bp as dynamics_bp
    app.register_blueprint(dynamics_bp)

    return app
