import logging
import os

from dotenv import load_dotenv

basedir = os.path.abspath(os.path.dirname(__file__))

load_dotenv()


class Config(object):
    DEBUG = False
    TESTING = False
    JETCONN_THREADS = int(os.environ.get('JETCONN_THREADS') or os.cpu_count() or 1)
    DEFAULT_TOLERANCE = 1e-9
    TORSION_TOLERANCE = 1e-10
    NATURALITY_TOLERANCE = 1e-8
    RESIDUAL_TOLERANCE = 1e-8
    DEFAULT_SEED = 20240101
    BLOWUP_BOUND = 1e8
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'WARNING')

    @staticmethod
    def init_app(app):
        # This is an abstract method
        pass


class ProductionConfig(Config):
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO')

    @classmethod
    def init_app(cls, app):
        Config.init_app(app)

        # log to stderr
        from logging import StreamHandler
        handler = StreamHandler()
        handler.setLevel(logging.INFO)
        app.logger.addHandler(handler)


class DevelopmentConfig(Config):
    DEVELOPMENT = True
    DEBUG = True
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'DEBUG')


class TestingConfig(Config):
    TESTING = True
    JETCONN_THREADS = 1


config = {
    'development': DevelopmentConfig,
    'testing': TestingConfig,
    'production': ProductionConfig,

    'default': DevelopmentConfig
}
