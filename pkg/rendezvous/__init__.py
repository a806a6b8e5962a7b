import logging

from flask import Flask
from flask.logging import default_handler
from jinja2.utils import import_string

from instance.config import DevelopmentConfig, PaperScaleConfig, TestingConfig


def create_app(config_name='development'):
    # Create an instance of the Flask app
    return_app = Flask(__name__)

    # Load configuration settings based on the specified environment
    if config_name == 'paper':
        return_app.config.from_object(PaperScaleConfig)
    elif config_name == 'testing':
        return_app.config.from_object(TestingConfig)
    else:
        return_app.config.from_object(DevelopmentConfig)

    # Route package loggers through the app's handler
    package_logger = logging.getLogger(__name__)
    package_logger.setLevel(return_app.config['LOG_LEVEL'])
    if default_handler not in package_logger.handlers:
        package_logger.addHandler(default_handler)
    return_app.logger.setLevel(return_app.config['LOG_LEVEL'])

    # Import and register the experiment commands
    for command_name in return_app.config['COMMANDS']:
        blueprint = import_string(f'rendezvous.commands.{command_name}:{command_name}_bp')
        return_app.register_blueprint(blueprint)

    return return_app
