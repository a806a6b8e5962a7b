import os

from flask.cli import FlaskGroup

from rendezvous import create_app


def make_app():
    # Pick the configuration from the environment
    return create_app(os.environ.get('RENDEZVOUS_CONFIG', 'development'))


cli = FlaskGroup(create_app=make_app)

if __name__ == '__main__':
    # Run the experiment commands
    cli()
