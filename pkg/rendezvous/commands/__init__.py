from functools import wraps

import click
from flask import current_app
from marshmallow import ValidationError

from rendezvous.errors import RendezvousError
from rendezvous.harness import load_config

config_option = click.option('--config', 'config_path', type=click.Path(dir_okay=False),
                             help='Experiment config file (.json or key=value lines)')
seed_option = click.option('--seed', type=int, default=None, help='Base seed; overrides the config file')
out_option = click.option('--out', 'out_dir', type=click.Path(file_okay=False), default=None,
                          help='Output directory; overrides output_dir')


def experiment_config(config_path, seed=None, out_dir=None, needs_planner=True):
    """
    Load the experiment config for a command on top of the app's defaults

    :param config_path: Config file or None
    :param seed: Optional seed override
    :param out_dir: Optional output directory override
    :param needs_planner: Apply the planner section rules
    :return: The experiment configuration
    """
    overrides = {}
    if out_dir is not None:
        overrides['output_dir'] = out_dir
    if seed is not None:
        overrides.update({'seed': seed, 'seeds': None})
    return load_config(config_path, current_app.config['EXPERIMENT_DEFAULTS'], overrides, needs_planner)


def reports_errors(command):
    """
    Turn configuration, validation and pipeline errors into a one-line message and exit status 1
    """
    @wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except ValidationError as e:
            current_app.logger.error('invalid configuration: %s', e.messages)
            raise click.ClickException(f'invalid configuration: {e.messages}') from e
        except (RendezvousError, ValueError, OSError) as e:
            current_app.logger.error('%s failed: %s', command.__name__, e)
            raise click.ClickException(str(e)) from e

    return wrapper
