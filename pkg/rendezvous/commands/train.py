import click
from flask import Blueprint, current_app

from rendezvous.commands import config_option, experiment_config, out_option, reports_errors, seed_option
from rendezvous.harness import train_models

train_bp = Blueprint('train', __name__, cli_group=None)


@train_bp.cli.command('train')
@config_option
@seed_option
@out_option
@reports_errors
def train_command(config_path, seed, out_dir):
    """
    Train self and other predictors for every configured variant

    python run.py train --config <file> [--seed <int>] [--out <dir>]
    """
    # Getting configuration
    config = experiment_config(config_path, seed, out_dir, needs_planner=False)

    # Training and saving the models
    outcomes = train_models(config, config.output_dir)
    for outcome in outcomes:
        held_out = outcome['final_mse']
        click.echo(f"{outcome['variant']} {outcome['model']}: train mse {outcome['train_final_mse']:.6f}"
                   + ('' if held_out is None else f', held-out mse {held_out:.6f}'))
    current_app.logger.info('models written to %s', config.output_dir)
