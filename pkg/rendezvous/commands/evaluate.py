import click
from flask import Blueprint, current_app

from rendezvous.commands import config_option, experiment_config, out_option, reports_errors, seed_option
from rendezvous.harness import evaluate

evaluate_bp = Blueprint('evaluate', __name__, cli_group=None)


@evaluate_bp.cli.command('evaluate')
@config_option
@seed_option
@out_option
@reports_errors
def evaluate_command(config_path, seed, out_dir):
    """
    Run one planner over a seed sweep and write traces, summary.csv and episodes.csv

    python run.py evaluate --config <file> [--seed <int>] [--out <dir>]
    """
    # Getting configuration
    config = experiment_config(config_path, seed, out_dir)

    # Running the sweep
    summary = evaluate(config, config.output_dir)
    current_app.logger.info('evaluation written to %s', config.output_dir)
    click.echo(f'{config.planner} on {config.environment}: success rate {summary.success_rate:.2f}, '
               f'mean final distance {summary.mean_final_distance:.3f}')
