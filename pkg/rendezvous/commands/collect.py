import click
from flask import Blueprint, current_app

from rendezvous.commands import config_option, experiment_config, out_option, reports_errors, seed_option
from rendezvous.harness import collect

collect_bp = Blueprint('collect', __name__, cli_group=None)


@collect_bp.cli.command('collect')
@config_option
@seed_option
@out_option
@reports_errors
def collect_command(config_path, seed, out_dir):
    """
    Collect P2P trajectories in random worlds and write dataset.npz with manifest.json

    python run.py collect --config <file> [--seed <int>] [--out <dir>]
    """
    # Getting configuration
    config = experiment_config(config_path, seed, out_dir, needs_planner=False)

    # Collecting and saving the dataset
    manifest = collect(config, config.output_dir)
    current_app.logger.info('dataset written to %s', config.output_dir)
    click.echo(f"collected {manifest['trajectories']} trajectories ({manifest['skipped']} skipped), "
               f"{manifest['self_examples']} self and {manifest['other_examples']} other examples")
