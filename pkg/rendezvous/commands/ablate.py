import click
from flask import Blueprint

from rendezvous.commands import config_option, experiment_config, out_option, reports_errors, seed_option
from rendezvous.harness import ABLATIONS, ablate

ablate_bp = Blueprint('ablate', __name__, cli_group=None)


@ablate_bp.cli.command('ablate')
@click.option('--kind', required=True, type=click.Choice(ABLATIONS), help='Which setting to sweep')
@config_option
@seed_option
@out_option
@reports_errors
def ablate_command(kind, config_path, seed, out_dir):
    """
    Evaluate a CEM planner over one ablation sweep and write sweep.csv

    python run.py ablate --kind <kind> --config <file> [--seed <int>] [--out <dir>]
    """
    # Getting configuration
    config = experiment_config(config_path, seed, out_dir)

    # Running every setting
    for label, summary in ablate(config, kind, config.output_dir):
        click.echo(f'{label}: success rate {summary.success_rate:.2f}, '
                   f'mean final distance {summary.mean_final_distance:.3f}')
