import os

import click
from flask import Blueprint

from rendezvous.commands import reports_errors
from rendezvous.harness import MetricsSummary, plot_distances

plot_bp = Blueprint('plot', __name__, cli_group=None)


@plot_bp.cli.command('plot')
@click.argument('summaries', nargs=-1, type=click.Path(exists=True, dir_okay=False))
@click.option('--out', 'out_path', required=True, type=click.Path(dir_okay=False), help='SVG file to write')
@click.option('--title', default='Inter-agent distance', help='Plot title')
@reports_errors
def plot_command(summaries, out_path, title):
    """
    Draw mean distance over time with a one-std band for each summary file

    python run.py plot <summary.csv>... --out <file.svg>
    """
    # Reading summaries
    loaded = [MetricsSummary.read(path) for path in summaries]

    # Rendering the plot
    directory = os.path.dirname(out_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    plot_distances(loaded, out_path, title)
    click.echo(f'wrote {out_path}')
