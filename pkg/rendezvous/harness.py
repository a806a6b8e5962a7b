"""
Experiment pipeline behind the command line: configuration loading, dataset
collection, predictor training, evaluation sweeps, ablations and distance plots.
"""
from __future__ import annotations

import copy
import csv
import json
import logging
import os
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Optional, Sequence

import numpy as np

from schemas.experiment_schema import CEM_PLANNERS, ExperimentSchema
from .baselines import CentralizedPlanner, RrtCemPlanner, RrtFollower, RrtParams
from .controller import ControllerParams, P2PController
from .dataset import collect_dataset, load_dataset, save_dataset
from .errors import ConfigurationError, ParseError
from .geometry import N_RAYS, World, make_environment
from .kinematics import run_episode, spawn
from .models import EpisodeConfig, EpisodeTrace
from .planner import HppPlanner, PlannerConfig
from .predictor import HIDDEN_WIDTHS, VARIANTS, PredictorNet, load_weights, save_weights, train

logger = logging.getLogger(__name__)

ABLATIONS = ('planning_frequency', 'planning_horizon', 'prediction_type', 'cem_params')
SUMMARY_COLUMNS = ['step', 'mean_distance', 'std_distance']
EPISODE_COLUMNS = ['seed', 'success', 'time_to_rendezvous', 'final_distance']
LOSS_COLUMNS = ['epoch', 'model', 'variant', 'mse']
HELDOUT_COLUMNS = ['model', 'variant', 'initial_mse', 'final_mse', 'train_final_mse']
SWEEP_COLUMNS = ['kind', 'setting', 'success_rate', 'mean_final_distance', 'std_final_distance']
PALETTE = ['#1f77b4', '#d62728', '#2ca02c', '#ff7f0e', '#9467bd', '#8c564b', '#e377c2']


@dataclass(frozen=True)
class PredictorSettings:
    variant: str = 'delta-pose-lidar'
    models_dir: Optional[str] = None
    hidden: tuple = HIDDEN_WIDTHS
    activation: str = 'tanh'


@dataclass(frozen=True)
class CollectSettings:
    n_trajectories: int = 2000
    environment: str = 'training_random'


@dataclass(frozen=True)
class TrainSettings:
    dataset: Optional[str] = None
    epochs: int = 2000
    batch_size: int = 500
    learning_rate: float = 1e-3
    optimizer: str = 'adam'
    held_out_fraction: float = 0.1
    variants: tuple = ('delta-pose-lidar',)
    log_every: int = 100


@dataclass(frozen=True)
class AblationSettings:
    horizons: tuple = (3, 5, 10)
    frequencies: tuple = (5, 10, 15)
    iterations: tuple = (5, 10, 15)
    elites: tuple = (3, 5, 10)
    variants: tuple = VARIANTS
    prediction_environment: str = 'wall'


@dataclass(frozen=True)
class ExperimentConfig:
    environment: str = 'simple'
    world_seed: int = 0
    planner: str = 'hpp'
    seeds: tuple = tuple(range(10))
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    policies: tuple = ('p2p', 'p2p')
    controller: ControllerParams = field(default_factory=ControllerParams)
    agent_controllers: dict = field(default_factory=dict)
    planner_config: PlannerConfig = field(default_factory=PlannerConfig)
    rrt: RrtParams = field(default_factory=RrtParams)
    predictor: PredictorSettings = field(default_factory=PredictorSettings)
    collect: CollectSettings = field(default_factory=CollectSettings)
    train: TrainSettings = field(default_factory=TrainSettings)
    ablation: AblationSettings = field(default_factory=AblationSettings)
    output_dir: str = 'output'

    @classmethod
    def from_dict(cls, data: dict) -> 'ExperimentConfig':
        """
        Build a config from data already validated by ExperimentSchema
        :param data: Deserialized schema data
        :type data: dict
        :return: The experiment configuration
        :rtype: ExperimentConfig
        """
        lidar = data['lidar']
        episode = EpisodeConfig(**data['episode'], lidar_max_range=lidar['max_range'],
                                lidar_noise_std=lidar['noise_std'])
        seeds = data.get('seeds') or list(range(data['seed'], data['seed'] + data['n_seeds']))
        policies = data.get('policies') or ['p2p'] * episode.n_agents
        agent_controllers = {policy: ControllerParams(**{**data['controller'], **values}, policy=policy)
                             for policy, values in (data.get('agent_controllers') or {}).items()}
        predictor = dict(data['predictor'], hidden=tuple(data['predictor']['hidden']))
        return cls(
            environment=data['environment'],
            world_seed=data['world_seed'],
            planner=data['planner'],
            seeds=tuple(seeds),
            episode=episode,
            policies=tuple(policies),
            controller=ControllerParams(**data['controller']),
            agent_controllers=agent_controllers,
            planner_config=PlannerConfig(**data['planner_config'], d=episode.rendezvous_d),
            rrt=RrtParams(**data['rrt'], radius=episode.agent_radius),
            predictor=PredictorSettings(**predictor),
            collect=CollectSettings(**data['collect']),
            train=TrainSettings(**dict(data['train'], variants=tuple(data['train']['variants']))),
            ablation=AblationSettings(**{key: tuple(value) if isinstance(value, list) else value
                                         for key, value in data['ablation'].items()}),
            output_dir=data['output_dir'],
        )

    def controller_for(self, policy: str) -> ControllerParams:
        return self.agent_controllers.get(policy, replace(self.controller, policy=policy))


def _parse_value(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except ValueError:
        pass
    if ',' in text:
        return [_parse_value(item) for item in text.split(',') if item.strip()]
    return text


def read_config_file(path: str) -> dict:
    """
    Read a JSON config file or plain-text key=value lines with dotted keys
    :param path: Path of the config file
    :type path: str
    :return: Nested dict of the values written in the file
    :rtype: dict
    :raises ConfigurationError: If the file does not exist
    :raises ParseError: If a line or the JSON document is malformed
    """
    if not os.path.exists(path):
        raise ConfigurationError(f'config file not found: {path}')
    with open(path, encoding='utf-8') as f:
        text = f.read()
    if path.endswith('.json'):
        try:
            data = json.loads(text)
        except ValueError as e:
            raise ParseError(path, getattr(e, 'lineno', 1), str(e)) from e
        if not isinstance(data, dict):
            raise ParseError(path, 1, 'expected a JSON object')
        return data

    data = {}
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        key, sep, value = line.partition('=')
        key = key.strip()
        if not sep or not key:
            raise ParseError(path, line_number, f'expected key=value, got {line!r}')
        target = data
        *sections, leaf = key.split('.')
        for section in sections:
            target = target.setdefault(section, {})
            if not isinstance(target, dict):
                raise ParseError(path, line_number, f'{section} is not a section')
        target[leaf] = _parse_value(value)
    return data


def deep_merge(base: dict, override: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_config(path: Optional[str], defaults: dict, overrides: Optional[dict] = None,
                needs_planner: bool = True) -> ExperimentConfig:
    """
    Merge a config file over the defaults, apply command line overrides and validate.

    :param path: Config file, or None to run on the defaults
    :param defaults: EXPERIMENT_DEFAULTS of the active config class
    :param overrides: Top-level values applied last
    :param needs_planner: Check the planner section rules
    :return: The validated configuration
    :rtype: ExperimentConfig
    :raises marshmallow.ValidationError: If the merged data is invalid
    """
    raw = read_config_file(path) if path else {}
    merged = deep_merge(defaults, raw)
    merged = deep_merge(merged, overrides or {})
    data = ExperimentSchema().load(merged, raw=raw, needs_planner=needs_planner)
    return ExperimentConfig.from_dict(data)


def build_world(config: ExperimentConfig) -> World:
    return make_environment(config.environment, config.world_seed)


def model_filename(role: str) -> str:
    return 'self.weights' if role == 'self' else f"other-{role.split(':', 1)[1]}.weights"


def load_models(config: ExperimentConfig) -> dict[str, PredictorNet]:
    """
    Load the self model and one other model per policy for the configured variant.

    :raises ConfigurationError: If a model is missing or does not match the episode settings
    """
    directory = os.path.join(config.predictor.models_dir, config.predictor.variant)
    roles = ['self'] + [f'other:{policy}' for policy in sorted(set(config.policies))]
    models = {}
    for role in roles:
        path = os.path.join(directory, model_filename(role))
        if not os.path.exists(path):
            raise ConfigurationError(f'missing model: {path}')
        net = load_weights(path)
        if net.variant != config.predictor.variant:
            raise ConfigurationError(f'{path} holds a {net.variant} model, expected {config.predictor.variant}')
        if net.history != config.episode.history_length or net.n_rays != N_RAYS:
            raise ConfigurationError(f'{path} expects {net.history} x {net.n_rays} windows, episodes provide '
                                     f'{config.episode.history_length} x {N_RAYS}')
        models[role] = net
    return models


def build_agents(config: ExperimentConfig, world: World, seed: int,
                 models: Optional[dict] = None) -> tuple[list, list]:
    """
    One planner and one controller per agent, each with its own state and generator.
    """
    n = config.episode.n_agents
    planners, controllers = [], []
    for i in range(n):
        params = config.controller_for(config.policies[i])
        controller = P2PController(params)
        if config.planner == 'hpp':
            others = [models[f'other:{config.policies[j]}'] for j in range(n) if j != i]
            planner = HppPlanner(models['self'], others, config.planner_config, seed, i, world.bounds)
        elif config.planner == 'rrt_cem':
            planner = RrtCemPlanner(world, config.planner_config, config.rrt, seed, i)
        elif config.planner.startswith('centralized_'):
            planner = CentralizedPlanner(config.planner.split('_')[1].upper(), seed, world.bounds)
        else:
            planner = CentralizedPlanner(config.planner.split('_')[1].upper(), seed, world.bounds,
                                         config.rrt.replan_period)
            controller = RrtFollower(world, config.rrt, params, seed, i)
        planners.append(planner)
        controllers.append(controller)
    return planners, controllers


def run_seed(config: ExperimentConfig, world: World, seed: int, models: Optional[dict] = None,
             planning_order: Optional[Sequence[int]] = None) -> EpisodeTrace:
    episode = replace(config.episode, rng_seed=seed)
    states = spawn(episode, world, config.policies)
    planners, controllers = build_agents(config, world, seed, models)
    return run_episode(episode, world, planners, controllers, states=states, planning_order=planning_order)


def padded_distances(trace: EpisodeTrace, length: int) -> np.ndarray:
    """
    Inter-agent distance per step, padded with the last value up to `length` steps.
    """
    distances = trace.distances()
    if len(distances) < length:
        distances = np.concatenate([distances, np.full(length - len(distances), distances[-1])])
    return distances[:length]


@dataclass
class MetricsSummary:
    label: str
    mean: np.ndarray
    std: np.ndarray
    success_rate: float
    times: list
    final_distances: np.ndarray
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_traces(cls, traces: Sequence[EpisodeTrace], label: str, length: int,
                    metadata: Optional[dict] = None) -> 'MetricsSummary':
        distances = np.array([padded_distances(trace, length) for trace in traces])
        return cls(
            label=label,
            mean=distances.mean(axis=0),
            std=distances.std(axis=0),
            success_rate=float(np.mean([trace.success for trace in traces])),
            times=[trace.rendezvous_step if trace.success else None for trace in traces],
            final_distances=np.array([trace.final_distance() for trace in traces]),
            metadata=dict(metadata or {}),
        )

    @property
    def n_steps(self) -> int:
        return len(self.mean)

    @property
    def mean_final_distance(self) -> float:
        return float(np.mean(self.final_distances))

    def write(self, path: str) -> None:
        times = ','.join('timeout' if t is None else str(t) for t in self.times)
        header = {'label': self.label, **self.metadata, 'success_rate': f'{self.success_rate:.6f}',
                  'time_to_rendezvous': times,
                  'final_distances': ','.join(f'{d:.6f}' for d in self.final_distances)}
        with open(path, 'w', newline='', encoding='utf-8') as f:
            for key, value in header.items():
                f.write(f'# {key}={value}\n')
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(SUMMARY_COLUMNS)
            for step, (mean, std) in enumerate(zip(self.mean, self.std)):
                writer.writerow([step, f'{mean:.6f}', f'{std:.6f}'])

    @classmethod
    def read(cls, path: str) -> 'MetricsSummary':
        """
        Parse a summary written by write
        :param path: Summary CSV path
        :type path: str
        :return: The summary
        :rtype: MetricsSummary
        :raises ParseError: On the first malformed line
        """
        header, rows = {}, []
        seen_columns = False
        with open(path, encoding='utf-8') as f:
            lines = f.read().splitlines()
        for line_number, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            if line.startswith('#'):
                key, sep, value = line[1:].strip().partition('=')
                if not sep or seen_columns:
                    raise ParseError(path, line_number, f'malformed header line: {line!r}')
                header[key.strip()] = value.strip()
                continue
            fields_ = line.split(',')
            if not seen_columns:
                if fields_ != SUMMARY_COLUMNS:
                    raise ParseError(path, line_number, f'expected columns {",".join(SUMMARY_COLUMNS)}')
                seen_columns = True
                continue
            try:
                step, mean, std = int(fields_[0]), float(fields_[1]), float(fields_[2])
            except (ValueError, IndexError) as e:
                raise ParseError(path, line_number, f'malformed row: {line!r}') from e
            if len(fields_) != 3 or step != len(rows):
                raise ParseError(path, line_number, f'malformed row: {line!r}')
            if mean < 0 or std < 0:
                raise ParseError(path, line_number, 'distances must be non-negative')
            rows.append((mean, std))
        if not rows:
            raise ParseError(path, len(lines), 'no distance rows')

        try:
            success_rate = float(header.pop('success_rate', 'nan'))
            times = [None if t == 'timeout' else int(t) for t in header.pop('time_to_rendezvous', '').split(',') if t]
            finals = [float(d) for d in header.pop('final_distances', '').split(',') if d]
        except ValueError as e:
            raise ParseError(path, 1, f'malformed summary header: {e}') from e
        rows = np.array(rows)
        label = header.pop('label', os.path.splitext(os.path.basename(path))[0])
        return cls(label, rows[:, 0], rows[:, 1], success_rate, times, np.array(finals), header)


def write_episodes(path: str, seeds: Sequence[int], traces: Sequence[EpisodeTrace]) -> None:
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(EPISODE_COLUMNS)
        for seed, trace in zip(seeds, traces):
            time = str(trace.rendezvous_step) if trace.success else 'timeout'
            writer.writerow([seed, int(trace.success), time, f'{trace.final_distance():.6f}'])


def collect(config: ExperimentConfig, out_dir: str) -> dict:
    """
    Collect a dataset and write dataset.npz plus manifest.json
    :param config: Experiment configuration
    :type config: ExperimentConfig
    :param out_dir: Output directory
    :type out_dir: str
    :return: The manifest
    :rtype: dict
    """
    os.makedirs(out_dir, exist_ok=True)
    controllers = {policy: P2PController(config.controller_for(policy)) for policy in set(config.policies)}
    episode = replace(config.episode, rng_seed=config.seeds[0])
    d_self, d_other = collect_dataset(partial(make_environment, config.collect.environment), controllers,
                                      config.collect.n_trajectories, config.seeds[0], episode, config.policies)
    data = d_self.trajectories
    save_dataset(data, os.path.join(out_dir, 'dataset.npz'))

    manifest = {
        'seed': config.seeds[0],
        'environment': config.collect.environment,
        'requested_trajectories': config.collect.n_trajectories,
        'trajectories': data.n_trajectories,
        'skipped': data.skipped,
        'steps': data.n_steps,
        'history': data.history,
        'n_rays': data.n_rays,
        'n_agents': data.n_agents,
        'policies': list(config.policies),
        'windows_per_trajectory': data.windows_per_trajectory,
        'self_examples': len(d_self),
        'other_examples': len(d_other),
    }
    with open(os.path.join(out_dir, 'manifest.json'), 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write('\n')
    return manifest


def train_models(config: ExperimentConfig, out_dir: str) -> list[dict]:
    """
    Train self and other models for every configured variant.

    Writes models/<variant>/*.weights, loss.csv and heldout.csv under out_dir.

    :raises ConfigurationError: If the dataset is missing
    """
    path = config.train.dataset or os.path.join(config.output_dir, 'dataset.npz')
    if not os.path.exists(path):
        raise ConfigurationError(f'dataset not found: {path}')
    data = load_dataset(path)
    settings = config.train
    seed = config.seeds[0]

    outcomes = []
    loss_rows = []
    for variant in settings.variants:
        os.makedirs(os.path.join(out_dir, 'models', variant), exist_ok=True)
        roles = ['self'] + [f'other:{policy}' for policy in data.policy_ids()]
        for role in roles:
            training, held_out = data.examples(role, variant).split(settings.held_out_fraction, seed)
            net = PredictorNet.initialize(variant, role, seed, config.predictor.hidden, data.history, data.n_rays,
                                          config.predictor.activation)
            result = train(net, training, settings.epochs, settings.batch_size, settings.learning_rate, seed,
                           settings.optimizer, held_out, log_every=settings.log_every)
            filename = model_filename(role)
            save_weights(result.net, os.path.join(out_dir, 'models', variant, filename))
            model = filename[:-len('.weights')]
            loss_rows += [[epoch, model, variant, f'{mse:.6f}'] for epoch, mse in enumerate(result.losses)]
            outcomes.append({'model': model, 'variant': variant, 'initial_mse': result.validation_initial,
                             'final_mse': result.validation_final, 'train_final_mse': float(result.losses[-1])})
            logger.info('trained %s %s: final mse %.6f', model, variant, result.losses[-1])

    with open(os.path.join(out_dir, 'loss.csv'), 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(LOSS_COLUMNS)
        writer.writerows(loss_rows)
    with open(os.path.join(out_dir, 'heldout.csv'), 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(HELDOUT_COLUMNS)
        for outcome in outcomes:
            writer.writerow([outcome['model'], outcome['variant']] +
                            ['' if outcome[key] is None else f'{outcome[key]:.6f}'
                             for key in ('initial_mse', 'final_mse', 'train_final_mse')])
    return outcomes


def evaluate(config: ExperimentConfig, out_dir: str) -> MetricsSummary:
    """
    Run one episode per seed and write traces/seed_<k>.csv, summary.csv and episodes.csv.

    :raises ConfigurationError: If required models are missing or mismatched (before any episode)
    """
    world = build_world(config)
    models = load_models(config) if config.planner == 'hpp' else None
    os.makedirs(os.path.join(out_dir, 'traces'), exist_ok=True)

    traces = []
    for seed in config.seeds:
        trace = run_seed(config, world, seed, models)
        trace.write_csv(os.path.join(out_dir, 'traces', f'seed_{seed}.csv'),
                        with_decisions=config.planner in CEM_PLANNERS)
        traces.append(trace)
        logger.info('%s %s seed %d: success=%s final distance %.3f', config.planner, config.environment, seed,
                    trace.success, trace.final_distance())

    metadata = {'environment': config.environment, 'planner': config.planner,
                'seeds': ','.join(str(s) for s in config.seeds)}
    if config.planner == 'hpp':
        metadata['variant'] = config.predictor.variant
    summary = MetricsSummary.from_traces(traces, config.planner, config.episode.max_steps, metadata)
    summary.write(os.path.join(out_dir, 'summary.csv'))
    write_episodes(os.path.join(out_dir, 'episodes.csv'), config.seeds, traces)
    return summary


def ablation_settings(config: ExperimentConfig, kind: str) -> list[tuple[str, ExperimentConfig]]:
    """
    :raises ConfigurationError: On an unknown kind or a planner without CEM settings
    """
    if kind not in ABLATIONS:
        raise ConfigurationError(f'unknown ablation kind: {kind}')
    if config.planner not in CEM_PLANNERS:
        raise ConfigurationError(f'{kind} ablation needs a CEM planner, not {config.planner}')
    if kind == 'prediction_type' and config.planner != 'hpp':
        raise ConfigurationError('prediction_type ablation needs the hpp planner')

    pc = config.planner_config
    ablation = config.ablation
    if kind == 'planning_frequency':
        return [(f'T_h_{t}', replace(config, planner_config=replace(pc, T_h=t))) for t in ablation.frequencies]
    if kind == 'planning_horizon':
        return [(f'T_{t}', replace(config, planner_config=replace(pc, T=t))) for t in ablation.horizons]
    if kind == 'prediction_type':
        return [(variant, replace(config, environment=ablation.prediction_environment,
                                  predictor=replace(config.predictor, variant=variant)))
                for variant in ablation.variants]
    return [(f'iterations_{i}_elites_{m}', replace(config, planner_config=replace(pc, max_iterations=i, M=m)))
            for i in ablation.iterations for m in ablation.elites if m <= pc.N]


def ablate(config: ExperimentConfig, kind: str, out_dir: str) -> list[tuple[str, MetricsSummary]]:
    """
    Evaluate every setting of one ablation; writes a summary per setting and sweep.csv.
    """
    settings = ablation_settings(config, kind)
    results = []
    for label, setting in settings:
        summary = evaluate(setting, os.path.join(out_dir, label))
        summary.label = label
        summary.write(os.path.join(out_dir, label, 'summary.csv'))
        results.append((label, summary))
        logger.info('%s %s: success rate %.2f, mean final distance %.3f', kind, label, summary.success_rate,
                    summary.mean_final_distance)

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, 'sweep.csv'), 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(SWEEP_COLUMNS)
        for label, summary in results:
            writer.writerow([kind, label, f'{summary.success_rate:.6f}', f'{summary.mean_final_distance:.6f}',
                             f'{float(np.std(summary.final_distances)):.6f}'])
    return results


def plot_distances(summaries: Sequence[MetricsSummary], path: str, title: str = 'Inter-agent distance') -> None:
    """
    Save mean inter-agent distance over time as an SVG, one line and one std band per summary.

    Line and band groups carry the ids mean-<k> and band-<k>; identical inputs give identical bytes.

    :param summaries: Summaries to draw, in legend order
    :param path: SVG file to write
    :param title: Plot title
    :raises ConfigurationError: If no summaries are given
    """
    if not summaries:
        raise ConfigurationError('no summaries to plot')
    import matplotlib

    matplotlib.use('Agg')
    import matplotlib.pyplot as plt

    with plt.rc_context({'svg.hashsalt': 'rendezvous', 'svg.fonttype': 'none'}):
        fig, ax = plt.subplots(figsize=(8, 5))
        for k, summary in enumerate(summaries):
            steps = np.arange(summary.n_steps)
            color = PALETTE[k % len(PALETTE)]
            ax.fill_between(steps, np.maximum(summary.mean - summary.std, 0.0), summary.mean + summary.std,
                            color=color, alpha=0.2, linewidth=0.0, gid=f'band-{k}')
            ax.plot(steps, summary.mean, color=color, linewidth=2.0, label=summary.label, gid=f'mean-{k}')
        ax.set_title(title)
        ax.set_xlabel('Step')
        ax.set_ylabel('Distance (m)')
        ax.set_ylim(bottom=0.0)
        ax.grid(True, alpha=0.3)
        ax.legend(loc='best')
        fig.savefig(path, format='svg', metadata={'Date': None})
        plt.close(fig)
