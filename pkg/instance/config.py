import copy
import os

home_dir = os.path.expanduser("~")


class Config:
    DEBUG = False
    TESTING = False
    LOG_LEVEL = 'INFO'
    COMMANDS = ['collect', 'train', 'evaluate', 'ablate', 'plot']
    EXPERIMENT_DEFAULTS = {
        'environment': 'simple',
        'world_seed': 0,
        'planner': 'hpp',
        'seed': 0,
        'n_seeds': 10,
        'seeds': None,
        'policies': None,
        'output_dir': os.path.join(home_dir, 'rendezvous-runs'),
        'episode': {
            'n_agents': 2,
            'dt': 0.2,
            'max_steps': 100,
            'initial_separation': 5.0,
            'rendezvous_d': 1.0,
            'hold_steps': 1,
            'stop_on_rendezvous': True,
            'agent_radius': 0.3,
            'pose_noise_std': 0.0,
            'history_length': 5,
            'spawn_attempts': 1000,
        },
        'lidar': {
            'max_range': 10.0,
            'noise_std': 0.0,
        },
        'controller': {
            'attraction_gain': 1.0,
            'repulsion_gain': 0.01,
            'repulsion_range': 1.0,
            'heading_gain': 1.0,
        },
        'agent_controllers': {},
        'planner_config': {
            'T': 5,
            'T_h': 10,
            'N': 15,
            'M': 5,
            'max_iterations': 15,
            'epsilon': 0.001,
            'min_std': 0.5,
            'reward': 'final',
            'warm_start': False,
        },
        'rrt': {
            'step_size': 0.5,
            'goal_bias': 0.1,
            'max_nodes': 5000,
            'resolution': 0.05,
            'replan_period': 40,
        },
        'predictor': {
            'variant': 'delta-pose-lidar',
            'models_dir': None,
            'hidden': [64, 128, 128, 64],
            'activation': 'tanh',
        },
        'collect': {
            'n_trajectories': 2000,
            'environment': 'training_random',
        },
        'train': {
            'dataset': None,
            'epochs': 2000,
            'batch_size': 500,
            'learning_rate': 0.001,
            'optimizer': 'adam',
            'held_out_fraction': 0.1,
            'variants': ['delta-pose-lidar'],
            'log_every': 100,
        },
        'ablation': {
            'horizons': [3, 5, 10],
            'frequencies': [5, 10, 15],
            'iterations': [5, 10, 15],
            'elites': [3, 5, 10],
            'variants': ['pose-lidar', 'delta-pose-lidar', 'delta-general-pose-lidar'],
            'prediction_environment': 'wall',
        },
    }


class PaperScaleConfig(Config):
    EXPERIMENT_DEFAULTS = copy.deepcopy(Config.EXPERIMENT_DEFAULTS)
    EXPERIMENT_DEFAULTS['collect']['n_trajectories'] = 50000
    EXPERIMENT_DEFAULTS['train']['epochs'] = 50000
    EXPERIMENT_DEFAULTS['train']['log_every'] = 1000


class DevelopmentConfig(Config):
    DEBUG = True


class TestingConfig(Config):
    TESTING = True
    LOG_LEVEL = 'WARNING'
    EXPERIMENT_DEFAULTS = copy.deepcopy(Config.EXPERIMENT_DEFAULTS)
    EXPERIMENT_DEFAULTS['n_seeds'] = 2
    EXPERIMENT_DEFAULTS['episode']['max_steps'] = 20
    EXPERIMENT_DEFAULTS['predictor']['hidden'] = [8, 8, 8, 8]
    EXPERIMENT_DEFAULTS['collect']['n_trajectories'] = 3
    EXPERIMENT_DEFAULTS['train'].update({'epochs': 20, 'batch_size': 64, 'log_every': 0})
    EXPERIMENT_DEFAULTS['planner_config'].update({'N': 6, 'M': 2, 'max_iterations': 3})
    EXPERIMENT_DEFAULTS['rrt']['max_nodes'] = 500
