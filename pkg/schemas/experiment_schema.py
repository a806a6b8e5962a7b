from marshmallow import Schema, fields, validate, validates_schema, ValidationError

from rendezvous.baselines import PLANNER_KINDS
from rendezvous.geometry import ENVIRONMENTS
from rendezvous.predictor import ACTIVATIONS, OPTIMIZERS, VARIANTS
from schemas.episode_schema import EpisodeSchema, LidarSchema, positive
from schemas.planner_schema import ControllerSchema, PlannerConfigSchema, RrtSchema

# Planners that carry their own CEM settings
CEM_PLANNERS = ('hpp', 'rrt_cem')


class PredictorSchema(Schema):
    variant = fields.Str(validate=validate.OneOf(VARIANTS))
    models_dir = fields.Str(allow_none=True)
    hidden = fields.List(fields.Int(validate=validate.Range(min=1)), validate=validate.Length(min=1))
    activation = fields.Str(validate=validate.OneOf(list(ACTIVATIONS)))


class CollectSchema(Schema):
    n_trajectories = fields.Int(validate=validate.Range(min=1))
    environment = fields.Str(validate=validate.OneOf(ENVIRONMENTS))


class TrainSchema(Schema):
    dataset = fields.Str(allow_none=True)
    epochs = fields.Int(validate=validate.Range(min=1))
    batch_size = fields.Int(validate=validate.Range(min=1))
    learning_rate = fields.Float(validate=positive())
    optimizer = fields.Str(validate=validate.OneOf(list(OPTIMIZERS)))
    held_out_fraction = fields.Float(validate=validate.Range(min=0, max=1, max_inclusive=False))
    variants = fields.List(fields.Str(validate=validate.OneOf(VARIANTS)), validate=validate.Length(min=1))
    log_every = fields.Int(validate=validate.Range(min=0))


class AblationSchema(Schema):
    horizons = fields.List(fields.Int(validate=validate.Range(min=1)), validate=validate.Length(min=1))
    frequencies = fields.List(fields.Int(validate=validate.Range(min=1)), validate=validate.Length(min=1))
    iterations = fields.List(fields.Int(validate=validate.Range(min=1)), validate=validate.Length(min=1))
    elites = fields.List(fields.Int(validate=validate.Range(min=1)), validate=validate.Length(min=1))
    variants = fields.List(fields.Str(validate=validate.OneOf(VARIANTS)), validate=validate.Length(min=1))
    prediction_environment = fields.Str(validate=validate.OneOf(ENVIRONMENTS))


class ExperimentSchema(Schema):
    """
    Full experiment configuration. Section rules are checked against `raw`, the
    data as written in the config file before defaults were merged; commands that
    never build planners skip them with needs_planner=False.
    """
    environment = fields.Str(required=True, validate=validate.OneOf(ENVIRONMENTS))
    world_seed = fields.Int(required=True)
    planner = fields.Str(required=True, validate=validate.OneOf(PLANNER_KINDS))
    seed = fields.Int(required=True)
    n_seeds = fields.Int(required=True, validate=validate.Range(min=1))
    seeds = fields.List(fields.Int(), allow_none=True)
    policies = fields.List(fields.Str(validate=validate.Length(min=1)), allow_none=True)
    output_dir = fields.Str(required=True)
    episode = fields.Nested(EpisodeSchema, required=True)
    lidar = fields.Nested(LidarSchema, required=True)
    controller = fields.Nested(ControllerSchema, required=True)
    agent_controllers = fields.Dict(keys=fields.Str(), values=fields.Nested(ControllerSchema))
    planner_config = fields.Nested(PlannerConfigSchema, required=True)
    rrt = fields.Nested(RrtSchema, required=True)
    predictor = fields.Nested(PredictorSchema, required=True)
    collect = fields.Nested(CollectSchema, required=True)
    train = fields.Nested(TrainSchema, required=True)
    ablation = fields.Nested(AblationSchema, required=True)

    def __init__(self):
        super().__init__()
        self.raw = {}
        self.needs_planner = True

    def load(self, data, *, raw=None, needs_planner=True, **kwargs):
        self.raw = raw if raw is not None else data
        self.needs_planner = needs_planner

        return super().load(data, **kwargs)

    @validates_schema
    def validate_models_dir(self, data, **kwargs):
        """
        Validation for predictor.models_dir: required for hpp, rejected for every other planner

        :param data: Data with fields
        :param kwargs: Additional parameters
        """
        if not self.needs_planner:
            return
        raw_predictor = self.raw.get('predictor') or {}
        if data['planner'] == 'hpp' and not data['predictor'].get('models_dir'):
            raise ValidationError('The hpp planner requires predictor.models_dir', 'predictor')
        if data['planner'] != 'hpp' and raw_predictor.get('models_dir'):
            raise ValidationError(f"predictor.models_dir is not used by the {data['planner']} planner", 'predictor')

    @validates_schema
    def validate_planner_config(self, data, **kwargs):
        """
        Validation for the planner_config section: accepted only for CEM planners

        :param data: Data with fields
        :param kwargs: Additional parameters
        """
        if not self.needs_planner:
            return
        if 'planner_config' in self.raw and data['planner'] not in CEM_PLANNERS:
            raise ValidationError(f"planner_config is not used by the {data['planner']} planner", 'planner_config')

    @validates_schema
    def validate_policies(self, data, **kwargs):
        """
        Validation for per-agent policy ids

        :param data: Data with fields
        :param kwargs: Additional parameters
        """
        policies = data.get('policies')
        n_agents = data['episode'].get('n_agents', 2)
        if policies is not None and len(policies) != n_agents:
            raise ValidationError(f'Expected {n_agents} policy ids, got {len(policies)}', 'policies')
