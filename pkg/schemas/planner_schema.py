from marshmallow import Schema, fields, validate, validates_schema, ValidationError

from rendezvous.planner import REWARDS
from schemas.episode_schema import positive


class ControllerSchema(Schema):
    attraction_gain = fields.Float(validate=positive())
    repulsion_gain = fields.Float(validate=positive())
    repulsion_range = fields.Float(validate=positive())
    heading_gain = fields.Float(validate=positive())


class PlannerConfigSchema(Schema):
    T = fields.Int(validate=validate.Range(min=1))
    T_h = fields.Int(validate=validate.Range(min=1))
    N = fields.Int(validate=validate.Range(min=1))
    M = fields.Int(validate=validate.Range(min=1))
    max_iterations = fields.Int(validate=validate.Range(min=0))
    epsilon = fields.Float(validate=positive())
    min_std = fields.Float(validate=validate.Range(min=0))
    reward = fields.Str(validate=validate.OneOf(REWARDS))
    warm_start = fields.Bool()

    @validates_schema
    def validate_elites(self, data, **kwargs):
        """
        Validation for the elite count

        :param data: Data with fields
        :param kwargs: Additional parameters
        """
        if 'M' in data and 'N' in data and data['M'] > data['N']:
            raise ValidationError('Elite count M cannot exceed the sample count N', 'M')


class RrtSchema(Schema):
    step_size = fields.Float(validate=positive())
    goal_bias = fields.Float(validate=validate.Range(min=0, max=1))
    max_nodes = fields.Int(validate=validate.Range(min=1))
    resolution = fields.Float(validate=positive())
    replan_period = fields.Int(validate=validate.Range(min=1))
