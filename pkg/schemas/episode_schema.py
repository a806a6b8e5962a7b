from marshmallow import Schema, fields, validate


def positive():
    return validate.Range(min=0, min_inclusive=False)


class EpisodeSchema(Schema):
    n_agents = fields.Int(validate=validate.Range(min=2))
    dt = fields.Float(validate=positive())
    max_steps = fields.Int(validate=validate.Range(min=1))
    initial_separation = fields.Float(validate=positive())
    rendezvous_d = fields.Float(validate=positive())
    hold_steps = fields.Int(validate=validate.Range(min=1))
    stop_on_rendezvous = fields.Bool()
    agent_radius = fields.Float(validate=positive())
    pose_noise_std = fields.Float(validate=validate.Range(min=0))
    history_length = fields.Int(validate=validate.Range(min=1))
    spawn_attempts = fields.Int(validate=validate.Range(min=1))


class LidarSchema(Schema):
    max_range = fields.Float(validate=positive())
    noise_std = fields.Float(validate=validate.Range(min=0))
