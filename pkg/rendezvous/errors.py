class RendezvousError(Exception):
    """
    Base class for every error raised by the rendezvous package.
    """


class OutOfWorldError(RendezvousError):
    def __init__(self, message: str = 'origin out of world'):
        super().__init__(message)


class UnknownEnvironmentError(RendezvousError):
    def __init__(self, name: str):
        super().__init__(f'unknown environment: {name}')
        self.name = name


class SpawnFailedError(RendezvousError):
    def __init__(self, attempts: int):
        super().__init__(f'spawn failed after {attempts} attempts')
        self.attempts = attempts


class ShapeMismatchError(RendezvousError):
    pass


class TrainingDivergedError(RendezvousError):
    pass


class ConfigurationError(RendezvousError):
    pass


class AgentError(RendezvousError):
    """
    Wraps an error raised by one agent's planner or controller.
    """

    def __init__(self, agent_index: int, cause: Exception):
        super().__init__(f'agent {agent_index}: {cause}')
        self.agent_index = agent_index
        self.cause = cause


class ParseError(RendezvousError):
    def __init__(self, path: str, line_number: int, reason: str):
        super().__init__(f'{path}:{line_number}: {reason}')
        self.path = path
        self.line_number = line_number
