class PropertyViolation(Exception):
    """A declared mathematical property fails on the sampled data."""


class NumericalAbort(RuntimeError):
    """The solver left its certified range or produced non-finite values."""

    def __init__(self, message, path_index=None, step=None, max_abs_u=None):
        super().__init__(message)
        self.path_index = path_index
        self.step = step
        self.max_abs_u = max_abs_u


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
