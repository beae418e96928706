"""Exception types shared across the package; the CLI maps them to exit codes."""


class ConfigError(Exception):
    """Invalid configuration key, value, or combination (CLI exit 2)."""


class DataError(Exception):
    """Missing, empty, or undecodable input data (CLI exit 3)."""


class CheckpointError(Exception):
    """Unreadable, truncated, or version-mismatched checkpoint file."""


class DivergenceError(Exception):
    """A loss component became NaN/Inf during training (CLI exit 4)."""

    def __init__(self, iteration, component, values):
        self.iteration = iteration
        self.component = component
        self.values = values
        super().__init__(
            f"non-finite loss at iteration {iteration}: {component}; "
            f"components: {values}"
        )
