"""Exception types shared across the framework."""


class ConfigError(Exception):
    """Invalid configuration: bad shapes, unknown keys, impossible layer specs."""


class UsageError(Exception):
    """An API was called in a way its contract forbids."""


class DataError(Exception):
    """Malformed or out-of-contract input data (files or labels)."""


class DegeneracyError(Exception):
    """A numerical quantity collapsed below the level the method tolerates."""


class TrainingDiverged(Exception):
    """Training produced a non-finite loss; carries epoch/batch/lr diagnostics."""
