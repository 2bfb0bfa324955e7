"""Exception types mapped to CLI exit codes (see cli.main)."""


class ConfigError(ValueError):
    """Malformed or inconsistent configuration (exit code 2)."""


class DataError(ValueError):
    """Missing or malformed data files (exit code 2)."""


class NumericsError(RuntimeError):
    """Non-finite values during optimization (exit code 3)."""
