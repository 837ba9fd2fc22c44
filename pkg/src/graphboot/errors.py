"""Exception types shared across the package.

The CLI maps these onto exit codes: UsageError -> 1, DataError -> 2,
NumericError -> 3. Everything else is a bug and propagates.
"""


class UsageError(Exception):
    """Bad command line or contradictory configuration."""


class ConfigError(UsageError):
    """A configuration value that cannot be honored (usage-class)."""


class DataError(Exception):
    """Invalid or inconsistent input data."""


class ParseError(DataError):
    """A file that could not be parsed; message names file and line."""


class NumericError(Exception):
    """Non-finite values where finite ones are required."""
