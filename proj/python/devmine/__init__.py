"""Process mining and refactoring-practice analysis over IDE event logs."""

from ._core import *  # noqa: F401,F403
from ._core import (
    ConfigError,
    DataError,
    DevmineError,
    InputError,
    SchemaError,
)

__version__ = "0.1.0"
