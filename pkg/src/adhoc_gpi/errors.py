"""Exception hierarchy shared across the package.

CLI exit codes are attached to the classes so ``cli.main`` can map any
raised error to the documented process status.
"""


class AdHocError(Exception):
    exit_code = 4


class ConfigError(AdHocError, ValueError):
    """Invalid configuration or call arguments that describe a setup."""

    exit_code = 2


class InputError(AdHocError, ValueError):
    """Malformed runtime input (bad action index, empty dataset, ...)."""

    exit_code = 2


class CapabilityError(AdHocError, RuntimeError):
    """The environment lacks a capability the caller requires."""


class StateError(AdHocError, RuntimeError):
    """An object is not in the state an operation requires."""


class LibraryLoadError(AdHocError, ValueError):
    """A library container failed validation while loading."""

    exit_code = 3


class MissingArtifactError(AdHocError, FileNotFoundError):
    exit_code = 3


class InvariantError(AdHocError, AssertionError):
    exit_code = 4
