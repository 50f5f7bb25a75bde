"""Exception hierarchy shared across the pipeline.

Each class carries the CLI exit code it maps to.
"""


class UgdpError(Exception):
    exit_code = 1


class InputError(UgdpError):
    exit_code = 2


class SchemaError(InputError, ValueError):
    pass


class DataValueError(InputError, ValueError):
    pass


class LabelError(InputError, ValueError):
    pass


class TrainingError(InputError, ValueError):
    pass


class CapacityError(UgdpError, ValueError):
    pass


class ProvenanceError(UgdpError):
    exit_code = 3


class NumericError(UgdpError, ArithmeticError):
    exit_code = 4


class ConfigError(InputError, ValueError):
    pass
