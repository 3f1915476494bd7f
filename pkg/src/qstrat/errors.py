"""Exception hierarchy shared across the package."""


class QStratError(Exception):
    """Base class for all errors raised by qstrat."""


class InputError(QStratError):
    """Bad user input: files, configs, schemas. CLI exit code 2."""


class FormatError(InputError):
    pass


class UnsupportedError(InputError):
    pass


class GeometryError(InputError):
    pass


class UnknownLabelError(InputError):
    pass


class EmptyROIError(InputError):
    def __init__(self, roi):
        super().__init__(f"ROI {roi!r} contains no voxels")
        self.roi = roi


class DataError(InputError):
    """Non-finite or otherwise unusable numeric data."""


class ParameterError(InputError):
    pass


class AssemblyError(InputError):
    pass


class SchemaError(InputError):
    pass


class ConfigError(InputError):
    pass


class EnumerationCapError(ParameterError):
    pass


class DegenerateLabelsError(QStratError):
    """Fewer than two classes where a contrast is required. CLI exit code 3."""


class SearchError(QStratError):
    """Every grid configuration failed to train."""
