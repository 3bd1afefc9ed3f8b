"""Exception hierarchy shared by every module."""


class BundleCalcError(Exception):
    """Base class for all errors raised by bundlecalc."""


class DomainError(BundleCalcError):
    """A point, axis or section lies outside what the chart supports."""


class CapabilityError(BundleCalcError):
    """A jet of higher order was requested than the field can supply."""


class DegeneracyError(BundleCalcError):
    """A metric or fiber metric failed to be positive definite."""


class ShapeError(BundleCalcError):
    """Tensor ranks or component shapes do not match."""


class ParameterError(BundleCalcError):
    """An argument is outside its admissible range."""


class PreconditionError(BundleCalcError):
    """A check was invoked on inputs that violate its hypotheses."""


class ConfigError(BundleCalcError):
    """Malformed scenario file or expression, with a source position."""

    def __init__(self, message, line=None, column=None, field=None):
        self.message = message
        self.line = line
        self.column = column
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        prefix = ", ".join(where)
        if field:
            prefix = f"{prefix} [{field}]" if prefix else f"[{field}]"
        super().__init__(f"{prefix}: {message}" if prefix else message)
