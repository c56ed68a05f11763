"""Exception hierarchy shared by every module."""


class TabGanError(Exception):
    """Base class for all library errors."""


class SchemaError(TabGanError):
    pass


class InputError(TabGanError):
    """Bad input data (CLI exit code 2)."""


class MissingColumn(InputError):
    pass


class DuplicateHeader(InputError):
    pass


class UnparsableCell(InputError):
    def __init__(self, row: int, col: str, text: str = ""):
        super().__init__(f"cannot parse cell at row {row}, column {col!r}: {text!r}")
        self.row = row
        self.col = col


class ClassTooSmall(InputError):
    pass


class DomainError(InputError, ValueError):
    pass


class UnknownCategory(InputError, KeyError):
    pass


class OptionOutOfRange(InputError, IndexError):
    pass


class NoMatchingRow(TabGanError):
    pass


class BundleError(InputError):
    pass


class IoFailure(BundleError):
    pass


class VersionMismatch(BundleError):
    pass


class ChecksumMismatch(BundleError):
    pass


class NonScalarRoot(TabGanError, ValueError):
    pass


class UnsupportedOp(TabGanError):
    pass


class ShapeMismatch(TabGanError, ValueError):
    pass


class TrainingError(TabGanError):
    """Failure during training (CLI exit code 3)."""


class NonFiniteLoss(TrainingError):
    def __init__(self, step: int, component: str):
        super().__init__(f"non-finite {component} loss at step {step}")
        self.step = step
        self.component = component


class BudgetExhaustedBeforeFirstStep(TabGanError):
    """Privacy budget too small for a single discriminator update (exit code 4)."""


class NumericOverflow(TabGanError, ArithmeticError):
    pass


class EmptyDistribution(TabGanError, ValueError):
    pass


class EmptyColumn(TabGanError, ValueError):
    pass


class TooFewRows(TabGanError, ValueError):
    pass


class SingularMatrix(TabGanError, ArithmeticError):
    pass


class SingularInput(TabGanError, ValueError):
    pass
