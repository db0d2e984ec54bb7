"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line interface:
1 for bad input data, 2 for numerical failures, 3 for configuration problems.
"""


class StateLPError(Exception):
    exit_code = 2


class InputError(StateLPError, ValueError):
    exit_code = 1


class NumericError(StateLPError, ArithmeticError):
    exit_code = 2


class ConfigError(StateLPError, ValueError):
    exit_code = 3


# -- panel ingestion -------------------------------------------------------

class IngestError(InputError):
    def __init__(self, row, column, reason="missing or non-numeric value"):
        self.row = row
        self.column = column
        super().__init__(f"row {row}, column {column!r}: {reason}")


class ShockInconsistency(InputError):
    def __init__(self, t, values=None):
        self.t = t
        msg = f"aggregate shock differs across units in period {t}"
        if values is not None:
            msg += f" (values: {sorted(set(values))[:5]})"
        super().__init__(msg)


class BalanceError(InputError):
    def __init__(self, missing):
        self.missing = list(missing)
        head = ", ".join(f"({i}, {t})" for i, t in self.missing[:10])
        more = "" if len(self.missing) <= 10 else f" ... {len(self.missing) - 10} more"
        super().__init__(f"unbalanced panel; missing (unit, time) cells: {head}{more}")


class HorizonError(ConfigError):
    pass


# -- numerics --------------------------------------------------------------

class BasisError(NumericError):
    pass


class DesignError(NumericError):
    pass


class RankError(NumericError):
    def __init__(self, message, columns=()):
        self.columns = tuple(columns)
        if self.columns:
            message = f"{message}; dependent columns: {list(self.columns)}"
        super().__init__(message)


class SelectionError(NumericError):
    pass


class ConvergenceError(NumericError):
    pass


class HacError(NumericError):
    pass


class NumericalError(NumericError):
    pass


class DegenerateError(NumericError):
    pass


class DomainError(NumericError, ValueError):
    pass


class QuadratureError(NumericError):
    pass


class MetricError(NumericError):
    pass


class StudyError(NumericError):
    pass


class AggregationError(NumericError):
    def __init__(self, t):
        self.t = t
        super().__init__(f"all aggregation weights are zero in period {t}")
