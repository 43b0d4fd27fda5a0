"""Exception and warning types shared across the engine."""


class EngineError(Exception):
    """Base class for all errors raised by statepath."""


class MalformedRow(EngineError):
    """A CSV row that cannot be interpreted; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class UnknownVariable(EngineError):
    """A column or variable name that is not present in the schema."""


class NonNumericValue(EngineError):
    """A cell that should hold a number but does not parse as one."""

    def __init__(self, line: int, column: str, raw: str):
        self.line = line
        self.column = column
        super().__init__(f"line {line}: column {column!r} has non-numeric value {raw!r}")


class SubjectWithNoVisits(EngineError):
    """A subject referenced by statics or events that has no visit rows."""


class FoldTooSmall(EngineError):
    """A cross-validation fold received zero subjects."""


class EmptyInput(EngineError):
    """An operation that needs at least one element received none."""


class EmptyQuery(EngineError):
    """A sequence query with no nodes."""


class EmptyScope(EngineError):
    """An aggregation was asked to run over an empty subject set."""


class EmptyAges(EngineError):
    """A density estimate was asked to run over zero ages."""


class UnknownState(EngineError):
    """A filter references a state index outside the active model."""


class UnknownEvent(EngineError):
    """An aggregation references an outcome event not in the schema."""


class UnknownSubgroup(EngineError):
    """A subgroup id that is not in the store."""


class InvalidFilterAST(EngineError):
    """A filter document that fails validation; carries a path to the bad node."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class DegenerateData(UserWarning):
    """A gaussian emission variable is constant; training continues with a floored variance."""
