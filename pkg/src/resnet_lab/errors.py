"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An argument broke a documented precondition (shape, sign, count)."""


class NumericOverflow(ArithmeticError):
    """A state or parameter became non-finite during a computation.

    ``where`` names the layer, depth node or flow step at which it happened.
    """

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class ParseError(ValueError):
    """Malformed input file. ``row`` is the 1-based data row, if known."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row
