"""Exception hierarchy. Input errors map to CLI exit code 2, everything else to 1."""


class BreadthError(Exception):
    pass


class InputError(BreadthError, ValueError):
    """Bad or degenerate user input."""


class ZeroVector(InputError):
    def __init__(self, row_index: int):
        self.row_index = row_index
        super().__init__(f"row {row_index} has (near) zero norm and cannot be normalized")


class DegenerateMean(InputError):
    pass


class DegenerateBreadth(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class MixedShapes(InputError):
    pass


class BadHeader(InputError):
    pass


class TruncatedPayload(InputError):
    pass


class EquivalenceFailure(BreadthError):
    """The naive and batched engines disagreed; timings are withheld."""
