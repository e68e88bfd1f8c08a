"""Exception hierarchy shared by the library and the CLI."""


class MetaTreeError(Exception):
    """Base class for all errors raised by :mod:`metatree`."""


class DataValidationError(MetaTreeError, ValueError):
    """A data row or value is outside the model's domain.

    ``row`` and ``column`` are 0-based positions when known.
    """

    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class StructureError(MetaTreeError, ValueError):
    """An address, subtree or configuration does not fit the tree shape."""


class UnsupportedOperationError(MetaTreeError):
    pass


class ContractError(MetaTreeError, RuntimeError):
    """An engine was called on a model in the wrong state."""


class PreconditionError(MetaTreeError, ValueError):
    pass


class DegenerateLikelihoodError(MetaTreeError, ArithmeticError):
    def __init__(self, address):
        super().__init__(f"observation has zero probability at node {list(address)}")
        self.address = address


class ResourceLimitError(MetaTreeError):
    pass
