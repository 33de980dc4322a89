"""Exception hierarchy shared across the package."""


class CemError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(CemError):
    pass


class DataError(CemError):
    """Problems with input data (files, schemas, values)."""


class SchemaError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class DuplicateKeyError(DataError):
    pass


class EmptyInputError(DataError):
    pass


class UnresolvableCommunityError(DataError):
    def __init__(self, communities):
        self.communities = sorted(communities, key=str)
        super().__init__(
            "communities without any tract-level observation: "
            + ", ".join(map(str, self.communities))
        )


class UnknownTractError(DataError):
    pass


class InvalidKError(CemError, ValueError):
    pass


class InvalidAssignmentError(CemError, ValueError):
    pass


class InvalidHyperparameterError(CemError, ValueError):
    pass


class ConvergenceError(CemError):
    """An iterative fit failed to converge (IRLS, NN training)."""


class DivergenceError(ConvergenceError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class SelectionError(CemError):
    pass
