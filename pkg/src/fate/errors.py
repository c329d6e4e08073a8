"""Exception types shared across the package."""


class FateError(Exception):
    """Base class for every error raised by this package."""


class ContractError(FateError, ValueError):
    """An operation was called outside its preconditions."""


class ShapeError(ContractError):
    pass


class ParseError(FateError, ValueError):
    def __init__(self, path, lineno, msg):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = path
        self.lineno = lineno


class DuplicateNodeError(ParseError):
    pass


class NodeIndexError(FateError, IndexError):
    pass


class SelfLoopError(ContractError):
    pass


class EmptyGraphError(ContractError):
    pass


class UnsupportedBiasError(ContractError):
    pass


class TrainingError(FateError, RuntimeError):
    def __init__(self, epoch, msg="non-finite loss"):
        super().__init__(f"{msg} at epoch {epoch}")
        self.epoch = epoch


class CapacityError(FateError, RuntimeError):
    pass


class AttackStepError(FateError, RuntimeError):
    def __init__(self, step, msg):
        super().__init__(f"step {step}: {msg}")
        self.step = step
