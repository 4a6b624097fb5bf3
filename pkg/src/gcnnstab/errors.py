"""
Exception types raised by gcnnstab.

Every error derives from the builtin the caller would naturally catch
(ValueError for bad inputs, ArithmeticError for numeric failures), so
code written against plain Python exceptions keeps working.
"""


class GcnnStabError(Exception):
    """Base class for all gcnnstab errors."""


class ConfigurationError(GcnnStabError, ValueError):
    """Invalid configuration, parameters or config file."""


class InputError(GcnnStabError, ValueError):
    """Input data does not match the shapes or lengths an operation expects."""


class NumericError(GcnnStabError, ArithmeticError):
    """A numerical routine failed (e.g. eigensolver did not converge)."""


class TrainingDivergedError(GcnnStabError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"Training diverged at epoch {epoch} (loss={loss})")
