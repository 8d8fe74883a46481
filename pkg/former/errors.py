# former/errors.py — OneDF v1
"""
Exception hierarchy shared by every package.

Library code raises these; cli/commands.py catches OneDFError, logs it and
turns it into a non-zero exit status.
"""
from __future__ import annotations

from typing import Iterable, Optional, Sequence, Tuple


class OneDFError(Exception):
    """Base class for every error raised on purpose by this project."""


class ShapeError(OneDFError, ValueError):
    def __init__(self, message: str, *dims: Sequence[int]) -> None:
        self.dims = [list(d) for d in dims]
        if self.dims:
            message = f"{message} (dims: {' vs '.join(str(d) for d in self.dims)})"
        super().__init__(message)


class ConfigError(OneDFError, ValueError):
    def __init__(self, message: str, key: Optional[str] = None) -> None:
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class ContractError(OneDFError, RuntimeError):
    """A documented pre- or post-condition was violated."""


class NumericsError(OneDFError, ArithmeticError):
    def __init__(
        self,
        message: str,
        node: Optional[str] = None,
        where: Optional[Tuple[int, ...]] = None,
        shape: Optional[Tuple[int, ...]] = None,
    ) -> None:
        self.detail = message
        self.node = node
        self.where = where      # index of the first non-finite entry in the node output
        self.shape = shape
        super().__init__(f"{message} at node {node}" if node else message)

    def at(self, location: str) -> "NumericsError":
        """The same failure, prefixed with where in the run it happened."""
        return NumericsError(f"{location}: {self.detail}", self.node, self.where, self.shape)


class FormatError(OneDFError, ValueError):
    def __init__(self, message: str, offset: int) -> None:
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")


class OptimizerError(OneDFError, ArithmeticError):
    def __init__(self, message: str, parameter: str) -> None:
        self.parameter = parameter
        super().__init__(f"{message}: {parameter}")


class CheckpointMismatchError(OneDFError, ValueError):
    def __init__(
        self,
        missing: Iterable[str] = (),
        unexpected: Iterable[str] = (),
        reshaped: Iterable[str] = (),
    ) -> None:
        self.missing = sorted(missing)
        self.unexpected = sorted(unexpected)
        self.reshaped = sorted(reshaped)
        lines = ["checkpoint does not match the model:"]
        lines += [f"  missing    {n}" for n in self.missing]
        lines += [f"  unexpected {n}" for n in self.unexpected]
        lines += [f"  reshaped   {n}" for n in self.reshaped]
        super().__init__("\n".join(lines))
