# -*- coding: utf-8 -*-
from __future__ import annotations

from pathlib import Path
from typing import Optional, Union


class IsacError(Exception):
    pass


class DomainError(IsacError, ValueError):
    """Raised when an operation is called outside its domain."""


class DegenerateChannelError(IsacError):
    pass


class EstimationImpossibleError(IsacError):
    """Raised when the reduced Fisher information matrix is not positive definite."""


class InfeasibleScenarioError(IsacError):
    pass


class SolverError(IsacError):
    pass


class NonMonotonicStepError(SolverError):
    pass


class ScenarioError(IsacError):
    def __init__(
        self,
        message: str,
        path: Optional[Union[str, Path]] = None,
        line: Optional[int] = None,
    ):
        self.message = message
        self.path = str(path) if path is not None else None
        self.line = line
        super().__init__(str(self))

    def __str__(self) -> str:
        if self.path is None:
            return self.message
        if self.line is None:
            return f"{self.path}: {self.message}"
        return f"{self.path}:{self.line}: {self.message}"


class EmitError(IsacError, OSError):
    def __init__(self, path: Union[str, Path], reason: str):
        self.path = str(path)
        super().__init__(f"{self.path}: {reason}")
