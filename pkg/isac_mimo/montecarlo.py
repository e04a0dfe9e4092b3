# -*- coding: utf-8 -*-
"""
Helpers for seed-deterministic Monte-Carlo runs.

Work is split into fixed-size chunks, each with its own random stream, so the
result never depends on how many threads evaluate the chunks. Chunk results
are combined in chunk order with compensated summation.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

import numpy as np

from isac_mimo.exceptions import DomainError

T = TypeVar("T")
R = TypeVar("R")

DEFAULT_CHUNK = 1000


class CompensatedSum:
    """Kahan summation over equally shaped arrays."""

    def __init__(self) -> None:
        self._total: Optional[np.ndarray] = None
        self._carry: Optional[np.ndarray] = None

    def add(self, value: np.ndarray) -> None:
        value = np.asarray(value)
        if self._total is None or self._carry is None:
            self._total = value.copy()
            self._carry = np.zeros_like(value)
            return
        y = value - self._carry
        t = self._total + y
        self._carry = (t - self._total) - y
        self._total = t

    @property
    def total(self) -> np.ndarray:
        if self._total is None:
            raise DomainError("nothing has been added")
        return self._total


def chunk_sizes(total: int, chunk: int = DEFAULT_CHUNK) -> List[int]:
    if total < 1:
        raise DomainError(f"need at least one draw, got {total}")
    if chunk < 1:
        raise DomainError(f"chunk size must be positive, got {chunk}")
    full, rest = divmod(total, chunk)
    return [chunk] * full + ([rest] if rest else [])


def ordered_map(fn: Callable[[T], R], items: Sequence[T], workers: int = 1) -> List[R]:
    """Map ``fn`` over ``items`` on a thread pool, keeping the input order."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items))
