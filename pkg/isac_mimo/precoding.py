# -*- coding: utf-8 -*-
"""
Precoders of the joint downlink and sensing transmission, F = W diag(sqrt(gamma))
+ v eta^T, and the average transmit power of a power allocation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from isac_mimo.channel import ChannelRealization, LargeScaleSet
from isac_mimo.exceptions import DegenerateChannelError, DomainError
from isac_mimo.geometry import Angles, UpaSpec, steering

# Relative size of the smallest R diagonal entry in the QR factor of H_hat below
# which the Gram matrix is treated as singular.
GRAM_TOLERANCE = 1e-10


class Scheme(str, Enum):
    MRT = "MRT"
    ZF = "ZF"


@dataclass(frozen=True, eq=False)
class PowerAllocation:
    gamma: np.ndarray
    rho: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=float))
        if np.any(self.gamma < 0) or self.rho < 0:
            raise DomainError("power factors must be non-negative")

    @property
    def K(self) -> int:
        return int(self.gamma.size)

    def eta(self) -> np.ndarray:
        """Per-user sensing weights with equal shares of rho."""
        return np.full(self.K, math.sqrt(self.rho / self.K))

    def scaled(self, factor: float) -> PowerAllocation:
        return PowerAllocation(self.gamma * factor, self.rho * factor)


@dataclass(frozen=True, eq=False)
class PrecoderSet:
    W: np.ndarray
    v: np.ndarray
    F: np.ndarray
    scheme: Scheme


def check_scheme(scheme: Scheme, n_t: int, K: int) -> None:
    """Raise DomainError when ZF has no more antennas than users."""
    if scheme is Scheme.ZF and n_t <= K:
        raise DomainError(f"ZF needs N_t > K, got N_t={n_t}, K={K}")


def zero_forcing(h_hat: np.ndarray) -> np.ndarray:
    """H (H^H H)^-1 through the thin QR factorization H = QR, i.e. Q R^-H."""
    q, r = np.linalg.qr(h_hat)
    diag = np.abs(np.diagonal(r, axis1=-2, axis2=-1))
    if np.any(diag <= GRAM_TOLERANCE * diag.max(axis=-1, keepdims=True)):
        raise DegenerateChannelError("channel estimate Gram matrix is singular")
    r_inv_h = np.conj(np.swapaxes(np.linalg.inv(r), -1, -2))
    return q @ r_inv_h


def build_precoder(
    real: ChannelRealization,
    scheme: Scheme,
    alloc: PowerAllocation,
    v_angles: Angles,
    tx: Optional[UpaSpec] = None,
) -> PrecoderSet:
    """
    MRT or ZF communication precoders for the estimated channel ``real.h_hat``,
    plus a sensing beam steered towards ``v_angles``. The transmit array
    ``tx`` defaults to the square UPA with as many elements as the channel
    has antennas; other layouts must be passed.

    Stacked realizations give stacked precoders.
    """
    n_t, K = real.h_hat.shape[-2:]
    tx = UpaSpec.square(n_t) if tx is None else tx
    if n_t != tx.n:
        raise DomainError(f"realization has {n_t} antennas, array has {tx.n}")
    if alloc.K != K:
        raise DomainError(f"allocation has {alloc.K} users, realization has {K}")
    check_scheme(scheme, n_t, K)
    W = real.h_hat if scheme is Scheme.MRT else zero_forcing(real.h_hat)
    v = steering(tx, v_angles)
    F = W * np.sqrt(alloc.gamma) + np.outer(v, alloc.eta())
    return PrecoderSet(W=W, v=v, F=F, scheme=scheme)


def xi_bf(ls: LargeScaleSet, scheme: Scheme, n_t: int) -> np.ndarray:
    """
    Per-user factors xi_bf with E[trace(W_k W_k^H)] = N_t xi_bf[k]: the large-scale
    estimate variances for MRT and 1 / (N_t (N_t - K) xi_k) for ZF.
    """
    if scheme is Scheme.MRT:
        return ls.xi.copy()
    check_scheme(scheme, n_t, ls.K)
    return 1.0 / (n_t * (n_t - ls.K) * ls.xi)


def power_split(
    ls: LargeScaleSet, scheme: Scheme, alloc: PowerAllocation, n_t: int
) -> Tuple[float, float]:
    """Communication and sensing parts of the transmit power."""
    comm = n_t * math.fsum(xi_bf(ls, scheme, n_t) * alloc.gamma)
    return comm, n_t * alloc.rho


def total_power(
    ls: LargeScaleSet, scheme: Scheme, alloc: PowerAllocation, n_t: int
) -> float:
    """Average transmit power, N_t (xi_bf^T gamma + rho)."""
    comm, sensing = power_split(ls, scheme, alloc, n_t)
    return comm + sensing


def transmit_power(precoders: PrecoderSet) -> np.ndarray:
    """Frobenius energy trace(F F^H) per realization."""
    F = precoders.F
    return np.sum(np.abs(F) ** 2, axis=(-2, -1))


def initial_allocation(
    ls: LargeScaleSet, scheme: Scheme, n_t: int, p_t: float, p0: float
) -> PowerAllocation:
    """Spend the fraction p0 of the budget on sensing, the rest equally on users."""
    if not 0 <= p0 <= 1:
        raise DomainError(f"sensing fraction must lie in [0, 1], got {p0}")
    weights = xi_bf(ls, scheme, n_t)
    gamma = np.full(ls.K, (1.0 - p0) * p_t / (n_t * math.fsum(weights)))
    return PowerAllocation(gamma=gamma, rho=p0 * p_t / n_t)


def equal_power_allocation(
    ls: LargeScaleSet, scheme: Scheme, n_t: int, p_t: float
) -> PowerAllocation:
    """Half of the budget on sensing, the other half shared equally by users."""
    return initial_allocation(ls, scheme, n_t, p_t, 0.5)
