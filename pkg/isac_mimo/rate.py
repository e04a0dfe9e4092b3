# -*- coding: utf-8 -*-
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Optional, Sequence, Tuple

import numpy as np

from isac_mimo.channel import (
    ChannelRealization,
    LargeScaleSet,
    SystemConfig,
    draw_small_scale,
    rng_stream,
)
from isac_mimo.exceptions import DomainError
from isac_mimo.geometry import Angles
from isac_mimo.montecarlo import (
    DEFAULT_CHUNK,
    CompensatedSum,
    chunk_sizes,
    ordered_map,
)
from isac_mimo.precoding import (
    PowerAllocation,
    Scheme,
    build_precoder,
    check_scheme,
    xi_bf,
)


@dataclass(frozen=True, eq=False)
class RateReport:
    per_user_rate: np.ndarray
    sum_rate: float
    sinr: np.ndarray

    @classmethod
    def from_sinr(cls, sinr: np.ndarray, pre_log: float) -> RateReport:
        rates = pre_log * np.log2(1.0 + sinr)
        return cls(per_user_rate=rates, sum_rate=math.fsum(rates), sinr=sinr)


def rate_coefficients(
    ls: LargeScaleSet, scheme: Scheme, n_t: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Signal gains lambda_k and interference weights zeta_k (row k of a matrix)."""
    weights = xi_bf(ls, scheme, n_t)
    if scheme is Scheme.MRT:
        lam = n_t**2 * ls.xi**2
        zeta = np.outer(ls.beta, weights)
    else:
        lam = np.ones(ls.K)
        zeta = np.outer(ls.eps, weights)
    return lam, zeta


def interference(
    ls: LargeScaleSet, zeta: np.ndarray, alloc: PowerAllocation, cfg: SystemConfig
) -> np.ndarray:
    n_t = cfg.n_t
    return n_t * ls.beta * alloc.rho + n_t * (zeta @ alloc.gamma) + cfg.sigma_c2


def closed_form_sinr(
    ls: LargeScaleSet, scheme: Scheme, alloc: PowerAllocation, cfg: SystemConfig
) -> np.ndarray:
    lam, zeta = rate_coefficients(ls, scheme, cfg.n_t)
    return lam * alloc.gamma / interference(ls, zeta, alloc, cfg)


def closed_form_rate(
    ls: LargeScaleSet, scheme: Scheme, alloc: PowerAllocation, cfg: SystemConfig
) -> RateReport:
    return RateReport.from_sinr(closed_form_sinr(ls, scheme, alloc, cfg), cfg.pre_log)


def _gain_moments(
    real: ChannelRealization,
    scheme: Scheme,
    alloc: PowerAllocation,
    v_angles: Angles,
    cfg: SystemConfig,
) -> Tuple[np.ndarray, np.ndarray]:
    precoders = build_precoder(real, scheme, alloc, v_angles, cfg.tx)
    # gains[d, k, j] = h_k^H f_j for draw d.
    gains = np.conj(np.swapaxes(real.h, -1, -2)) @ precoders.F
    if gains.ndim == 2:
        gains = gains[None]
    first = np.diagonal(gains, axis1=-2, axis2=-1).sum(axis=0)
    second = (np.abs(gains) ** 2).sum(axis=0)
    return first, second


def monte_carlo_rate(
    ls: LargeScaleSet,
    scheme: Scheme,
    alloc: PowerAllocation,
    cfg: SystemConfig,
    draws: int,
    *,
    v_angles: Optional[Angles] = None,
    stream: Sequence[Hashable] = (),
    realization: Optional[ChannelRealization] = None,
    chunk: int = DEFAULT_CHUNK,
    workers: int = 1,
) -> RateReport:
    """
    Rate from sample moments of the effective gains h_k^H f_j.

    The desired signal is the sample mean of h_k^H f_k, the beamforming
    uncertainty its sample variance and the inter-user interference the mean
    power of h_k^H f_j for j != k. A batched ``realization`` is used as is,
    which allows common random numbers across allocations.
    """
    if draws < 1:
        raise DomainError(f"draws must be >= 1, got {draws}")
    v_angles = cfg.target if v_angles is None else v_angles

    if realization is not None:
        count = realization.h_hat.shape[0] if realization.h_hat.ndim == 3 else 1
        if count != draws:
            raise DomainError(f"realization holds {count} draws, expected {draws}")
        first, second = _gain_moments(realization, scheme, alloc, v_angles, cfg)
    else:
        sizes = chunk_sizes(draws, chunk)

        def run_chunk(index: int) -> Tuple[np.ndarray, np.ndarray]:
            rng = rng_stream(cfg.seed, "small-scale", *stream, index)
            real = draw_small_scale(cfg, ls, rng, draws=sizes[index])
            return _gain_moments(real, scheme, alloc, v_angles, cfg)

        first_sum, second_sum = CompensatedSum(), CompensatedSum()
        for f, s in ordered_map(run_chunk, range(len(sizes)), workers):
            first_sum.add(f)
            second_sum.add(s)
        count = draws
        first, second = first_sum.total, second_sum.total

    desired = first / count
    power = second / count
    own = np.diagonal(power)
    uncertainty = own - np.abs(desired) ** 2
    inter_user = power.sum(axis=1) - own
    sinr = np.abs(desired) ** 2 / (uncertainty + inter_user + cfg.sigma_c2)
    return RateReport.from_sinr(sinr, cfg.pre_log)


def equal_power_rates(
    ls: LargeScaleSet, scheme: Scheme, cfg: SystemConfig
) -> RateReport:
    """Rates when half the budget goes to sensing and users share the rest equally."""
    n_t, p_t, noise = cfg.n_t, cfg.P_t, cfg.sigma_c2
    if scheme is Scheme.MRT:
        sinr = n_t * ls.xi**2 * p_t / (2.0 * math.fsum(ls.xi) * (ls.beta * p_t + noise))
    else:
        check_scheme(scheme, n_t, ls.K)
        inverse_sum = math.fsum(1.0 / ls.xi)
        sinr = (n_t - ls.K) * p_t / (
            inverse_sum * ((ls.beta + ls.eps) * p_t + 2.0 * noise)
        )
    return RateReport.from_sinr(sinr, cfg.pre_log)
