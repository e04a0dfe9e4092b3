# -*- coding: utf-8 -*-
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, replace
from typing import Hashable, Optional, Sequence, Tuple, Union

import numpy as np

from isac_mimo.exceptions import DomainError
from isac_mimo.geometry import Angles, UpaSpec


@dataclass(frozen=True)
class SystemConfig:
    tx: UpaSpec = UpaSpec(15, 15)
    rx: UpaSpec = UpaSpec(5, 5)
    K: int = 12
    L: int = 30
    tau_c: int = 100
    tau_p: int = 10
    # Uplink training SNR of 30 dB with unit noise.
    p_p: float = 1000.0
    sigma_c2: float = 1.0
    sigma_s2: float = 1.0
    P_t: float = 10.0
    alpha: complex = 0.1 + 0.1j
    target: Angles = field(default_factory=lambda: Angles(math.pi / 8, math.pi / 4))
    cell_radius_m: float = 1000.0
    r_h_m: float = 100.0
    nu: float = 3.2
    sigma_shadow_db: float = 7.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.K < 1 or self.L < 1:
            raise DomainError(f"need K >= 1 and L >= 1, got K={self.K}, L={self.L}")
        if not 0 < self.tau_p < self.tau_c:
            raise DomainError(
                f"need 0 < tau_p < tau_c, got tau_p={self.tau_p}, tau_c={self.tau_c}"
            )
        for name in ("p_p", "sigma_c2", "sigma_s2", "P_t"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0 < self.r_h_m < self.cell_radius_m:
            raise DomainError("need 0 < r_h_m < cell_radius_m")
        if self.sigma_shadow_db < 0:
            raise DomainError("sigma_shadow_db must be non-negative")

    @property
    def n_t(self) -> int:
        return self.tx.n

    @property
    def n_r(self) -> int:
        return self.rx.n

    @property
    def pre_log(self) -> float:
        return (self.tau_c - self.tau_p) / self.tau_c

    @property
    def kappa(self) -> float:
        return 2.0 * self.L / self.sigma_s2

    @property
    def sensing_snr(self) -> float:
        return self.P_t * self.L * abs(self.alpha) ** 2 / self.sigma_s2

    def with_sensing_snr(self, snr: float) -> SystemConfig:
        """Rescale |alpha|, keeping its phase, to reach the sensing SNR ``snr``."""
        if snr <= 0:
            raise DomainError(f"sensing SNR must be positive, got {snr}")
        magnitude = math.sqrt(snr * self.sigma_s2 / (self.P_t * self.L))
        phase = np.angle(self.alpha) if self.alpha != 0 else math.pi / 4
        return replace(self, alpha=complex(magnitude * np.exp(1j * phase)))


@dataclass(frozen=True, eq=False)
class LargeScaleSet:
    beta: np.ndarray
    xi: np.ndarray
    eps: np.ndarray
    pilot_group: np.ndarray

    def __post_init__(self) -> None:
        if not (self.beta.shape == self.xi.shape == self.eps.shape):
            raise DomainError("beta, xi and eps must have the same shape")
        if np.any(self.xi <= 0) or np.any(self.xi > self.beta):
            raise DomainError("need 0 < xi_k <= beta_k")

    @property
    def K(self) -> int:
        return int(self.beta.size)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """Estimated channel and estimation error, shape ``(..., N_t, K)``."""

    h_hat: np.ndarray
    e: np.ndarray

    @property
    def h(self) -> np.ndarray:
        return self.h_hat + self.e


def rng_stream(seed: int, *key: Hashable) -> np.random.Generator:
    """Counter-based generator for the stream identified by ``(seed, *key)``."""
    entropy = [int(seed)] + [_key_word(k) for k in key]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def _key_word(k: Hashable) -> int:
    if isinstance(k, (int, np.integer)):
        return int(k)
    # Stable across processes, unlike hash().
    return zlib.crc32(str(k).encode("utf-8"))


def round_robin_pilots(K: int, tau_p: int) -> np.ndarray:
    return np.arange(K) % tau_p + 1


def mmse_variances(
    beta: np.ndarray,
    pilot_group: np.ndarray,
    tau_p: int,
    p_p: float,
    sigma_c2: float,
) -> Tuple[np.ndarray, np.ndarray]:
    sharing = pilot_group[:, None] == pilot_group[None, :]
    contamination = sharing.astype(float) @ beta
    xi = tau_p * p_p * beta**2 / (tau_p * p_p * contamination + sigma_c2)
    return xi, beta - xi


def large_scale_from_gains(
    beta: Union[Sequence[float], np.ndarray],
    cfg: SystemConfig,
    pilot_group: Optional[np.ndarray] = None,
) -> LargeScaleSet:
    beta = np.asarray(beta, dtype=float)
    if beta.size != cfg.K or np.any(beta <= 0):
        raise DomainError(f"need {cfg.K} positive path gains")
    if pilot_group is None:
        pilot_group = round_robin_pilots(cfg.K, cfg.tau_p)
    pilot_group = np.asarray(pilot_group, dtype=int)
    xi, eps = mmse_variances(beta, pilot_group, cfg.tau_p, cfg.p_p, cfg.sigma_c2)
    return LargeScaleSet(beta=beta, xi=xi, eps=eps, pilot_group=pilot_group)


def draw_large_scale(
    cfg: SystemConfig, rng: Optional[np.random.Generator] = None
) -> LargeScaleSet:
    if rng is None:
        rng = rng_stream(cfg.seed, "large-scale")
    r_h, radius = cfg.r_h_m, cfg.cell_radius_m
    # Uniform in the annulus area.
    r = np.sqrt(r_h**2 + rng.uniform(size=cfg.K) * (radius**2 - r_h**2))
    z = 10.0 ** (cfg.sigma_shadow_db * rng.standard_normal(cfg.K) / 10.0)
    beta = z / (r / r_h) ** cfg.nu
    return large_scale_from_gains(beta, cfg)


def complex_normal(
    rng: np.random.Generator,
    shape: Tuple[int, ...],
    variance: Union[np.ndarray, float] = 1.0,
) -> np.ndarray:
    scale = np.sqrt(np.asarray(variance, dtype=float) / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def draw_small_scale(
    cfg: SystemConfig,
    ls: LargeScaleSet,
    rng: np.random.Generator,
    draws: Optional[int] = None,
) -> ChannelRealization:
    shape: Tuple[int, ...] = (cfg.n_t, ls.K)
    if draws is not None:
        if draws < 1:
            raise DomainError(f"draws must be >= 1, got {draws}")
        shape = (draws,) + shape
    h_hat = complex_normal(rng, shape, ls.xi)
    e = complex_normal(rng, shape, ls.eps)
    return ChannelRealization(h_hat=h_hat, e=e)
