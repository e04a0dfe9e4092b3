# -*- coding: utf-8 -*-
"""
Angle-estimation bounds and the maximum-likelihood estimator of the target
direction for the monostatic radar receiver.

The echo is ``Y = alpha b a^H X + N`` with ``a``/``b`` the transmit/receive
steering vectors at the target. The nuisance reflection coefficient is
parametrized by its real and imaginary parts.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import partial
from typing import Hashable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from isac_mimo.channel import (
    ChannelRealization,
    LargeScaleSet,
    SystemConfig,
    complex_normal,
    draw_small_scale,
    rng_stream,
)
from isac_mimo.exceptions import DomainError, EstimationImpossibleError
from isac_mimo.geometry import (
    Angles,
    UpaSpec,
    derivative_identities,
    steering,
    steering_derivative,
    steering_matrix,
)
from isac_mimo.montecarlo import CompensatedSum, ordered_map
from isac_mimo.precoding import (
    PowerAllocation,
    PrecoderSet,
    Scheme,
    build_precoder,
    xi_bf,
)

logger = logging.getLogger(__name__)

# Relative determinant below which the reduced FIM counts as singular.
SINGULAR_FIM = 1e-12

MLE_GRID_STEP = math.pi / 256
MLE_WINDOW = math.radians(10.0)


def to_db(value: float) -> float:
    """10 log10 of ``value``, NaN when it is not positive."""
    return 10.0 * math.log10(value) if value > 0 else math.nan


@dataclass(frozen=True, eq=False)
class FisherBlocks:
    J_tt: float
    J_pp: float
    J_tp: float
    J_aa: np.ndarray
    j_pa: np.ndarray
    j_ta: np.ndarray
    J_pa_tilde: float

    def reduced(self) -> np.ndarray:
        return np.array([[self.J_tt, self.J_tp], [self.J_tp, self.J_pa_tilde]])

    def full(self) -> np.ndarray:
        """The 4x4 FIM over (theta, phi, Re alpha, Im alpha)."""
        fim = np.zeros((4, 4))
        fim[:2, :2] = [[self.J_tt, self.J_tp], [self.J_tp, self.J_pp]]
        fim[0, 2:] = fim[2:, 0] = self.j_ta
        fim[1, 2:] = fim[2:, 1] = self.j_pa
        fim[2:, 2:] = self.J_aa
        return fim


@dataclass(frozen=True)
class CrlbPair:
    crlb_theta: float
    crlb_phi: float

    @property
    def theta_db(self) -> float:
        return to_db(self.crlb_theta)

    @property
    def phi_db(self) -> float:
        return to_db(self.crlb_phi)


@dataclass(frozen=True)
class FisherCoefficients:
    """
    Aligned-beam Fisher terms as linear forms in (c, rho), with c the sensing
    gain xi_bf^T gamma. Each pair holds the coefficients of c and of rho.
    """

    theta: Tuple[float, float]
    phi: Tuple[float, float]
    cross: Tuple[float, float]
    scale: float

    def evaluate(self, c: float, rho: float) -> Tuple[float, float, float]:
        return (
            self.theta[0] * c + self.theta[1] * rho,
            self.phi[0] * c + self.phi[1] * rho,
            self.cross[0] * c + self.cross[1] * rho,
        )


@dataclass(frozen=True, eq=False)
class Echo:
    y: np.ndarray
    x: np.ndarray


class MleEstimate(NamedTuple):
    angles: Angles
    alpha: complex


@dataclass(frozen=True)
class MsePoint:
    snr_db: float
    mse_theta: float
    mse_phi: float
    crlb: CrlbPair


def sensing_gain(
    ls: LargeScaleSet, scheme: Scheme, alloc: PowerAllocation, n_t: int
) -> float:
    return math.fsum(xi_bf(ls, scheme, n_t) * alloc.gamma)


def sensing_covariance(
    ls: LargeScaleSet,
    scheme: Scheme,
    alloc: PowerAllocation,
    cfg: SystemConfig,
    v_angles: Angles,
) -> np.ndarray:
    """Expected per-symbol transmit covariance, a scaled identity plus the beam."""
    v = steering(cfg.tx, v_angles)
    c = sensing_gain(ls, scheme, alloc, cfg.n_t)
    return c * np.eye(cfg.n_t) + alloc.rho * np.outer(v, np.conj(v))


def _coupling(cfg: SystemConfig, inner: complex) -> np.ndarray:
    weighted = np.conj(cfg.alpha) * inner
    return cfg.kappa * np.array([weighted.real, -weighted.imag])


def fisher_blocks_general(
    ls: LargeScaleSet,
    scheme: Scheme,
    alloc: PowerAllocation,
    cfg: SystemConfig,
    v_angles: Angles,
) -> FisherBlocks:
    ident = derivative_identities(cfg.tx, cfg.rx, cfg.target)
    n_t, n_r = cfg.n_t, cfg.n_r
    c, rho = sensing_gain(ls, scheme, alloc, n_t), alloc.rho
    v = steering(cfg.tx, v_angles)
    v_a = np.vdot(v, steering(cfg.tx, cfg.target))
    v_at = np.vdot(v, steering_derivative(cfg.tx, cfg.target, "theta"))
    v_ap = np.vdot(v, steering_derivative(cfg.tx, cfg.target, "phi"))

    gain = cfg.kappa * abs(cfg.alpha) ** 2
    beam = c * n_t + rho * abs(v_a) ** 2
    J_tt = gain * (
        beam * ident.rx_theta_sq + n_r * (c * ident.tx_theta_sq + rho * abs(v_at) ** 2)
    )
    J_pp = gain * (
        beam * ident.rx_phi_sq + n_r * (c * ident.tx_phi_sq + rho * abs(v_ap) ** 2)
    )
    J_tp = gain * (
        beam * ident.rx_cross
        + n_r * (c * ident.tx_cross + rho * (np.conj(v_at) * v_ap).real)
    )
    J_aa = cfg.kappa * n_r * beam * np.eye(2)
    j_pa = _coupling(cfg, n_r * rho * np.conj(v_a) * v_ap)
    j_ta = _coupling(cfg, n_r * rho * np.conj(v_a) * v_at)
    J_pa_tilde = J_pp - float(j_pa @ np.linalg.solve(J_aa, j_pa))
    return FisherBlocks(
        J_tt=float(J_tt),
        J_pp=float(J_pp),
        J_tp=float(J_tp),
        J_aa=J_aa,
        j_pa=j_pa,
        j_ta=j_ta,
        J_pa_tilde=float(J_pa_tilde),
    )


def fisher_blocks_from_covariance(cov: np.ndarray, cfg: SystemConfig) -> FisherBlocks:
    """FIM blocks by direct trace evaluation for any transmit covariance."""
    tx, rx, target = cfg.tx, cfg.rx, cfg.target
    a, b = steering(tx, target), steering(rx, target)
    G = np.outer(b, np.conj(a))
    G_t = np.outer(steering_derivative(rx, target, "theta"), np.conj(a)) + np.outer(
        b, np.conj(steering_derivative(tx, target, "theta"))
    )
    G_p = np.outer(steering_derivative(rx, target, "phi"), np.conj(a)) + np.outer(
        b, np.conj(steering_derivative(tx, target, "phi"))
    )

    def trace(left: np.ndarray, right: np.ndarray) -> complex:
        return complex(np.trace(left @ cov @ np.conj(right.T)))

    gain = cfg.kappa * abs(cfg.alpha) ** 2
    J_aa = cfg.kappa * trace(G, G).real * np.eye(2)
    j_pa = _coupling(cfg, trace(G, G_p))
    J_pp = gain * trace(G_p, G_p).real
    return FisherBlocks(
        J_tt=gain * trace(G_t, G_t).real,
        J_pp=J_pp,
        J_tp=gain * trace(G_p, G_t).real,
        J_aa=J_aa,
        j_pa=j_pa,
        j_ta=_coupling(cfg, trace(G, G_t)),
        J_pa_tilde=J_pp - float(j_pa @ np.linalg.solve(J_aa, j_pa)),
    )


def _schur_pair(fim: np.ndarray) -> CrlbPair:
    j_tt, j_tp, j_pp = fim[0, 0], fim[0, 1], fim[1, 1]
    if not (j_tt > 0 and j_pp > 0):
        raise EstimationImpossibleError(
            f"Fisher information is not positive (J_tt={j_tt}, J_pp={j_pp})"
        )
    if j_tt * j_pp - j_tp**2 <= SINGULAR_FIM * j_tt * j_pp:
        raise EstimationImpossibleError("reduced Fisher information is singular")
    return CrlbPair(
        crlb_theta=float(1.0 / (j_tt - j_tp**2 / j_pp)),
        crlb_phi=float(1.0 / (j_pp - j_tp**2 / j_tt)),
    )


def crlb_general(blocks: FisherBlocks) -> CrlbPair:
    return _schur_pair(blocks.reduced())


def crlb_full(blocks: FisherBlocks) -> CrlbPair:
    """CRLB with both angle couplings to the reflection coefficient removed."""
    fim = blocks.full()
    coupling = fim[:2, 2:]
    reduced = fim[:2, :2] - coupling @ np.linalg.solve(fim[2:, 2:], coupling.T)
    return _schur_pair(reduced)


def fisher_coefficients(cfg: SystemConfig) -> FisherCoefficients:
    ident = derivative_identities(cfg.tx, cfg.rx, cfg.target)
    n_t, n_r = cfg.n_t, cfg.n_r
    return FisherCoefficients(
        theta=(
            n_r * ident.tx_theta_sq + n_t * ident.rx_theta_sq,
            n_t**2 * ident.rx_theta_sq,
        ),
        phi=(
            n_r * ident.tx_phi_sq + n_t * ident.rx_phi_sq,
            n_t**2 * ident.rx_phi_sq,
        ),
        cross=(
            n_r * ident.tx_cross + n_t * ident.rx_cross,
            n_t**2 * ident.rx_cross,
        ),
        scale=cfg.kappa * abs(cfg.alpha) ** 2,
    )


def crlb_from_gains(coeffs: FisherCoefficients, c: float, rho: float) -> CrlbPair:
    theta, phi, cross = coeffs.evaluate(c, rho)
    fim = coeffs.scale * np.array([[theta, cross], [cross, phi]])
    return _schur_pair(fim)


def crlb_simplified(
    ls: LargeScaleSet, scheme: Scheme, alloc: PowerAllocation, cfg: SystemConfig
) -> CrlbPair:
    c = sensing_gain(ls, scheme, alloc, cfg.n_t)
    return crlb_from_gains(fisher_coefficients(cfg), c, alloc.rho)


def asymptotic_crlb(cfg: SystemConfig) -> CrlbPair:
    """
    Large-array approximation of the aligned-beam CRLB under the equal
    power split, for a square transmit UPA.
    """
    if cfg.tx.n_h != cfg.tx.n_v:
        raise DomainError(f"asymptotic CRLB needs a square transmit UPA, got {cfg.tx}")
    theta, phi = cfg.target.theta, cfg.target.phi
    ident = derivative_identities(cfg.tx, cfg.rx, cfg.target)
    n_r = cfg.n_r
    base = math.pi**2 / 12.0
    c1 = base * math.cos(theta) ** 2 * math.sin(phi) ** 2
    c2 = base * ((math.sin(theta) * math.cos(phi)) ** 2 + math.sin(phi) ** 2)
    c3 = base * math.sin(phi) * math.sin(theta) * math.cos(theta) * math.cos(phi)
    f_theta = n_r * c1 + ident.rx_theta_sq
    f_phi = n_r * c2 + ident.rx_phi_sq
    f_cross = n_r * c3 + ident.rx_cross
    scale = 2.0 / (cfg.kappa * abs(cfg.alpha) ** 2 * cfg.n_t * cfg.P_t)
    return CrlbPair(
        crlb_theta=scale / (f_theta - f_cross**2 / f_phi),
        crlb_phi=scale / (f_phi - f_cross**2 / f_theta),
    )


def synthesize_echo(
    real: ChannelRealization,
    precoders: PrecoderSet,
    cfg: SystemConfig,
    rng: np.random.Generator,
) -> Echo:
    if precoders.F.ndim != 2:
        raise DomainError("echo synthesis needs a single channel realization")
    K = real.h_hat.shape[-1]
    symbols = complex_normal(rng, (K, cfg.L))
    x = precoders.F @ symbols
    G = np.outer(steering(cfg.rx, cfg.target), np.conj(steering(cfg.tx, cfg.target)))
    noise = complex_normal(rng, (cfg.n_r, cfg.L), cfg.sigma_s2)
    return Echo(y=cfg.alpha * G @ x + noise, x=x)


def _grid(
    center: float, half_width: float, step: float, lo: float, hi: float
) -> np.ndarray:
    first = math.ceil(max(center - half_width, lo) / step - 1e-9)
    last = math.floor(min(center + half_width, hi) / step + 1e-9)
    return np.arange(first, last + 1) * step


class _ProfiledLikelihood:
    """Concentrated likelihood with the reflection coefficient profiled out."""

    def __init__(self, echo: Echo, tx: UpaSpec, rx: UpaSpec):
        self.tx, self.rx = tx, rx
        self.m = echo.y @ np.conj(echo.x.T)
        self.q = echo.x @ np.conj(echo.x.T)

    def score(
        self, thetas: np.ndarray, phis: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray]:
        A = steering_matrix(self.tx, thetas, phis)
        B = steering_matrix(self.rx, thetas, phis)
        cross = np.sum(np.conj(B) * (self.m @ A), axis=0)
        energy = self.rx.n * np.sum(np.conj(A) * (self.q @ A), axis=0).real
        return np.abs(cross) ** 2 / energy, cross / energy


def mle_grid_search(
    echo: Echo,
    cfg: SystemConfig,
    grid_step: float = MLE_GRID_STEP,
    *,
    window: float = MLE_WINDOW,
    center: Optional[Angles] = None,
    full_range: bool = False,
    refine: bool = False,
    chunk: int = 4096,
) -> MleEstimate:
    """
    Grid-search MLE of the target direction.

    The likelihood needs only the transmitted block ``echo.x`` = F S, so the
    precoders themselves are not an argument.
    The grid is aligned to integer multiples of ``grid_step`` and limited to
    ``window`` radians around ``center`` (the tracked target by default)
    unless ``full_range`` is set. With ``refine`` the grid maximizer is
    polished by a local search inside one grid cell.
    """
    if grid_step <= 0:
        raise DomainError(f"grid step must be positive, got {grid_step}")
    center = cfg.target if center is None else center
    if full_range:
        thetas = _grid(0.0, math.pi, grid_step, -math.pi, math.pi)
        phis = _grid(0.0, math.pi / 2, grid_step, -math.pi / 2, math.pi / 2)
    else:
        thetas = _grid(center.theta, window, grid_step, -math.pi, math.pi)
        phis = _grid(center.phi, window, grid_step, -math.pi / 2, math.pi / 2)
    tt, pp = (g.ravel() for g in np.meshgrid(thetas, phis, indexing="ij"))

    likelihood = _ProfiledLikelihood(echo, cfg.tx, cfg.rx)
    best_score, best_index, best_alpha = -np.inf, 0, 0j
    for start in range(0, tt.size, chunk):
        block = slice(start, start + chunk)
        score, alpha = likelihood.score(tt[block], pp[block])
        i = int(np.argmax(score))
        if score[i] > best_score:
            best_score, best_index, best_alpha = score[i], start + i, alpha[i]
    theta, phi = float(tt[best_index]), float(pp[best_index])

    if refine and best_score > 0:
        theta, phi, best_alpha = _refine(likelihood, theta, phi, grid_step, best_score)
    return MleEstimate(Angles(theta, phi), complex(best_alpha))


def _refine(
    likelihood: _ProfiledLikelihood,
    theta: float,
    phi: float,
    step: float,
    reference: float,
) -> Tuple[float, float, complex]:
    def negative(point: np.ndarray) -> float:
        score, _ = likelihood.score(point[:1], point[1:])
        return -float(score[0]) / reference

    bounds = [
        (max(theta - step, -math.pi), min(theta + step, math.pi)),
        (max(phi - step, -math.pi / 2), min(phi + step, math.pi / 2)),
    ]
    result = minimize(
        negative,
        np.array([theta, phi]),
        method="Nelder-Mead",
        bounds=bounds,
        options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 2000},
    )
    if -result.fun < 1.0:
        return theta, phi, likelihood.score(np.array([theta]), np.array([phi]))[1][0]
    t, p = (float(x) for x in result.x)
    return t, p, complex(likelihood.score(np.array([t]), np.array([p]))[1][0])


def monte_carlo_crlb(
    ls: LargeScaleSet,
    scheme: Scheme,
    alloc: PowerAllocation,
    cfg: SystemConfig,
    draws: int,
    *,
    v_angles: Optional[Angles] = None,
    stream: Sequence[Hashable] = (),
) -> CrlbPair:
    """CRLB averaged over realized frame covariances (1/L) X X^H."""
    if draws < 1:
        raise DomainError(f"draws must be >= 1, got {draws}")
    v_angles = cfg.target if v_angles is None else v_angles
    theta_sum, phi_sum = CompensatedSum(), CompensatedSum()
    for d in range(draws):
        rng = rng_stream(cfg.seed, "crlb", *stream, d)
        real = draw_small_scale(cfg, ls, rng)
        precoders = build_precoder(real, scheme, alloc, v_angles, cfg.tx)
        x = precoders.F @ complex_normal(rng, (ls.K, cfg.L))
        cov = x @ np.conj(x.T) / cfg.L
        pair = crlb_general(fisher_blocks_from_covariance(cov, cfg))
        theta_sum.add(np.array(pair.crlb_theta))
        phi_sum.add(np.array(pair.crlb_phi))
    return CrlbPair(
        crlb_theta=float(theta_sum.total) / draws, crlb_phi=float(phi_sum.total) / draws
    )


def mle_mse_sweep(
    ls: LargeScaleSet,
    scheme: Scheme,
    alloc: PowerAllocation,
    cfg: SystemConfig,
    snrs_db: Sequence[float],
    trials: int,
    *,
    grid_step: float = MLE_GRID_STEP,
    refine: bool = True,
    workers: int = 1,
) -> List[MsePoint]:
    """
    Mean squared error of the MLE at each sensing SNR, next to the aligned
    CRLB. Channel, symbols and noise are redrawn in every trial.
    """
    if trials < 1:
        raise DomainError(f"trials must be >= 1, got {trials}")
    points = []
    for index, snr_db in enumerate(snrs_db):
        point_cfg = cfg.with_sensing_snr(10.0 ** (snr_db / 10.0))
        trial = partial(
            _squared_errors, ls, scheme, alloc, point_cfg, (index,), grid_step, refine
        )
        errors = np.array(ordered_map(trial, range(trials), workers))
        crlb = crlb_simplified(ls, scheme, alloc, point_cfg)
        point = MsePoint(
            snr_db=float(snr_db),
            mse_theta=math.fsum(errors[:, 0]) / trials,
            mse_phi=math.fsum(errors[:, 1]) / trials,
            crlb=crlb,
        )
        logger.debug("MLE sweep point %s", point)
        points.append(point)
    return points


def _squared_errors(
    ls: LargeScaleSet,
    scheme: Scheme,
    alloc: PowerAllocation,
    cfg: SystemConfig,
    stream: Tuple[Hashable, ...],
    grid_step: float,
    refine: bool,
    trial: int,
) -> Tuple[float, float]:
    rng = rng_stream(cfg.seed, "mle", *stream, trial)
    real = draw_small_scale(cfg, ls, rng)
    precoders = build_precoder(real, scheme, alloc, cfg.target, cfg.tx)
    echo = synthesize_echo(real, precoders, cfg, rng)
    est = mle_grid_search(echo, cfg, grid_step, refine=refine)
    return (
        (est.angles.theta - cfg.target.theta) ** 2,
        (est.angles.phi - cfg.target.phi) ** 2,
    )
