# -*- coding: utf-8 -*-
"""
Uniform planar array (UPA) responses with half-wavelength spacing.

Elements are indexed symmetrically about the array centre, so the phase
slopes of an ``n``-element axis are ``-(n-1)/2, ..., (n-1)/2``. The full
response is the Kronecker product of the horizontal and vertical responses,
horizontal-major.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Tuple

import numpy as np

from isac_mimo.exceptions import DomainError

Wrt = Literal["theta", "phi"]


@dataclass(frozen=True)
class UpaSpec:
    n_h: int
    n_v: int

    def __post_init__(self) -> None:
        if int(self.n_h) != self.n_h or int(self.n_v) != self.n_v:
            raise DomainError(f"UPA sizes must be integers, got {self}")
        if self.n_h < 1 or self.n_v < 1:
            raise DomainError(f"UPA sizes must be positive, got {self}")

    @property
    def n(self) -> int:
        """Number of elements."""
        return self.n_h * self.n_v

    @classmethod
    def square(cls, n: int) -> UpaSpec:
        """The n_h = n_v array of ``n`` elements."""
        side = math.isqrt(n) if n >= 0 else -1
        if side < 1 or side * side != n:
            raise DomainError(f"{n} elements do not form a square UPA")
        return cls(side, side)

    def __str__(self) -> str:
        return f"{self.n_h}x{self.n_v}"


@dataclass(frozen=True)
class Angles:
    theta: float
    phi: float

    def __post_init__(self) -> None:
        if not -math.pi <= self.theta <= math.pi:
            raise DomainError(f"azimuth {self.theta} outside [-pi, pi]")
        if not -math.pi / 2 <= self.phi <= math.pi / 2:
            raise DomainError(f"elevation {self.phi} outside [-pi/2, pi/2]")

    def offset(self, epsilon: float) -> Angles:
        """Both angles shifted by ``epsilon`` radians (a pointing error)."""
        return Angles(self.theta + epsilon, self.phi + epsilon)


@dataclass(frozen=True)
class DerivativeIdentities:
    """Closed-form derivative norms and inner products at one target direction."""

    tx_theta_sq: float
    tx_phi_sq: float
    rx_theta_sq: float
    rx_phi_sq: float
    tx_cross: float
    rx_cross: float


def phase_slopes(n: int) -> np.ndarray:
    """Element positions in half wavelengths, centred on zero."""
    return np.arange(n, dtype=float) - (n - 1) / 2.0


def _axis_responses(spec: UpaSpec, ang: Angles) -> Tuple[np.ndarray, np.ndarray]:
    u_h = np.sin(ang.theta) * np.sin(ang.phi)
    a_h = np.exp(1j * np.pi * phase_slopes(spec.n_h) * u_h)
    a_v = np.exp(1j * np.pi * phase_slopes(spec.n_v) * np.cos(ang.phi))
    return a_h, a_v


def steering(spec: UpaSpec, ang: Angles) -> np.ndarray:
    """
    Response of ``spec`` towards ``ang``, a(theta, phi) = a_h(sin theta sin phi)
    kron a_v(cos phi), with unit-modulus entries.
    """
    a_h, a_v = _axis_responses(spec, ang)
    return np.kron(a_h, a_v)


def steering_derivative(spec: UpaSpec, ang: Angles, wrt: Wrt) -> np.ndarray:
    """Partial derivative of the steering vector in ``wrt``."""
    a_h, a_v = _axis_responses(spec, ang)
    u_h = phase_slopes(spec.n_h)
    if wrt == "theta":
        d_h = 1j * np.pi * np.cos(ang.theta) * np.sin(ang.phi) * u_h * a_h
        return np.kron(d_h, a_v)
    if wrt == "phi":
        d_h = 1j * np.pi * np.sin(ang.theta) * np.cos(ang.phi) * u_h * a_h
        d_v = -1j * np.pi * np.sin(ang.phi) * phase_slopes(spec.n_v) * a_v
        return np.kron(d_h, a_v) + np.kron(a_h, d_v)
    raise DomainError(f"unknown derivative variable {wrt!r}")


def slope_energy(n: int) -> float:
    """Squared norm of the phase-slope vector, n(n^2 - 1)/12."""
    return n * (n * n - 1) / 12.0


def _theta_sq(spec: UpaSpec, ang: Angles) -> float:
    return (
        spec.n_v
        * slope_energy(spec.n_h)
        * np.pi**2
        * np.cos(ang.theta) ** 2
        * np.sin(ang.phi) ** 2
    )


def _phi_sq(spec: UpaSpec, ang: Angles) -> float:
    slope = np.sin(ang.theta) * np.cos(ang.phi)
    horizontal = spec.n_v * slope_energy(spec.n_h) * slope**2
    vertical = spec.n_h * slope_energy(spec.n_v) * np.sin(ang.phi) ** 2
    return float(np.pi**2 * (horizontal + vertical))


def _cross(spec: UpaSpec, ang: Angles) -> float:
    return float(
        spec.n_v
        * slope_energy(spec.n_h)
        * np.pi**2
        * np.sin(ang.phi)
        * np.sin(ang.theta)
        * np.cos(ang.theta)
        * np.cos(ang.phi)
    )


def derivative_identities(
    tx: UpaSpec, rx: UpaSpec, ang: Angles
) -> DerivativeIdentities:
    """
    Squared norms of the theta and phi derivatives of both arrays and the real
    parts of their inner products, from the array sizes alone. The steering
    vector is orthogonal to its own derivatives for symmetric indexing.
    """
    return DerivativeIdentities(
        tx_theta_sq=float(_theta_sq(tx, ang)),
        tx_phi_sq=_phi_sq(tx, ang),
        rx_theta_sq=float(_theta_sq(rx, ang)),
        rx_phi_sq=_phi_sq(rx, ang),
        tx_cross=_cross(tx, ang),
        rx_cross=_cross(rx, ang),
    )


def steering_matrix(spec: UpaSpec, thetas: np.ndarray, phis: np.ndarray) -> np.ndarray:
    """Steering vectors for many directions at once, one column per direction."""
    thetas = np.asarray(thetas, dtype=float)
    phis = np.asarray(phis, dtype=float)
    a_h = np.exp(
        1j * np.pi * np.outer(phase_slopes(spec.n_h), np.sin(thetas) * np.sin(phis))
    )
    a_v = np.exp(1j * np.pi * np.outer(phase_slopes(spec.n_v), np.cos(phis)))
    return (a_h[:, None, :] * a_v[None, :, :]).reshape(spec.n, -1)
