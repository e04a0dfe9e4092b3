# -*- coding: utf-8 -*-
"""
A small log-barrier interior-point solver for second-order cone programs

    maximize    c^T x + offset
    subject to  ||A_i x + b_i|| <= c_i^T x + d_i
                g_j^T x <= h_j
                x >= lb

Each centering step runs damped Newton iterations with a backtracking line
search. A phase-I problem finds a strictly feasible point when the start is
not one.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.optimize

from isac_mimo.exceptions import DomainError

logger = logging.getLogger(__name__)

# Smallest backtracking step before a Newton direction is given up.
MIN_STEP = 1e-14

# Diagonal shifts, relative to the largest Hessian entry, tried in turn when
# the Newton direction gives no decrease.
REGULARIZATION = (0.0, 1e-12, 1e-8, 1e-4)

# Barrier stages run past gap_tol while the KKT residual is above kkt_tol.
KKT_STAGES = 3

# A start violating no constraint by more than this is never reported
# infeasible.
FEASIBILITY_TOL = 1e-8

# Half-width of the box around the start that keeps phase I bounded, relative
# to the largest start entry.
PHASE_ONE_RADIUS = 1e6


@dataclass(frozen=True, eq=False)
class SecondOrderCone:
    """The constraint ||a @ x + b|| <= c @ x + d."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float

    def __post_init__(self) -> None:
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(-1))
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float).reshape(-1))
        object.__setattr__(self, "d", float(self.d))
        if self.b.size != a.shape[0] or self.c.size != a.shape[1]:
            raise DomainError("inconsistent cone data shapes")

    @property
    def n_vars(self) -> int:
        return int(self.c.size)

    def norm(self, x: np.ndarray) -> float:
        return float(np.linalg.norm(self.a @ x + self.b))

    def bound(self, x: np.ndarray) -> float:
        return float(self.c @ x + self.d)

    def residual(self, x: np.ndarray) -> float:
        """Positive when ``x`` violates the cone."""
        return self.norm(x) - self.bound(x)

    def contains(self, x: np.ndarray) -> bool:
        return self.norm(x) <= self.bound(x)

    def lifted(self, n_vars: int) -> SecondOrderCone:
        """The same cone over a decision vector extended with zero columns."""
        extra = n_vars - self.n_vars
        if extra < 0:
            raise DomainError("cannot shrink a cone")
        return SecondOrderCone(
            a=np.pad(self.a, ((0, 0), (0, extra))),
            b=self.b,
            c=np.pad(self.c, (0, extra)),
            d=self.d,
        )

    def rescaled(self, scale: np.ndarray) -> SecondOrderCone:
        """The cone in variables u with x = scale * u."""
        return SecondOrderCone(a=self.a * scale, b=self.b, c=self.c * scale, d=self.d)

    def normalized(self) -> SecondOrderCone:
        size = float(np.linalg.norm(self.c))
        if size == 0:
            return self
        return SecondOrderCone(
            a=self.a / size, b=self.b / size, c=self.c / size, d=self.d / size
        )


@dataclass(frozen=True, eq=False)
class LinearInequality:
    """The constraint g @ x <= h."""

    g: np.ndarray
    h: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "g", np.asarray(self.g, dtype=float).reshape(-1))
        object.__setattr__(self, "h", float(self.h))

    def residual(self, x: np.ndarray) -> float:
        return float(self.g @ x - self.h)

    def rescaled(self, scale: np.ndarray) -> LinearInequality:
        return LinearInequality(g=self.g * scale, h=self.h)

    def normalized(self) -> LinearInequality:
        size = float(np.linalg.norm(self.g))
        if size == 0:
            return self
        return LinearInequality(g=self.g / size, h=self.h / size)


@dataclass(eq=False)
class SocProgram:
    objective: np.ndarray
    cones: List[SecondOrderCone] = field(default_factory=list)
    linear: List[LinearInequality] = field(default_factory=list)
    lower_bounds: Optional[np.ndarray] = None
    offset: float = 0.0

    def __post_init__(self) -> None:
        self.objective = np.asarray(self.objective, dtype=float).reshape(-1)
        if self.lower_bounds is not None:
            self.lower_bounds = np.asarray(self.lower_bounds, dtype=float)
            if self.lower_bounds.shape != self.objective.shape:
                raise DomainError("lower bounds do not match the decision vector")
        for cone in self.cones:
            if cone.n_vars != self.n_vars:
                raise DomainError(
                    f"cone over {cone.n_vars} variables in a program of {self.n_vars}"
                )
        for lin in self.linear:
            if lin.g.size != self.n_vars:
                raise DomainError("linear constraint does not match the program")

    @property
    def n_vars(self) -> int:
        return int(self.objective.size)

    @property
    def barrier_degree(self) -> int:
        bounds = 0
        if self.lower_bounds is not None:
            bounds = int(np.isfinite(self.lower_bounds).sum())
        return 2 * len(self.cones) + len(self.linear) + bounds

    def value(self, x: np.ndarray) -> float:
        return float(self.objective @ x) + self.offset

    def max_violation(self, x: np.ndarray) -> float:
        """Largest constraint violation at ``x``, zero or negative if feasible."""
        residuals = [cone.residual(x) for cone in self.cones]
        residuals += [lin.residual(x) for lin in self.linear]
        if self.lower_bounds is not None:
            finite = np.isfinite(self.lower_bounds)
            residuals += [float(r) for r in self.lower_bounds[finite] - x[finite]]
        return max(residuals, default=-math.inf)

    def rescaled(self, scale: np.ndarray) -> SocProgram:
        """
        The same program in variables u = x / scale, with every constraint
        normalized. Solutions map back through x = scale * u.
        """
        scale = np.asarray(scale, dtype=float)
        if scale.shape != self.objective.shape or np.any(scale <= 0):
            raise DomainError("scale must be positive, one entry per variable")
        return SocProgram(
            objective=self.objective * scale,
            cones=[cone.rescaled(scale).normalized() for cone in self.cones],
            linear=[lin.rescaled(scale).normalized() for lin in self.linear],
            lower_bounds=(
                None if self.lower_bounds is None else self.lower_bounds / scale
            ),
            offset=self.offset,
        )


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITERS = "max_iters"
    STALLED = "stalled"


@dataclass(frozen=True, eq=False)
class SolveResult:
    x_opt: np.ndarray
    obj: float
    status: SolveStatus
    gap: float
    iterations: int = 0
    kkt_residual: float = math.nan


@dataclass(frozen=True)
class SolverSettings:
    gap_tol: float = 1e-7
    # Largest KKT residual, as computed by kkt_residual, of an optimal result.
    kkt_tol: float = 1e-7
    # Cap on Newton steps within one centering stage.
    max_iters: int = 200
    mu0: float = 1.0
    mu_factor: float = 10.0
    newton_tol: float = 1e-12
    alpha: float = 0.01
    beta: float = 0.5

    def __post_init__(self) -> None:
        tolerances = min(self.gap_tol, self.kkt_tol)
        if tolerances <= 0 or self.max_iters < 1 or self.mu_factor <= 1:
            raise DomainError(f"invalid solver settings {self}")
        if not (0 < self.alpha < 0.5 and 0 < self.beta < 1):
            raise DomainError(f"invalid line search parameters {self}")

    def tightened(self, factor: float = 1e-3) -> SolverSettings:
        return replace(self, gap_tol=self.gap_tol * factor)


def lift_reciprocal_terms(
    K: int,
    coefficients: Sequence[float],
    *,
    gamma_index: Optional[Sequence[int]] = None,
    epigraph_index: Optional[Sequence[int]] = None,
    n_vars: Optional[int] = None,
) -> List[SecondOrderCone]:
    """
    Cones encoding t_k >= B_k / gamma_k as
    ||[2 sqrt(B_k), gamma_k - t_k]|| <= gamma_k + t_k for k = 1..K.

    By default the decision vector is [gamma_1..gamma_K, rho, t_1..t_K];
    other layouts pass the entry indices and the vector size.
    """
    values = np.asarray(coefficients, dtype=float).reshape(-1)
    gamma_index = range(K) if gamma_index is None else gamma_index
    if epigraph_index is None:
        epigraph_index = range(K + 1, 2 * K + 1)
    n_vars = 2 * K + 1 if n_vars is None else n_vars
    if np.any(values < 0):
        raise DomainError("reciprocal coefficients must be non-negative")
    if not K == len(values) == len(gamma_index) == len(epigraph_index):
        raise DomainError(f"expected {K} coefficients, gamma and epigraph indices")
    cones = []
    for value, g, t in zip(values, gamma_index, epigraph_index):
        a = np.zeros((2, n_vars))
        a[1, g], a[1, t] = 1.0, -1.0
        c = np.zeros(n_vars)
        c[g] = c[t] = 1.0
        b = np.array([2.0 * math.sqrt(value), 0.0])
        cones.append(SecondOrderCone(a=a, b=b, c=c, d=0.0))
    return cones


class _Barrier:
    def __init__(self, prog: SocProgram):
        self.prog = prog
        lb = prog.lower_bounds
        if lb is None:
            self.bounded = np.zeros(prog.n_vars, dtype=bool)
        else:
            self.bounded = np.isfinite(lb)

    def _bound_slack(self, x: np.ndarray) -> np.ndarray:
        if self.prog.lower_bounds is None:
            return np.empty(0)
        return x[self.bounded] - self.prog.lower_bounds[self.bounded]

    def is_interior(self, x: np.ndarray) -> bool:
        for cone in self.prog.cones:
            s = cone.bound(x)
            if s <= 0 or s * s - cone.norm(x) ** 2 <= 0:
                return False
        if any(lin.residual(x) >= 0 for lin in self.prog.linear):
            return False
        return not np.any(self._bound_slack(x) <= 0)

    def change(self, x: np.ndarray, dx: np.ndarray) -> float:
        """
        barrier(x + dx) - barrier(x) for an interior x, summed from relative
        slack changes so that it stays accurate when both values are large.
        Infinite when x + dx leaves the interior.
        """
        if not self.is_interior(x + dx):
            return math.inf
        ratios: List[float] = []
        for cone in self.prog.cones:
            u, du = cone.a @ x + cone.b, cone.a @ dx
            s, ds = cone.bound(x), float(cone.c @ dx)
            f = s * s - float(u @ u)
            ratios.append((ds * (2.0 * s + ds) - float(du @ (2.0 * u + du))) / f)
        for lin in self.prog.linear:
            ratios.append(float(lin.g @ dx) / lin.residual(x))
        ratios.extend(float(r) for r in dx[self.bounded] / self._bound_slack(x))
        values = np.asarray(ratios, dtype=float)
        if np.any(values <= -1.0):
            return math.inf
        return -float(np.sum(np.log1p(values)))

    def derivatives(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        n = x.size
        grad, hess = np.zeros(n), np.zeros((n, n))
        for cone in self.prog.cones:
            u = cone.a @ x + cone.b
            s = cone.bound(x)
            f = s * s - u @ u
            df = 2.0 * (s * cone.c - cone.a.T @ u)
            d2f = 2.0 * (np.outer(cone.c, cone.c) - cone.a.T @ cone.a)
            grad -= df / f
            hess += np.outer(df, df) / f**2 - d2f / f
        for lin in self.prog.linear:
            r = -lin.residual(x)
            grad += lin.g / r
            hess += np.outer(lin.g, lin.g) / r**2
        slack = self._bound_slack(x)
        idx = np.flatnonzero(self.bounded)
        grad[idx] -= 1.0 / slack
        hess[idx, idx] += 1.0 / slack**2
        return grad, hess


def _newton_direction(hess: np.ndarray, grad: np.ndarray) -> np.ndarray:
    try:
        factor = scipy.linalg.cho_factor(hess)
        return -scipy.linalg.cho_solve(factor, grad)
    except np.linalg.LinAlgError:
        return -np.linalg.lstsq(hess, grad, rcond=None)[0]


def kkt_residual(prog: SocProgram, x: np.ndarray) -> float:
    """
    Smallest KKT residual of ``x`` over non-negative multipliers y.

    With every constraint written as h_j(x) <= 0 and s_j = -h_j(x) its slack,
    the residual stacks the stationarity error c - sum_j y_j grad h_j(x) with
    the complementarity products y_j s_j, relative to max(1, ||c||). Infinite
    when ``x`` violates a constraint.
    """
    normals: List[np.ndarray] = []
    slacks: List[float] = []
    for cone in prog.cones:
        u = cone.a @ x + cone.b
        size = float(np.linalg.norm(u))
        direction = cone.a.T @ (u / size) if size > 0 else np.zeros(prog.n_vars)
        normals.append(direction - cone.c)
        slacks.append(cone.bound(x) - size)
    for lin in prog.linear:
        normals.append(lin.g)
        slacks.append(-lin.residual(x))
    if prog.lower_bounds is not None:
        for i in np.flatnonzero(np.isfinite(prog.lower_bounds)):
            normal = np.zeros(prog.n_vars)
            normal[i] = -1.0
            normals.append(normal)
            slacks.append(float(x[i] - prog.lower_bounds[i]))
    c = prog.objective
    reference = max(1.0, float(np.linalg.norm(c)))
    if not normals:
        return float(np.linalg.norm(c)) / reference
    if min(slacks) < 0:
        return math.inf
    matrix = np.vstack([np.column_stack(normals), np.diag(slacks)])
    target = np.concatenate([c, np.zeros(len(slacks))])
    try:
        _, residual = scipy.optimize.nnls(matrix, target, maxiter=50 * len(slacks))
    except RuntimeError:
        return math.inf
    return float(residual) / reference


@dataclass
class _Centering:
    x: np.ndarray
    steps: int
    capped: bool = False
    stalled: bool = False


def _damped_step(
    barrier: _Barrier,
    t: float,
    x: np.ndarray,
    grad: np.ndarray,
    hess: np.ndarray,
    settings: SolverSettings,
) -> Optional[np.ndarray]:
    """
    Backtracking Newton step on -t c^T x + barrier(x). When the plain direction
    gives no sufficient decrease, the Hessian diagonal is shifted in turn by
    each of REGULARIZATION. None when every direction stalls.
    """
    c = barrier.prog.objective
    largest = max(float(np.max(np.abs(np.diag(hess)), initial=0.0)), 1.0)
    for shift in REGULARIZATION:
        dx = _newton_direction(hess + shift * largest * np.eye(x.size), grad)
        decrement = -float(grad @ dx)
        if not decrement > 0:
            continue
        s = 1.0
        while s >= MIN_STEP:
            change = barrier.change(x, s * dx) - t * s * float(c @ dx)
            if change <= -settings.alpha * s * decrement:
                return x + s * dx
            s *= settings.beta
    return None


def _center(
    barrier: _Barrier, t: float, x: np.ndarray, settings: SolverSettings
) -> _Centering:
    """Minimize -t c^T x + barrier(x) by damped Newton from an interior x."""
    c = barrier.prog.objective
    for step in range(settings.max_iters):
        b_grad, b_hess = barrier.derivatives(x)
        grad = -t * c + b_grad
        decrement = -float(grad @ _newton_direction(b_hess, grad))
        if decrement / 2.0 <= settings.newton_tol:
            return _Centering(x, step)
        moved = _damped_step(barrier, t, x, grad, b_hess, settings)
        if moved is None:
            return _Centering(x, step, stalled=True)
        x = moved
    return _Centering(x, settings.max_iters, capped=True)


def _barrier_method(
    prog: SocProgram,
    x: np.ndarray,
    settings: SolverSettings,
    stop: Optional[Callable[[np.ndarray], bool]] = None,
) -> SolveResult:
    """
    Follow the central path from the interior point ``x``. A result is
    optimal once the gap estimate is within gap_tol and the KKT residual
    within kkt_tol; the barrier weight keeps growing for up to KKT_STAGES
    further stages while only the residual is too large.
    """
    barrier = _Barrier(prog)
    degree = max(prog.barrier_degree, 1)
    t = 1.0 / settings.mu0
    last_gap = settings.gap_tol / settings.mu_factor**KKT_STAGES
    iterations = 0
    while True:
        centered = _center(barrier, t, x, settings)
        x, iterations = centered.x, iterations + centered.steps
        gap = degree / t
        if centered.stalled:
            logger.debug("centering stalled at t=%.3e", t)
        kkt = math.nan
        if centered.capped:
            status = SolveStatus.MAX_ITERS
        elif stop is not None and stop(x):
            status = SolveStatus.OPTIMAL
        elif gap > settings.gap_tol:
            t *= settings.mu_factor
            continue
        else:
            kkt = kkt_residual(prog, x)
            if kkt <= settings.kkt_tol:
                status = SolveStatus.OPTIMAL
            elif gap > last_gap:
                t *= settings.mu_factor
                continue
            else:
                status = SolveStatus.STALLED
        if math.isnan(kkt):
            kkt = kkt_residual(prog, x)
        return SolveResult(x, prog.value(x), status, gap, iterations, kkt)


def find_interior_point(
    prog: SocProgram, start: np.ndarray, settings: SolverSettings
) -> Optional[np.ndarray]:
    """
    Phase I: minimize a common relaxation s of every constraint, stopping as
    soon as s < 0. The search stays in a wide box around ``start``. Returns
    None when no interior point is found.
    """
    n = prog.n_vars
    violation = prog.max_violation(start)
    cones = []
    for cone in prog.cones:
        lifted = cone.lifted(n + 1)
        c = lifted.c.copy()
        c[-1] = 1.0
        cones.append(SecondOrderCone(a=lifted.a, b=lifted.b, c=c, d=lifted.d))
    linear = [
        LinearInequality(g=np.append(lin.g, -1.0), h=lin.h) for lin in prog.linear
    ]
    if prog.lower_bounds is not None:
        for i in np.flatnonzero(np.isfinite(prog.lower_bounds)):
            g = np.zeros(n + 1)
            g[i], g[-1] = -1.0, -1.0
            linear.append(LinearInequality(g=g, h=-prog.lower_bounds[i]))
    radius = PHASE_ONE_RADIUS * (1.0 + float(np.max(np.abs(start), initial=0.0)))
    for i in range(n):
        for sign in (1.0, -1.0):
            g = np.zeros(n + 1)
            g[i] = sign
            linear.append(LinearInequality(g=g, h=sign * start[i] + radius))
    objective = np.zeros(n + 1)
    objective[-1] = -1.0
    bounds = np.full(n + 1, -np.inf)
    bounds[-1] = -1.0
    phase_one = SocProgram(objective, cones, linear, bounds)

    logger.debug("phase I from violation %.3e", violation)
    s0 = max(violation, 0.0) + 1.0
    result = _barrier_method(
        phase_one, np.append(start, s0), settings, stop=lambda z: bool(z[-1] < 0)
    )
    if result.x_opt[-1] >= 0:
        return None
    return result.x_opt[:-1]


def solve(
    prog: SocProgram,
    start: np.ndarray,
    settings: Optional[SolverSettings] = None,
) -> SolveResult:
    settings = settings or SolverSettings()
    x0 = np.asarray(start, dtype=float).reshape(-1)
    if x0.size != prog.n_vars:
        raise DomainError(f"start has {x0.size} entries, program has {prog.n_vars}")
    if not _Barrier(prog).is_interior(x0):
        interior = find_interior_point(prog, x0, settings)
        if interior is None:
            violation = prog.max_violation(x0)
            logger.debug("phase I found no interior point, violation %.2e", violation)
            if violation <= FEASIBILITY_TOL:
                # Feasible but on the boundary: nothing to improve from.
                return SolveResult(x0, prog.value(x0), SolveStatus.STALLED, math.inf)
            return SolveResult(x0, prog.value(x0), SolveStatus.INFEASIBLE, math.inf)
        x0 = interior
    result = _barrier_method(prog, x0, settings)
    logger.debug(
        "SOCP %s after %d Newton steps, gap %.2e",
        result.status.value,
        result.iterations,
        result.gap,
    )
    return result
