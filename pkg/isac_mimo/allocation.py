# -*- coding: utf-8 -*-
"""
Power allocation between the users and the sensing beam.

The sum rate is maximized under the transmit power budget and upper limits on
both angle CRLBs by successive convex approximation. Each iteration replaces
every user's rate by a concave lower bound that is tight at the current point
and solves the resulting second-order cone program.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Hashable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from isac_mimo.channel import LargeScaleSet, SystemConfig, rng_stream
from isac_mimo.exceptions import (
    DomainError,
    EstimationImpossibleError,
    InfeasibleScenarioError,
    NonMonotonicStepError,
)
from isac_mimo.precoding import (
    PowerAllocation,
    Scheme,
    equal_power_allocation,
    initial_allocation,
    xi_bf,
)
from isac_mimo.rate import closed_form_rate, rate_coefficients
from isac_mimo.sensing import crlb_simplified, fisher_coefficients
from isac_mimo.socp import (
    FEASIBILITY_TOL,
    LinearInequality,
    SecondOrderCone,
    SocProgram,
    SolverSettings,
    SolveStatus,
    lift_reciprocal_terms,
    solve,
)

logger = logging.getLogger(__name__)

# Lower bound on each gamma, relative to P_t / N_t.
GAMMA_FLOOR = 1e-9
P0_MIN = 1e-3
P0_MAX = 1.0 - 1e-3
P0_RESOLUTION = 1e-3
# Allowed decrease of the sum rate between iterations, relative to its size.
MONOTONE_SLACK = 1e-9
# Anchor points of the subproblem starts: sensing shares tried in turn, and
# the fraction of the budget they leave unused.
ANCHOR_SHARES = (0.5, 0.9, P0_MAX)
ANCHOR_MARGIN = 1e-2
# Weights of the anchor in a subproblem start, tried in turn.
ANCHOR_WEIGHTS = (1e-2, 1e-1, 0.5, 1.0)


class InitPolicy(str, Enum):
    HALF_POWER = "half_power"
    SMALLEST_P0 = "smallest_p0"


class Method(str, Enum):
    PROPOSED = "Proposed"
    EQUAL_COM = "EqualCom"
    EQUAL_CS = "EqualCS"


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


@dataclass(frozen=True)
class ScaConfig:
    crlb_theta_max: float = db_to_linear(-35.0)
    crlb_phi_max: float = db_to_linear(-35.0)
    max_iters: int = 50
    rel_obj_tol: float = 1e-4
    init_policy: InitPolicy = InitPolicy.SMALLEST_P0
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self) -> None:
        if not (self.crlb_theta_max > 0 and self.crlb_phi_max > 0):
            raise DomainError("CRLB limits must be positive")
        if not self.rel_obj_tol > 0:
            raise DomainError("rel_obj_tol must be positive")
        if self.max_iters < 1:
            raise DomainError("max_iters must be at least 1")
        object.__setattr__(self, "init_policy", InitPolicy(self.init_policy))

    @classmethod
    def from_db(
        cls, theta_db: float, phi_db: Optional[float] = None, **kwargs: object
    ) -> ScaConfig:
        phi_db = theta_db if phi_db is None else phi_db
        return cls(
            crlb_theta_max=db_to_linear(theta_db),
            crlb_phi_max=db_to_linear(phi_db),
            **kwargs,  # type: ignore[arg-type]
        )

    @property
    def limits(self) -> Tuple[float, float]:
        return self.crlb_theta_max, self.crlb_phi_max


class SurrogateCoefficients(NamedTuple):
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    lam: np.ndarray
    zeta: np.ndarray


@dataclass(frozen=True, eq=False)
class ScaIteration:
    index: int
    objective: float
    gamma: np.ndarray
    rho: float
    status: Optional[SolveStatus] = None


@dataclass(eq=False)
class ScaTrace:
    iterations: List[ScaIteration]
    allocation: PowerAllocation
    converged: bool
    p0: float

    @property
    def objectives(self) -> np.ndarray:
        return np.array([it.objective for it in self.iterations])

    @property
    def objective(self) -> float:
        return self.iterations[-1].objective

    @property
    def n_iterations(self) -> int:
        """Solved subproblems, the initial point excluded."""
        return len(self.iterations) - 1


def _interference(
    ls: LargeScaleSet,
    zeta: np.ndarray,
    gamma: np.ndarray,
    rho: float,
    cfg: SystemConfig,
) -> np.ndarray:
    return cfg.n_t * ls.beta * rho + cfg.n_t * (zeta @ gamma) + cfg.sigma_c2


def surrogate_coefficients(
    ls: LargeScaleSet, scheme: Scheme, cfg: SystemConfig, point: PowerAllocation
) -> SurrogateCoefficients:
    """
    Coefficients of ln(1 + x/y) >= A - B/x - C y, with x the signal and y the
    interference plus noise power, expanded at ``point``.
    """
    if np.any(point.gamma <= 0):
        raise DomainError("expansion point needs every gamma_k > 0")
    lam, zeta = rate_coefficients(ls, scheme, cfg.n_t)
    x = lam * point.gamma
    y = _interference(ls, zeta, point.gamma, point.rho, cfg)
    return SurrogateCoefficients(
        A=np.log1p(x / y) + 2.0 * x / (x + y),
        B=x**2 / (x + y),
        C=x / ((x + y) * y),
        lam=lam,
        zeta=zeta,
    )


def surrogate_rate(
    coeffs: SurrogateCoefficients,
    ls: LargeScaleSet,
    alloc: PowerAllocation,
    cfg: SystemConfig,
) -> np.ndarray:
    """Per-user concave lower bound of the rate, in bit/s/Hz."""
    y = _interference(ls, coeffs.zeta, alloc.gamma, alloc.rho, cfg)
    nats = coeffs.A - coeffs.B / (coeffs.lam * alloc.gamma) - coeffs.C * y
    return cfg.pre_log * nats / math.log(2.0)


def _tie_matrix(tie: Optional[np.ndarray], K: int) -> np.ndarray:
    if tie is None:
        return np.eye(K)
    tie = np.asarray(tie, dtype=float)
    if tie.ndim != 2 or tie.shape[0] != K:
        raise DomainError(f"tie matrix must have {K} rows")
    if np.any(tie.sum(axis=1) != 1) or np.any((tie != 0) & (tie != 1)):
        raise DomainError("each user must belong to exactly one power group")
    if np.any(tie.sum(axis=0) == 0):
        raise DomainError("every power group needs at least one user")
    return tie


def _group_values(gamma: np.ndarray, tie: np.ndarray) -> np.ndarray:
    return (tie.T @ gamma) / tie.sum(axis=0)


def crlb_soc_constraints(
    ls: LargeScaleSet,
    scheme: Scheme,
    cfg: SystemConfig,
    limits: Tuple[float, float],
    tie: Optional[np.ndarray] = None,
) -> List[SecondOrderCone]:
    """
    The two CRLB limits as cones over ``[gamma, rho]``, or over the group
    powers and rho when users are tied by ``tie``.

    With J the aligned-beam FIM divided by kappa |alpha|^2, CRLB_theta <= L
    holds iff (J_tt - t) J_pp >= J_tp^2 with t = 1 / (kappa |alpha|^2 L),
    which is the rotated cone written here.
    """
    tie = _tie_matrix(tie, ls.K)
    coeffs = fisher_coefficients(cfg)
    weights = tie.T @ xi_bf(ls, scheme, cfg.n_t)

    def row(pair: Tuple[float, float]) -> np.ndarray:
        return np.append(pair[0] * weights, pair[1])

    r_tt, r_pp, r_tp = row(coeffs.theta), row(coeffs.phi), row(coeffs.cross)
    cones = []
    for limit, own, other in ((limits[0], r_tt, r_pp), (limits[1], r_pp, r_tt)):
        if not limit > 0:
            raise DomainError(f"CRLB limit must be positive, got {limit}")
        t = 1.0 / (coeffs.scale * limit)
        cone = SecondOrderCone(
            a=np.vstack([r_tp, 0.5 * (own - other)]),
            b=np.array([0.0, -0.5 * t]),
            c=0.5 * (own + other),
            d=-0.5 * t,
        )
        cones.append(cone.normalized())
    return cones


def _crlb_feasible(
    ls: LargeScaleSet,
    scheme: Scheme,
    cfg: SystemConfig,
    alloc: PowerAllocation,
    limits: Tuple[float, float],
) -> bool:
    try:
        crlb = crlb_simplified(ls, scheme, alloc, cfg)
    except EstimationImpossibleError:
        return False
    return crlb.crlb_theta <= limits[0] and crlb.crlb_phi <= limits[1]


def initial_p0(
    ls: LargeScaleSet, scheme: Scheme, cfg: SystemConfig, sca: ScaConfig
) -> float:
    """Sensing share of the budget at the starting point of the iterations."""

    def feasible(p0: float) -> bool:
        alloc = initial_allocation(ls, scheme, cfg.n_t, cfg.P_t, p0)
        return _crlb_feasible(ls, scheme, cfg, alloc, sca.limits)

    if sca.init_policy is InitPolicy.HALF_POWER:
        if not feasible(0.5):
            raise InfeasibleScenarioError("the equal power split violates a CRLB limit")
        return 0.5
    if feasible(P0_MIN):
        return P0_MIN
    lo, hi = P0_MIN, P0_MAX
    if not feasible(hi):
        raise InfeasibleScenarioError("no sensing share meets the CRLB limits")
    while hi - lo > P0_RESOLUTION:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def find_initial_point(
    ls: LargeScaleSet, scheme: Scheme, cfg: SystemConfig, sca: ScaConfig
) -> PowerAllocation:
    p0 = initial_p0(ls, scheme, cfg, sca)
    return initial_allocation(ls, scheme, cfg.n_t, cfg.P_t, p0)


class _Subproblem:
    """
    The convex problem of one iteration over x = [z, rho, t], with z the
    group powers (gamma = T z) and t the epigraphs of the reciprocal terms.
    """

    def __init__(
        self,
        ls: LargeScaleSet,
        scheme: Scheme,
        cfg: SystemConfig,
        sca: ScaConfig,
        tie: np.ndarray,
    ):
        self.ls, self.scheme, self.cfg, self.tie = ls, scheme, cfg, tie
        self.groups = tie.shape[1]
        n = 2 * self.groups + 1
        self.n_vars = n
        n_t, p_t = cfg.n_t, cfg.P_t

        power = np.zeros(n)
        power[: self.groups] = n_t * (tie.T @ xi_bf(ls, scheme, n_t))
        power[self.groups] = n_t
        self.power = LinearInequality(g=power, h=p_t)
        self.crlb = [
            cone.lifted(n)
            for cone in crlb_soc_constraints(ls, scheme, cfg, sca.limits, tie)
        ]
        self.lower_bounds = np.full(n, -np.inf)
        self.lower_bounds[: self.groups] = GAMMA_FLOOR * p_t / n_t
        self.lower_bounds[self.groups] = 0.0
        self.anchor = self._find_anchor()

    def _violation(self, powers: np.ndarray) -> float:
        """Largest violation of the power, CRLB and bound constraints at [z, rho]."""
        x = np.concatenate([powers, np.zeros(self.groups)])
        residuals = [cone.residual(x) for cone in self.crlb]
        residuals.append(self.power.residual(x))
        floors = self.lower_bounds[: self.groups + 1] - powers
        return max(residuals + [float(r) for r in floors])

    def _find_anchor(self) -> Optional[np.ndarray]:
        cfg = self.cfg
        for share in ANCHOR_SHARES:
            alloc = initial_allocation(self.ls, self.scheme, cfg.n_t, cfg.P_t, share)
            alloc = alloc.scaled(1.0 - ANCHOR_MARGIN)
            powers = np.append(_group_values(alloc.gamma, self.tie), alloc.rho)
            if self._violation(powers) < 0:
                return powers
        logger.debug("no strictly feasible anchor for the SCA subproblems")
        return None

    def _interior_start(self, powers: np.ndarray) -> np.ndarray:
        """
        ``powers`` moved towards the anchor until every power, CRLB and bound
        constraint holds strictly, or ``powers`` unchanged without an anchor.
        """
        if self.anchor is None:
            return powers
        for weight in ANCHOR_WEIGHTS:
            candidate = (1.0 - weight) * powers + weight * self.anchor
            if self._violation(candidate) < 0:
                return candidate
        return powers

    def program(self, point: PowerAllocation) -> Tuple[SocProgram, np.ndarray]:
        g, n_t = self.groups, self.cfg.n_t
        coeffs = surrogate_coefficients(self.ls, self.scheme, self.cfg, point)
        scale = self.cfg.pre_log / math.log(2.0)
        reciprocal = self.tie.T @ (coeffs.B / coeffs.lam)

        objective = np.zeros(self.n_vars)
        objective[:g] = -scale * n_t * (coeffs.C @ coeffs.zeta @ self.tie)
        objective[g] = -scale * n_t * float(coeffs.C @ self.ls.beta)
        objective[g + 1 :] = -scale
        offset = scale * math.fsum(coeffs.A - coeffs.C * self.cfg.sigma_c2)

        prog = SocProgram(
            objective=objective,
            cones=lift_reciprocal_terms(g, reciprocal) + self.crlb,
            linear=[self.power],
            lower_bounds=self.lower_bounds,
            offset=offset,
        )
        return prog, reciprocal

    def solve(
        self, point: PowerAllocation, settings: SolverSettings
    ) -> Tuple[PowerAllocation, SolveStatus]:
        """
        Solve the program expanded at ``point``. The result is never worse
        than ``point`` itself in the program's objective: ``point`` is feasible
        with every epigraph tight, where the program equals the sum rate.
        """
        g = self.groups
        prog, reciprocal = self.program(point)
        z0 = _group_values(point.gamma, self.tie)
        incumbent = np.concatenate([z0, [point.rho], reciprocal / z0])

        powers = self._interior_start(np.append(z0, point.rho))
        epigraph = np.where(reciprocal > 0, 2.0 * reciprocal / powers[:g], 1.0)
        start = np.concatenate([powers, epigraph])
        unit = np.maximum(np.abs(start), GAMMA_FLOOR * self.cfg.P_t / self.cfg.n_t)
        result = solve(prog.rescaled(unit), start / unit, settings)
        if result.status is SolveStatus.INFEASIBLE:
            raise InfeasibleScenarioError("SCA subproblem has no feasible point")
        x = unit * result.x_opt
        if (
            prog.max_violation(x) > FEASIBILITY_TOL
            or prog.value(x) < prog.value(incumbent)
        ):
            logger.debug("SCA subproblem (%s) kept the incumbent", result.status.value)
            return point, result.status
        gamma = self.tie @ x[:g]
        return PowerAllocation(gamma=gamma, rho=max(float(x[g]), 0.0)), result.status


def _sum_rate(
    ls: LargeScaleSet, scheme: Scheme, alloc: PowerAllocation, cfg: SystemConfig
) -> float:
    return closed_form_rate(ls, scheme, alloc, cfg).sum_rate


def run_sca(
    ls: LargeScaleSet,
    scheme: Scheme,
    cfg: SystemConfig,
    sca: Optional[ScaConfig] = None,
    *,
    tie: Optional[np.ndarray] = None,
    start: Optional[PowerAllocation] = None,
) -> ScaTrace:
    sca = sca or ScaConfig()
    tie = _tie_matrix(tie, ls.K)
    if start is None:
        p0 = initial_p0(ls, scheme, cfg, sca)
        start = initial_allocation(ls, scheme, cfg.n_t, cfg.P_t, p0)
    else:
        p0 = cfg.n_t * start.rho / cfg.P_t
    subproblem = _Subproblem(ls, scheme, cfg, sca, tie)

    point, objective = start, _sum_rate(ls, scheme, start, cfg)
    trace = [ScaIteration(0, objective, point.gamma, point.rho)]
    converged = False
    for index in range(1, sca.max_iters + 1):
        candidate, status = subproblem.solve(point, sca.solver)
        value = _sum_rate(ls, scheme, candidate, cfg)
        slack = MONOTONE_SLACK * max(1.0, abs(objective))
        if value < objective - slack:
            logger.warning(
                "SCA step %d lowered the sum rate by %.3e, retrying",
                index,
                objective - value,
            )
            candidate, status = subproblem.solve(point, sca.solver.tightened())
            value = _sum_rate(ls, scheme, candidate, cfg)
            if value < objective - slack:
                raise NonMonotonicStepError(
                    f"SCA step {index} lowered the sum rate from {objective} to {value}"
                )
        logger.debug("SCA iteration %d: sum rate %.9g (%s)", index, value, status.value)
        trace.append(ScaIteration(index, value, candidate.gamma, candidate.rho, status))
        change = abs(value - objective) / max(abs(objective), 1e-300)
        point, objective = candidate, value
        if change < sca.rel_obj_tol:
            converged = True
            break
    return ScaTrace(iterations=trace, allocation=point, converged=converged, p0=p0)


def benchmark_allocations(
    ls: LargeScaleSet,
    scheme: Scheme,
    cfg: SystemConfig,
    which: Method,
    sca: Optional[ScaConfig] = None,
) -> PowerAllocation:
    which = Method(which)
    if which is Method.EQUAL_CS:
        return equal_power_allocation(ls, scheme, cfg.n_t, cfg.P_t)
    if which is Method.EQUAL_COM:
        tie = np.ones((ls.K, 1))
        return run_sca(ls, scheme, cfg, sca, tie=tie).allocation
    raise DomainError(f"{which.value} is not a benchmark allocation")


def allocate(
    ls: LargeScaleSet,
    scheme: Scheme,
    cfg: SystemConfig,
    method: Method,
    sca: Optional[ScaConfig] = None,
) -> Tuple[PowerAllocation, Optional[ScaTrace]]:
    """The allocation of any method, with the SCA trace when one was run."""
    method = Method(method)
    if method is Method.EQUAL_CS:
        return benchmark_allocations(ls, scheme, cfg, method, sca), None
    tie = np.ones((ls.K, 1)) if method is Method.EQUAL_COM else None
    trace = run_sca(ls, scheme, cfg, sca, tie=tie)
    return trace.allocation, trace


def run_multi_start(
    ls: LargeScaleSet,
    scheme: Scheme,
    cfg: SystemConfig,
    sca: Optional[ScaConfig] = None,
    *,
    starts: int = 5,
    stream: Sequence[Hashable] = (),
) -> ScaTrace:
    """
    Run the iterations from the smallest feasible sensing share and from
    ``starts - 1`` random feasible shares above it, keeping the best result.
    """
    if starts < 1:
        raise DomainError(f"starts must be >= 1, got {starts}")
    sca = sca or ScaConfig()
    smallest = initial_p0(
        ls, scheme, cfg, replace(sca, init_policy=InitPolicy.SMALLEST_P0)
    )
    rng = rng_stream(cfg.seed, "multi-start", *stream)
    shares = [smallest] + list(rng.uniform(smallest, P0_MAX, size=starts - 1))
    best: Optional[ScaTrace] = None
    for p0 in shares:
        start = initial_allocation(ls, scheme, cfg.n_t, cfg.P_t, float(p0))
        if not _crlb_feasible(ls, scheme, cfg, start, sca.limits):
            logger.debug("skipping infeasible start p0=%.4f", p0)
            continue
        trace = run_sca(ls, scheme, cfg, sca, start=start)
        if best is None or trace.objective > best.objective:
            best = trace
    assert best is not None
    return best
