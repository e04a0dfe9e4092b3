# -*- coding: utf-8 -*-
"""
Cross-checks of the closed forms against independent computations: direct
formula evaluation, finite differences, brute-force traces, Monte-Carlo
averages and a general-purpose optimizer.

Each suite yields ``OracleCheck`` values; a check passes when its worst
error is within tolerance. ``quick`` runs use fewer cases and draws.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Dict, Iterator, List, Tuple

import numpy as np
from scipy.optimize import minimize

from isac_mimo.allocation import (
    InitPolicy,
    ScaConfig,
    crlb_soc_constraints,
    run_sca,
    surrogate_coefficients,
    surrogate_rate,
)
from isac_mimo.channel import (
    LargeScaleSet,
    SystemConfig,
    draw_large_scale,
    draw_small_scale,
    rng_stream,
)
from isac_mimo.exceptions import DomainError, EstimationImpossibleError
from isac_mimo.geometry import (
    Angles,
    UpaSpec,
    Wrt,
    derivative_identities,
    steering,
    steering_derivative,
)
from isac_mimo.montecarlo import CompensatedSum, chunk_sizes
from isac_mimo.precoding import (
    PowerAllocation,
    Scheme,
    build_precoder,
    equal_power_allocation,
    total_power,
    transmit_power,
    xi_bf,
)
from isac_mimo.rate import closed_form_rate, closed_form_sinr, monte_carlo_rate
from isac_mimo.sensing import (
    CrlbPair,
    crlb_general,
    crlb_simplified,
    fisher_blocks_from_covariance,
    fisher_blocks_general,
    mle_mse_sweep,
    sensing_covariance,
)
from isac_mimo.socp import LinearInequality, SecondOrderCone, SocProgram, solve

logger = logging.getLogger(__name__)

FD_STEP = 1e-6
SHIFTS: Tuple[Tuple[Wrt, Tuple[float, float]], ...] = (
    ("theta", (FD_STEP, 0.0)),
    ("phi", (0.0, FD_STEP)),
)


@dataclass(frozen=True)
class OracleCheck:
    suite: str
    name: str
    error: float
    tolerance: float
    cases: int = 1

    @property
    def passed(self) -> bool:
        return self.error <= self.tolerance

    def __str__(self) -> str:
        verdict = "ok" if self.passed else "FAILED"
        return (
            f"{self.suite}/{self.name}: worst {self.error:.3e} "
            f"(tolerance {self.tolerance:.1e}, {self.cases} cases) {verdict}"
        )


def _relative(value: float, reference: float) -> float:
    return abs(value - reference) / max(abs(reference), 1e-300)


def _random_angles(rng: np.random.Generator) -> Angles:
    # Away from the poles, where the azimuth derivatives vanish.
    return Angles(float(rng.uniform(0.1, 1.4)), float(rng.uniform(0.2, 1.3)))


def _random_upa(rng: np.random.Generator, largest: int = 6) -> UpaSpec:
    return UpaSpec(int(rng.integers(2, largest + 1)), int(rng.integers(2, largest + 1)))


def _random_system(rng: np.random.Generator) -> SystemConfig:
    tx = _random_upa(rng)
    K = int(rng.integers(1, min(tx.n - 1, 6) + 1))
    return SystemConfig(
        tx=tx,
        rx=_random_upa(rng, 5),
        K=K,
        P_t=float(10.0 ** rng.uniform(0.0, 2.0)),
        alpha=0.1 * complex(rng.standard_normal(), rng.standard_normal()),
        target=_random_angles(rng),
        seed=int(rng.integers(2**31)),
    )


def _random_allocation(
    rng: np.random.Generator, cfg: SystemConfig, ls: LargeScaleSet, scheme: Scheme
) -> PowerAllocation:
    base = equal_power_allocation(ls, scheme, cfg.n_t, cfg.P_t)
    return PowerAllocation(
        gamma=base.gamma * rng.uniform(0.1, 1.9, ls.K),
        rho=base.rho * float(rng.uniform(0.1, 1.9)),
    )


def _desk_system(n_t: int, K: int, seed: int) -> SystemConfig:
    return SystemConfig(tx=UpaSpec.square(n_t), K=K, seed=seed)


def steering_suite(seed: int, quick: bool) -> Iterator[OracleCheck]:
    rng = rng_stream(seed, "oracle", "steering")
    cases = 20 if quick else 100
    direct = derivative = identities = 0.0
    for _ in range(cases):
        spec, ang = _random_upa(rng, 8), _random_angles(rng)

        u_h = np.sin(ang.theta) * np.sin(ang.phi)
        horizontal = [
            np.exp(1j * np.pi * (m - (spec.n_h - 1) / 2) * u_h)
            for m in range(spec.n_h)
        ]
        vertical = [
            np.exp(1j * np.pi * (n - (spec.n_v - 1) / 2) * np.cos(ang.phi))
            for n in range(spec.n_v)
        ]
        reference = np.array([h * v for h in horizontal for v in vertical])
        direct = max(direct, float(np.max(np.abs(steering(spec, ang) - reference))))

        for wrt, shift in SHIFTS:
            plus = steering(spec, Angles(ang.theta + shift[0], ang.phi + shift[1]))
            minus = steering(spec, Angles(ang.theta - shift[0], ang.phi - shift[1]))
            fd = (plus - minus) / (2.0 * FD_STEP)
            analytic = steering_derivative(spec, ang, wrt)
            error = np.linalg.norm(fd - analytic) / np.linalg.norm(analytic)
            derivative = max(derivative, float(error))

        ident = derivative_identities(spec, spec, ang)
        d_t = steering_derivative(spec, ang, "theta")
        d_p = steering_derivative(spec, ang, "phi")
        scale = float(np.linalg.norm(d_t) * np.linalg.norm(d_p))
        identities = max(
            identities,
            _relative(ident.tx_theta_sq, float(np.vdot(d_t, d_t).real)),
            _relative(ident.tx_phi_sq, float(np.vdot(d_p, d_p).real)),
            abs(ident.tx_cross - float(np.vdot(d_t, d_p).real)) / scale,
        )
    yield OracleCheck("steering", "direct-formula", direct, 1e-12, cases)
    yield OracleCheck("steering", "finite-difference", derivative, 1e-5, cases)
    yield OracleCheck("steering", "derivative-identities", identities, 1e-10, cases)


def fim_suite(seed: int, quick: bool) -> Iterator[OracleCheck]:
    rng = rng_stream(seed, "oracle", "fim")
    cases = 20 if quick else 100
    worst = 0.0
    for _ in range(cases):
        cfg = _random_system(rng)
        ls = draw_large_scale(cfg, rng)
        scheme = Scheme.MRT if rng.uniform() < 0.5 else Scheme.ZF
        alloc = _random_allocation(rng, cfg, ls, scheme)
        beam = cfg.target.offset(float(rng.uniform(-0.05, 0.05)))
        blocks = fisher_blocks_general(ls, scheme, alloc, cfg, beam)
        cov = sensing_covariance(ls, scheme, alloc, cfg, beam)
        brute = fisher_blocks_from_covariance(cov, cfg)
        cross = math.sqrt(brute.J_tt * brute.J_pp)
        worst = max(
            worst,
            _relative(blocks.J_tt, brute.J_tt),
            _relative(blocks.J_pp, brute.J_pp),
            abs(blocks.J_tp - brute.J_tp) / cross,
            _relative(blocks.J_pa_tilde, brute.J_pa_tilde),
            float(np.max(np.abs(blocks.j_pa - brute.j_pa)))
            / math.sqrt(brute.J_pp * brute.J_aa[0, 0]),
        )
    yield OracleCheck("fim", "brute-force-trace", worst, 1e-8, cases)


def crlb_suite(seed: int, quick: bool) -> Iterator[OracleCheck]:
    rng = rng_stream(seed, "oracle", "crlb")
    cases = 20 if quick else 100
    paths = inverse = invariance = 0.0
    for _ in range(cases):
        cfg = _random_system(rng)
        ls = draw_large_scale(cfg, rng)
        scheme = Scheme.MRT if rng.uniform() < 0.5 else Scheme.ZF
        alloc = _random_allocation(rng, cfg, ls, scheme)
        blocks = fisher_blocks_general(ls, scheme, alloc, cfg, cfg.target)
        general = crlb_general(blocks)
        simple = crlb_simplified(ls, scheme, alloc, cfg)
        paths = max(
            paths,
            _relative(simple.crlb_theta, general.crlb_theta),
            _relative(simple.crlb_phi, general.crlb_phi),
        )
        explicit = np.diag(np.linalg.inv(blocks.reduced()))
        inverse = max(
            inverse,
            _relative(general.crlb_theta, float(explicit[0])),
            _relative(general.crlb_phi, float(explicit[1])),
        )

        if ls.K > 1:
            # Move sensing gain between the first two users, keeping xi_bf^T gamma.
            w = xi_bf(ls, scheme, cfg.n_t)
            shift = 0.5 * alloc.gamma[0]
            gamma = alloc.gamma.copy()
            gamma[0] -= shift
            gamma[1] += shift * w[0] / w[1]
            moved = crlb_simplified(ls, scheme, replace(alloc, gamma=gamma), cfg)
            invariance = max(
                invariance,
                _relative(moved.crlb_theta, simple.crlb_theta),
                _relative(moved.crlb_phi, simple.crlb_phi),
            )
    yield OracleCheck("crlb", "simplified-vs-general", paths, 1e-10, cases)
    yield OracleCheck("crlb", "explicit-inverse", inverse, 1e-12, cases)
    yield OracleCheck("crlb", "gain-redistribution", invariance, 1e-12, cases)
    yield OracleCheck(
        "crlb", "array-size-trend", float(_array_size_violations(seed)), 0.0, 4
    )


def _array_size_violations(seed: int) -> int:
    """Orderings broken as square UPAs grow under the equal power split."""
    history: Dict[Scheme, List[Tuple[CrlbPair, np.ndarray]]] = {s: [] for s in Scheme}
    for n_t in (25, 100, 225, 400):
        cfg = _desk_system(n_t, 4, seed)
        ls = draw_large_scale(cfg, rng_stream(seed, "oracle", "decay"))
        for scheme in Scheme:
            alloc = equal_power_allocation(ls, scheme, cfg.n_t, cfg.P_t)
            history[scheme].append(
                (
                    crlb_simplified(ls, scheme, alloc, cfg),
                    closed_form_sinr(ls, scheme, alloc, cfg),
                )
            )
    violations = 0
    for points in history.values():
        for (before, before_sinr), (after, after_sinr) in zip(points, points[1:]):
            violations += int(after.crlb_theta >= before.crlb_theta)
            violations += int(after.crlb_phi >= before.crlb_phi)
            violations += int(np.sum(after_sinr <= before_sinr))
    return violations


def power_suite(seed: int, quick: bool) -> Iterator[OracleCheck]:
    draws = 2000 if quick else 10_000
    tolerance = 0.03 if quick else 0.01
    cfg = _desk_system(64, 4, seed)
    rng = rng_stream(seed, "oracle", "power")
    ls = draw_large_scale(cfg, rng)
    for scheme in Scheme:
        alloc = _random_allocation(rng, cfg, ls, scheme)
        energy = CompensatedSum()
        for index, size in enumerate(chunk_sizes(draws)):
            chunk_rng = rng_stream(seed, "oracle", "power", scheme.value, index)
            real = draw_small_scale(cfg, ls, chunk_rng, draws=size)
            precoders = build_precoder(real, scheme, alloc, cfg.target, cfg.tx)
            energy.add(np.array(transmit_power(precoders).sum()))
        simulated = float(energy.total) / draws
        expected = total_power(ls, scheme, alloc, cfg.n_t)
        yield OracleCheck(
            "power",
            f"transmit-power-{scheme.value}",
            _relative(simulated, expected),
            tolerance,
            draws,
        )


def rate_suite(seed: int, quick: bool) -> Iterator[OracleCheck]:
    draws = 2000 if quick else 10_000
    tolerance = 0.06 if quick else 0.03
    for n_t, K in ((64, 4), (100, 8)):
        cfg = _desk_system(n_t, K, seed)
        ls = draw_large_scale(cfg, rng_stream(seed, "oracle", "rate", n_t))
        for scheme in Scheme:
            alloc = equal_power_allocation(ls, scheme, cfg.n_t, cfg.P_t)
            closed = closed_form_rate(ls, scheme, alloc, cfg)
            simulated = monte_carlo_rate(
                ls, scheme, alloc, cfg, draws, stream=("oracle", n_t)
            )
            worst = float(np.max(np.abs(simulated.sinr - closed.sinr) / closed.sinr))
            yield OracleCheck(
                "rate", f"sinr-{scheme.value}-{n_t}x{K}", worst, tolerance, draws
            )


def _random_program(rng: np.random.Generator) -> SocProgram:
    n = int(rng.integers(2, 11))
    center = rng.standard_normal(n)
    radius = float(rng.uniform(0.5, 3.0))
    cones = [SecondOrderCone(a=np.eye(n), b=-center, c=np.zeros(n), d=radius)]
    rows = int(rng.integers(1, 4))
    a = rng.standard_normal((rows, n))
    c = rng.standard_normal(n)
    # Contains the centre with some room to spare.
    d = float(np.linalg.norm(a @ center) + rng.uniform(0.5, 2.0) - c @ center)
    cones.append(SecondOrderCone(a=a, b=np.zeros(rows), c=c, d=d))
    linear = []
    for _ in range(int(rng.integers(0, 4))):
        g = rng.standard_normal(n)
        room = float(rng.uniform(0.1, 1.0))
        linear.append(LinearInequality(g=g, h=float(g @ center) + room))
    return SocProgram(objective=rng.standard_normal(n), cones=cones, linear=linear)


def _optimizer_oracle(prog: SocProgram, start: np.ndarray) -> float:
    """Best feasible maximum found by SLSQP from a few starts near ``start``."""
    constraints = [
        {
            "type": "ineq",
            "fun": (lambda x, cone=cone: cone.bound(x) - cone.norm(x)),
        }
        for cone in prog.cones
    ]
    constraints += [
        {"type": "ineq", "fun": (lambda x, lin=lin: -lin.residual(x))}
        for lin in prog.linear
    ]
    best = -math.inf
    for offset in (0.0, 0.1, -0.1):
        result = minimize(
            lambda x: -prog.value(x),
            start + offset,
            method="SLSQP",
            constraints=constraints,
            options={"ftol": 1e-14, "maxiter": 1000},
        )
        if prog.max_violation(result.x) <= 1e-9:
            best = max(best, -float(result.fun))
    return best


def socp_suite(seed: int, quick: bool) -> Iterator[OracleCheck]:
    rng = rng_stream(seed, "oracle", "socp")
    cases = 10 if quick else 50
    objective = kkt = 0.0
    for _ in range(cases):
        prog = _random_program(rng)
        start = -prog.cones[0].b
        result = solve(prog, start)
        reference = _optimizer_oracle(prog, start)
        if math.isfinite(reference):
            objective = max(
                objective, abs(result.obj - reference) / max(1.0, abs(reference))
            )
        kkt = max(kkt, float(result.kkt_residual))
    yield OracleCheck("socp", "optimizer-objective", objective, 1e-5, cases)
    yield OracleCheck("socp", "kkt-residual", kkt, 1e-7, cases)


def sca_suite(seed: int, quick: bool) -> Iterator[OracleCheck]:
    n_t, K = (36, 4) if quick else (225, 12)
    cfg = SystemConfig(tx=UpaSpec.square(n_t), K=K, seed=seed)
    rng = rng_stream(seed, "oracle", "sca")
    ls = draw_large_scale(cfg, rng)
    scheme = Scheme.ZF
    base = equal_power_allocation(ls, scheme, cfg.n_t, cfg.P_t)
    reference = crlb_simplified(ls, scheme, base, cfg)
    limits = (reference.crlb_theta, reference.crlb_phi)

    points = 200 if quick else 1000
    cones = crlb_soc_constraints(ls, scheme, cfg, limits)
    disagreements = 0
    for _ in range(points):
        alloc = _random_allocation(rng, cfg, ls, scheme)
        x = np.append(alloc.gamma, alloc.rho)
        in_cones = all(cone.contains(x) for cone in cones)
        try:
            pair = crlb_simplified(ls, scheme, alloc, cfg)
            direct = pair.crlb_theta <= limits[0] and pair.crlb_phi <= limits[1]
        except EstimationImpossibleError:
            direct = False
        disagreements += int(in_cones != direct)
    yield OracleCheck("sca", "cone-equivalence", float(disagreements), 0.0, points)

    coeffs = surrogate_coefficients(ls, scheme, cfg, base)
    tangency = float(
        np.max(
            np.abs(
                surrogate_rate(coeffs, ls, base, cfg)
                - closed_form_rate(ls, scheme, base, cfg).per_user_rate
            )
        )
    )
    excess = 0.0
    for _ in range(points):
        near = PowerAllocation(
            gamma=base.gamma * rng.uniform(0.5, 1.5, K),
            rho=base.rho * float(rng.uniform(0.5, 1.5)),
        )
        gap = surrogate_rate(coeffs, ls, near, cfg) - closed_form_rate(
            ls, scheme, near, cfg
        ).per_user_rate
        excess = max(excess, float(np.max(gap)))
    yield OracleCheck("sca", "surrogate-tangency", tangency, 1e-10)
    yield OracleCheck("sca", "surrogate-domination", excess, 1e-12, points)

    sca = ScaConfig.from_db(-35.0)
    finals = []
    for policy in InitPolicy:
        trace = run_sca(ls, scheme, cfg, replace(sca, init_policy=policy))
        values = trace.objectives
        drops = values[:-1] - values[1:] - 1e-9 * np.maximum(1.0, np.abs(values[:-1]))
        yield OracleCheck(
            "sca", f"monotone-{policy.value}", float(max(drops.max(), 0.0)), 0.0
        )
        yield OracleCheck(
            "sca", f"iterations-{policy.value}", float(trace.n_iterations), 15.0
        )
        final = trace.allocation
        pair = crlb_simplified(ls, scheme, final, cfg)
        violation = max(
            total_power(ls, scheme, final, cfg.n_t) / cfg.P_t - 1.0,
            pair.crlb_theta / sca.crlb_theta_max - 1.0,
            pair.crlb_phi / sca.crlb_phi_max - 1.0,
            0.0,
        )
        yield OracleCheck("sca", f"feasible-{policy.value}", violation, 1e-8)
        finals.append(trace.objective)
    yield OracleCheck("sca", "policies-agree", _relative(finals[0], finals[1]), 0.01)


def mle_suite(seed: int, quick: bool) -> Iterator[OracleCheck]:
    trials = 20 if quick else 200
    cfg = SystemConfig(tx=UpaSpec(5, 5), rx=UpaSpec(5, 5), K=8, seed=seed)
    ls = draw_large_scale(cfg, rng_stream(seed, "oracle", "mle"))
    scheme = Scheme.MRT
    alloc = equal_power_allocation(ls, scheme, cfg.n_t, cfg.P_t)
    points = mle_mse_sweep(ls, scheme, alloc, cfg, (0.0, 5.0, 10.0, 15.0, 20.0), trials)
    # Sampling allowance of three standard errors on a chi-square mean.
    allowance = -10.0 * math.log10(max(1.0 - 3.0 / math.sqrt(trials), 1e-3))
    below = above = 0.0
    for point in points:
        for mse, bound in (
            (point.mse_theta, point.crlb.crlb_theta),
            (point.mse_phi, point.crlb.crlb_phi),
        ):
            ratio_db = 10.0 * math.log10(max(mse, 1e-300) / bound)
            below = max(below, -ratio_db)
            if point.snr_db >= 10.0:
                above = max(above, ratio_db)
    yield OracleCheck("mle", "mse-above-crlb-db", below, allowance, trials)
    yield OracleCheck("mle", "mse-near-crlb-db", above, 3.0, trials)


SUITES: Dict[str, Callable[[int, bool], Iterator[OracleCheck]]] = {
    "steering": steering_suite,
    "fim": fim_suite,
    "crlb": crlb_suite,
    "power": power_suite,
    "rate": rate_suite,
    "socp": socp_suite,
    "sca": sca_suite,
    "mle": mle_suite,
}


def run_suite(name: str, seed: int = 0, quick: bool = False) -> List[OracleCheck]:
    """Run one suite by name, or every suite for ``all``."""
    if name == "all":
        return [check for suite in SUITES for check in run_suite(suite, seed, quick)]
    if name not in SUITES:
        raise DomainError(
            f"unknown oracle suite {name!r}, expected one of: all, {', '.join(SUITES)}"
        )
    checks = list(SUITES[name](seed, quick))
    for check in checks:
        logger.info("%s", check)
    return checks
