# -*- coding: utf-8 -*-
import math
from typing import List
from unittest import TestCase

import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from isac_mimo.exceptions import DomainError
from isac_mimo.socp import (
    LinearInequality,
    SecondOrderCone,
    SocProgram,
    SolverSettings,
    SolveStatus,
    find_interior_point,
    kkt_residual,
    lift_reciprocal_terms,
    solve,
)


def unit_disk(n: int = 2) -> SecondOrderCone:
    return SecondOrderCone(a=np.eye(n), b=np.zeros(n), c=np.zeros(n), d=1.0)


def single_reciprocal(value: float) -> SecondOrderCone:
    """The cone t >= value / gamma over x = [gamma, t]."""
    (cone,) = lift_reciprocal_terms(
        1, [value], gamma_index=[0], epigraph_index=[1], n_vars=2
    )
    return cone


def random_program(rng: np.random.Generator, n: int = 4) -> SocProgram:
    """A bounded program with a strictly feasible origin."""
    cones = [unit_disk(n)]
    for _ in range(2):
        cones.append(
            SecondOrderCone(
                a=rng.normal(size=(2, n)),
                b=rng.normal(size=2) * 0.1,
                c=rng.normal(size=n) * 0.1,
                d=2.0,
            )
        )
    linear = [LinearInequality(g=rng.normal(size=n), h=1.0)]
    return SocProgram(objective=rng.normal(size=n), cones=cones, linear=linear)


class TestConstraints(TestCase):
    def test_cone(self) -> None:
        cone = unit_disk()
        self.assertTrue(cone.contains(np.array([0.6, 0.8])))
        self.assertFalse(cone.contains(np.array([0.8, 0.8])))
        self.assertAlmostEqual(cone.residual(np.array([3.0, 4.0])), 4.0)

    def test_shapes(self) -> None:
        with self.assertRaises(DomainError):
            SecondOrderCone(a=np.eye(2), b=np.zeros(3), c=np.zeros(2), d=0.0)
        with self.assertRaises(DomainError):
            SocProgram(objective=np.ones(3), cones=[unit_disk()])

    def test_rescaled_program(self) -> None:
        prog = SocProgram(
            objective=np.array([1.0, 2.0]),
            cones=[unit_disk()],
            linear=[LinearInequality(g=np.array([1.0, 1.0]), h=1.0)],
        )
        scale = np.array([2.0, 0.5])
        scaled = prog.rescaled(scale)
        u = np.array([0.1, 0.7])
        self.assertAlmostEqual(scaled.value(u), prog.value(scale * u))
        self.assertEqual(
            scaled.max_violation(u) <= 0, prog.max_violation(scale * u) <= 0
        )


class TestReciprocalCones(TestCase):
    def test_tight_point(self) -> None:
        cone = single_reciprocal(1.0)
        x = np.array([1.0, 1.0])
        self.assertAlmostEqual(cone.norm(x), 2.0)
        self.assertAlmostEqual(cone.bound(x), 2.0)
        self.assertFalse(cone.contains(np.array([1.0, 0.99])))

    def test_zero_coefficient(self) -> None:
        cone = single_reciprocal(0.0)
        self.assertTrue(cone.contains(np.array([3.0, 0.0])))
        self.assertFalse(cone.contains(np.array([3.0, -0.1])))

    @given(
        st.floats(min_value=1e-3, max_value=1e3),
        st.floats(min_value=1e-2, max_value=1e2),
    )
    @settings(max_examples=50, deadline=None)
    def test_minimal_epigraph(self, b: float, gamma: float) -> None:
        cone = single_reciprocal(b)
        t = b / gamma
        x = np.array([gamma, t])
        self.assertAlmostEqual(cone.residual(x), 0.0, delta=1e-10 * (gamma + t))
        self.assertTrue(cone.contains(np.array([gamma, t * (1 + 1e-6)])))
        self.assertFalse(cone.contains(np.array([gamma, t * (1 - 1e-6)])))

    def test_negative_coefficient(self) -> None:
        with self.assertRaises(DomainError):
            single_reciprocal(-1.0)

    def test_default_layout(self) -> None:
        cones = lift_reciprocal_terms(2, [1.0, 4.0])
        self.assertEqual([cone.n_vars for cone in cones], [5, 5])
        # x = [gamma_1, gamma_2, rho, t_1, t_2] with both epigraphs tight
        x = np.array([1.0, 2.0, 0.7, 1.0, 2.0])
        for cone in cones:
            self.assertAlmostEqual(cone.residual(x), 0.0, delta=1e-12)
        x[3] = 0.9
        self.assertFalse(cones[0].contains(x))
        self.assertTrue(cones[1].contains(x))

    def test_count_mismatch(self) -> None:
        with self.assertRaises(DomainError):
            lift_reciprocal_terms(3, [1.0, 4.0])


class TestKktResidual(TestCase):
    def test_disk_optimum(self) -> None:
        prog = SocProgram(objective=np.array([1.0, 1.0]), cones=[unit_disk()])
        optimum = np.full(2, math.sqrt(0.5) * (1 - 1e-12))
        self.assertLess(kkt_residual(prog, optimum), 1e-10)

    def test_interior_point(self) -> None:
        prog = SocProgram(objective=np.array([1.0, 1.0]), cones=[unit_disk()])
        self.assertAlmostEqual(kkt_residual(prog, np.zeros(2)), 1.0, places=9)
        self.assertGreater(kkt_residual(prog, np.array([0.5, 0.5])), 1e-2)

    def test_linear_optimum(self) -> None:
        prog = SocProgram(
            objective=np.array([1.0]),
            linear=[LinearInequality(g=np.array([1.0]), h=3.0)],
        )
        self.assertLess(kkt_residual(prog, np.array([3.0])), 1e-12)
        self.assertGreater(kkt_residual(prog, np.array([2.0])), 1e-2)

    def test_infeasible_point(self) -> None:
        prog = SocProgram(objective=np.array([1.0, 1.0]), cones=[unit_disk()])
        self.assertEqual(kkt_residual(prog, np.array([1.0, 1.0])), math.inf)

    def test_unconstrained(self) -> None:
        prog = SocProgram(objective=np.array([3.0, 4.0]))
        self.assertAlmostEqual(kkt_residual(prog, np.zeros(2)), 1.0)


class TestSolve(TestCase):
    def test_linear_program(self) -> None:
        prog = SocProgram(
            objective=np.array([1.0]),
            linear=[LinearInequality(g=np.array([1.0]), h=3.0)],
        )
        result = solve(prog, np.array([0.0]))
        self.assertEqual(result.status, SolveStatus.OPTIMAL)
        self.assertAlmostEqual(float(result.x_opt[0]), 3.0, places=5)
        self.assertLessEqual(result.gap, SolverSettings().gap_tol)
        self.assertLessEqual(result.kkt_residual, SolverSettings().kkt_tol)

    def test_disk(self) -> None:
        prog = SocProgram(objective=np.array([1.0, 1.0]), cones=[unit_disk()])
        result = solve(prog, np.zeros(2))
        self.assertEqual(result.status, SolveStatus.OPTIMAL)
        np.testing.assert_allclose(result.x_opt, math.sqrt(0.5), atol=1e-5)
        self.assertAlmostEqual(result.obj, math.sqrt(2.0), places=5)
        self.assertLessEqual(result.kkt_residual, SolverSettings().kkt_tol)

    def test_infeasible_start(self) -> None:
        prog = SocProgram(
            objective=np.array([-1.0, 0.0]),
            cones=[unit_disk()],
            lower_bounds=np.array([0.5, -np.inf]),
        )
        result = solve(prog, np.array([5.0, 5.0]))
        self.assertEqual(result.status, SolveStatus.OPTIMAL)
        self.assertAlmostEqual(float(result.x_opt[0]), 0.5, places=5)
        self.assertLessEqual(prog.max_violation(result.x_opt), 1e-9)

    def test_infeasible(self) -> None:
        prog = SocProgram(
            objective=np.array([1.0, 0.0]),
            cones=[unit_disk()],
            linear=[LinearInequality(g=np.array([-1.0, 0.0]), h=-2.0)],
        )
        self.assertIsNone(find_interior_point(prog, np.zeros(2), SolverSettings()))
        result = solve(prog, np.zeros(2))
        self.assertEqual(result.status, SolveStatus.INFEASIBLE)

    def test_offset(self) -> None:
        prog = SocProgram(
            objective=np.array([1.0, 1.0]), cones=[unit_disk()], offset=5.0
        )
        result = solve(prog, np.zeros(2))
        self.assertAlmostEqual(result.obj, 5.0 + math.sqrt(2.0), places=5)

    def test_start_size(self) -> None:
        prog = SocProgram(objective=np.array([1.0, 1.0]), cones=[unit_disk()])
        with self.assertRaises(DomainError):
            solve(prog, np.zeros(3))

    def test_settings(self) -> None:
        with self.assertRaises(DomainError):
            SolverSettings(gap_tol=0.0)
        with self.assertRaises(DomainError):
            SolverSettings(beta=1.5)
        with self.assertRaises(DomainError):
            SolverSettings(kkt_tol=0.0)
        self.assertAlmostEqual(SolverSettings().tightened().gap_tol, 1e-10)

    @given(
        st.lists(st.floats(min_value=-3.0, max_value=3.0), min_size=3, max_size=3),
        st.floats(min_value=0.5, max_value=4.0),
    )
    @settings(max_examples=25, deadline=None)
    def test_ball(self, direction: List[float], radius: float) -> None:
        c = np.array(direction)
        assume(np.linalg.norm(c) > 1e-2)
        center = np.array([0.3, -0.2, 0.1])
        cone = SecondOrderCone(a=np.eye(3), b=-center, c=np.zeros(3), d=radius)
        prog = SocProgram(objective=c, cones=[cone])
        result = solve(prog, center)
        expected = float(c @ center) + radius * float(np.linalg.norm(c))
        tolerance = 1e-5 * max(1.0, abs(expected))
        self.assertAlmostEqual(result.obj, expected, delta=tolerance)
        self.assertEqual(result.status, SolveStatus.OPTIMAL)
        self.assertLessEqual(result.kkt_residual, SolverSettings().kkt_tol)

    def test_optimal_results_are_certified(self) -> None:
        rng = np.random.default_rng(7)
        tol = SolverSettings().kkt_tol
        for _ in range(20):
            prog = random_program(rng)
            result = solve(prog, np.zeros(prog.n_vars))
            self.assertEqual(result.status, SolveStatus.OPTIMAL)
            self.assertLessEqual(result.kkt_residual, tol)
            self.assertLessEqual(kkt_residual(prog, result.x_opt), tol)
            self.assertLess(prog.max_violation(result.x_opt), 0.0)

    def test_large_objective(self) -> None:
        # A barrier merit of order 1e9 at the optimum.
        prog = SocProgram(objective=np.array([1e3, 1e3]), cones=[unit_disk()])
        settings = SolverSettings(gap_tol=1e-12, kkt_tol=1e-9)
        result = solve(prog, np.zeros(2), settings)
        self.assertIn(result.status, (SolveStatus.OPTIMAL, SolveStatus.STALLED))
        if result.status is SolveStatus.OPTIMAL:
            self.assertLessEqual(result.kkt_residual, settings.kkt_tol)
        else:
            self.assertGreater(result.kkt_residual, settings.kkt_tol)
        np.testing.assert_allclose(result.x_opt, math.sqrt(0.5), atol=1e-6)

    def test_boundary_start(self) -> None:
        # x = 1 is the only feasible point.
        prog = SocProgram(
            objective=np.array([1.0]),
            linear=[
                LinearInequality(g=np.array([1.0]), h=1.0),
                LinearInequality(g=np.array([-1.0]), h=-1.0),
            ],
        )
        result = solve(prog, np.array([1.0]))
        self.assertEqual(result.status, SolveStatus.STALLED)
        np.testing.assert_array_equal(result.x_opt, [1.0])
        infeasible = solve(prog, np.array([1.5]))
        self.assertEqual(infeasible.status, SolveStatus.INFEASIBLE)
