# -*- coding: utf-8 -*-
from dataclasses import replace
from unittest import TestCase

import numpy as np

from isac_mimo.channel import (
    SystemConfig,
    draw_large_scale,
    draw_small_scale,
    large_scale_from_gains,
    mmse_variances,
    rng_stream,
    round_robin_pilots,
)
from isac_mimo.exceptions import DomainError
from isac_mimo.geometry import UpaSpec


class TestSystemConfig(TestCase):
    def test_defaults(self) -> None:
        cfg = SystemConfig()
        self.assertEqual(cfg.n_t, 225)
        self.assertEqual(cfg.n_r, 25)
        self.assertAlmostEqual(cfg.pre_log, 0.9)
        self.assertAlmostEqual(cfg.kappa, 60.0)

    def test_invalid(self) -> None:
        with self.assertRaises(DomainError):
            SystemConfig(K=0)
        with self.assertRaises(DomainError):
            SystemConfig(tau_p=100)
        with self.assertRaises(DomainError):
            SystemConfig(P_t=0.0)

    def test_sensing_snr(self) -> None:
        cfg = SystemConfig().with_sensing_snr(50.0)
        self.assertAlmostEqual(cfg.sensing_snr, 50.0)
        self.assertAlmostEqual(np.angle(cfg.alpha), np.pi / 4)
        with self.assertRaises(DomainError):
            SystemConfig().with_sensing_snr(0.0)


class TestLargeScale(TestCase):
    def test_pilots(self) -> None:
        np.testing.assert_array_equal(round_robin_pilots(5, 2), [1, 2, 1, 2, 1])

    def test_shared_pilot(self) -> None:
        beta = np.array([1.0, 1.0])
        xi, eps = mmse_variances(beta, np.array([1, 1]), 1, 10.0, 1.0)
        np.testing.assert_allclose(xi, 10.0 / 21.0, rtol=1e-15)
        np.testing.assert_allclose(xi + eps, beta)

    def test_perfect_csi_limit(self) -> None:
        cfg = SystemConfig(K=3, p_p=1e12)
        ls = large_scale_from_gains([1e-3, 2e-3, 5e-4], cfg)
        np.testing.assert_allclose(ls.xi, ls.beta, rtol=1e-6)
        self.assertTrue(np.all(ls.eps < 1e-6 * ls.beta))

    def test_bad_gains(self) -> None:
        cfg = SystemConfig(K=2)
        with self.assertRaises(DomainError):
            large_scale_from_gains([1.0], cfg)
        with self.assertRaises(DomainError):
            large_scale_from_gains([1.0, -1.0], cfg)

    def test_drop_is_deterministic(self) -> None:
        cfg = SystemConfig(K=6)
        first = draw_large_scale(cfg)
        second = draw_large_scale(cfg)
        np.testing.assert_array_equal(first.beta, second.beta)
        other = draw_large_scale(replace(cfg, seed=1))
        self.assertFalse(np.array_equal(first.beta, other.beta))

    def test_drop_invariants(self) -> None:
        cfg = SystemConfig(K=12)
        ls = draw_large_scale(cfg, rng_stream(7, "large-scale", 3))
        self.assertEqual(ls.K, 12)
        self.assertTrue(np.all(ls.xi > 0))
        self.assertTrue(np.all(ls.xi <= ls.beta))
        np.testing.assert_allclose(ls.xi + ls.eps, ls.beta, rtol=1e-12)


class TestSmallScale(TestCase):
    def setUp(self) -> None:
        self.cfg = SystemConfig(tx=UpaSpec(2, 2), K=2)
        self.ls = large_scale_from_gains([1.0, 0.5], self.cfg)

    def test_shapes(self) -> None:
        real = draw_small_scale(self.cfg, self.ls, rng_stream(0, "t"))
        self.assertEqual(real.h_hat.shape, (4, 2))
        batch = draw_small_scale(self.cfg, self.ls, rng_stream(0, "t"), draws=7)
        self.assertEqual(batch.h.shape, (7, 4, 2))
        with self.assertRaises(DomainError):
            draw_small_scale(self.cfg, self.ls, rng_stream(0, "t"), draws=0)

    def test_streams_are_reproducible(self) -> None:
        a = draw_small_scale(self.cfg, self.ls, rng_stream(3, "small-scale", 1, 2))
        b = draw_small_scale(self.cfg, self.ls, rng_stream(3, "small-scale", 1, 2))
        np.testing.assert_array_equal(a.h_hat, b.h_hat)
        c = draw_small_scale(self.cfg, self.ls, rng_stream(3, "small-scale", 2, 1))
        self.assertFalse(np.array_equal(a.h_hat, c.h_hat))

    def test_second_moments(self) -> None:
        draws = 100_000
        real = draw_small_scale(self.cfg, self.ls, rng_stream(1, "m"), draws=draws)
        estimate = np.mean(np.abs(real.h_hat) ** 2, axis=(0, 1))
        np.testing.assert_allclose(estimate, self.ls.xi, rtol=0.02)
        total = np.mean(np.abs(real.h) ** 2, axis=(0, 1))
        np.testing.assert_allclose(total, self.ls.beta, rtol=0.02)
