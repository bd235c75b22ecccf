from fractions import Fraction

import numpy as np
import pytest

from grainforge.errors import InvalidConfig, InvalidStep
from grainforge.schedule import build_linear_schedule


class TestBuild:
    def test_single_step(self):
        s = build_linear_schedule(1, 0.3, 0.9)
        assert s.betas.tolist() == [0.3]
        assert s.alpha_bar(1) == pytest.approx(0.7)

    def test_endpoints_inclusive(self):
        s = build_linear_schedule(250, 1e-4, 0.02)
        assert s.betas[0] == pytest.approx(1e-4)
        assert s.betas[-1] == pytest.approx(0.02)

    def test_alpha_bar_matches_high_precision_product(self):
        # oracle: exact rational product of (1 - beta_t)
        s = build_linear_schedule(250, 1e-4, 0.02)
        b1, bT = Fraction(s.betas[0]), Fraction(s.betas[-1])
        exact = Fraction(1)
        for t in range(250):
            beta = b1 + (bT - b1) * Fraction(t, 249)
            exact *= 1 - beta
        # betas come from linspace; compare at matching precision
        assert s.alpha_bar(250) == pytest.approx(float(exact), rel=1e-9)

    def test_invalid_ranges(self):
        with pytest.raises(InvalidConfig):
            build_linear_schedule(250, 1e-4, 1.0)
        with pytest.raises(InvalidConfig):
            build_linear_schedule(250, 0.0, 0.02)
        with pytest.raises(InvalidConfig):
            build_linear_schedule(250, 0.03, 0.02)
        with pytest.raises(InvalidConfig):
            build_linear_schedule(0, 1e-4, 0.02)


class TestIdentities:
    def test_alpha_beta_sum_exact(self):
        s = build_linear_schedule(100, 1e-4, 0.05)
        assert np.array_equal(s.alphas, 1.0 - s.betas)

    def test_alpha_bar_recurrence_exact(self):
        s = build_linear_schedule(100, 1e-4, 0.05)
        for t in range(2, 101):
            assert s.alpha_bar(t) == s.alpha_bar(t - 1) * s.alpha(t)

    def test_alpha_bar_strictly_decreasing(self):
        s = build_linear_schedule(250, 1e-4, 0.02)
        assert (np.diff(s.alpha_bars) < 0).all()
        assert s.alpha_bar(250) < s.alpha_bar(1)

    def test_step_bounds(self):
        s = build_linear_schedule(10, 1e-3, 0.02)
        assert s.alpha_bar(0) == 1.0
        with pytest.raises(InvalidStep):
            s.beta(0)
        with pytest.raises(InvalidStep):
            s.beta(11)
