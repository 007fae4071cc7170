import math
import warnings

import numpy as np
import pytest

from deadline_coding.learners import (
    TsState,
    UcbState,
    genie_belief,
    ts_belief,
    ts_init,
    ts_update,
    ucb_belief,
    ucb_index,
    ucb_init,
    ucb_update,
)


class TestUcb:
    def test_init_degenerate(self):
        assert ucb_init(4.0, 1.0, np.random.default_rng(0)) == UcbState(1, 1, 4.0)
        assert ucb_init(4.0, 0.0, np.random.default_rng(0)) == UcbState(1, 0, 4.0)

    def test_init_frequency(self):
        rng = np.random.default_rng(1)
        sums = [ucb_init(4.0, 0.3, rng).sum for _ in range(100_000)]
        assert abs(np.mean(sums) - 0.3) < 0.01

    def test_beta_checks(self):
        with pytest.raises(ValueError):
            ucb_init(2.5, 0.5, np.random.default_rng(0))
        with pytest.warns(UserWarning):
            ucb_init(3.5, 0.5, np.random.default_rng(0))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            ucb_init(4.0, 0.5, np.random.default_rng(0))

    def test_index(self):
        s = UcbState(z=2, sum=1, beta=4.0)
        assert ucb_belief(s, 1) == 0.5
        n = 7
        assert ucb_index(s, n) == pytest.approx(0.5 + math.sqrt(4 * math.log(7) / 4), abs=1e-15)
        assert ucb_belief(s, n) == 1.0
        assert ucb_belief(UcbState(10**6, 300_000, 4.0), 100) == pytest.approx(
            0.3 + math.sqrt(4 * math.log(100) / 2e6), abs=1e-15
        )
        with pytest.raises(ValueError):
            ucb_index(s, 0)

    def test_optimism_and_monotonicity(self):
        for n in (2, 10, 1000):
            bounds = [ucb_index(UcbState(z, z // 4, 4.0), n) for z in (4, 40, 400, 4000)]
            assert all(b > 0.25 for b in bounds)
            assert all(a >= b for a, b in zip(bounds, bounds[1:]))

    def test_update(self):
        s = UcbState(1, 1, 4.0)
        assert ucb_update(s, []) is s
        assert ucb_update(s, np.array([1, 0, 1], dtype=np.uint8)) == UcbState(4, 3, 4.0)


class TestTs:
    def test_fresh_is_uniform(self):
        rng = np.random.default_rng(2)
        draws = [ts_belief(ts_init(), rng) for _ in range(100_000)]
        assert abs(np.mean(draws) - 0.5) < 0.005

    def test_posterior_orientation(self):
        s = ts_update(ts_init(), [1] * 10)
        assert s == TsState(1.0, 11.0)
        rng = np.random.default_rng(3)
        draws = [ts_belief(s, rng) for _ in range(50_000)]
        assert abs(np.mean(draws) - 11 / 12) < 0.01

    def test_counts(self):
        s = ts_update(ts_init(), [1, 0, 0, 1, 1])
        assert s == TsState(1.0 + 2, 1.0 + 3)
        assert ts_update(s, []) is s

    def test_reproducible(self):
        a = [ts_belief(TsState(3.0, 5.0), np.random.default_rng(7)) for _ in range(3)]
        assert a[0] == a[1] == a[2]


def test_genie():
    assert genie_belief(0.7) == 0.7
