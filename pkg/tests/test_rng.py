import math

import numpy as np
import pytest

from roughflow.rng import BrownianLattice, coarsen_increments, stream


class TestBrownianLattice:
    def test_random_access_matches_bulk(self):
        lat = BrownianLattice(0.01, 50, 3, seed=123, n_paths=4)
        bulk = lat.path_increments(2)
        for k in (0, 7, 49):
            np.testing.assert_array_equal(lat.increments(2, k), bulk[k])
        np.testing.assert_array_equal(lat.path_increments(2, 10, 20), bulk[10:20])

    def test_regeneration_is_bitwise(self):
        a = BrownianLattice(0.1, 20, 2, 99, 3).batch_increments([0, 1, 2])
        b = BrownianLattice(0.1, 20, 2, 99, 3).batch_increments([0, 1, 2])
        assert a.tobytes() == b.tobytes()

    def test_streams_differ(self):
        lat = BrownianLattice(0.1, 20, 2, 99, 3)
        assert not np.array_equal(lat.path_increments(0), lat.path_increments(1))
        other = BrownianLattice(0.1, 20, 2, 100, 3)
        assert not np.array_equal(lat.path_increments(0), other.path_increments(0))

    @pytest.mark.parametrize("d", [1, 2, 5])
    def test_moments(self, d):
        dt = 0.25
        lat = BrownianLattice(dt, 2000, d, seed=7, n_paths=60)
        x = lat.batch_increments(range(60)).reshape(-1, d)
        n = x.shape[0]
        assert n >= 1e5
        se = math.sqrt(dt / n)
        assert np.all(np.abs(x.mean(axis=0)) < 4 * se)
        np.testing.assert_allclose(x.var(axis=0), dt, rtol=0.01)
        cov = np.cov(x.T).reshape(d, d)
        off = cov - np.diag(np.diag(cov))
        assert np.all(np.abs(off) < 4 * dt / math.sqrt(n))

    def test_bounds(self):
        lat = BrownianLattice(0.1, 5, 1, 0, 2)
        with pytest.raises(IndexError):
            lat.increments(2, 0)
        with pytest.raises(IndexError):
            lat.increments(0, 5)

    def test_coarsen(self):
        lat = BrownianLattice(0.1, 8, 2, 0, 1)
        dB = lat.path_increments(0)
        c = coarsen_increments(dB, 4)
        np.testing.assert_allclose(c.sum(axis=0), dB.sum(axis=0))
        assert c.shape == (2, 2)


def test_stream_reproducible():
    assert stream(5, 3).random() == stream(5, 3).random()
    assert stream(5, 3).random() != stream(5, 4).random()
