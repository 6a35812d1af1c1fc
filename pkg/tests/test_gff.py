import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wickbench import streams
from wickbench.gff import (eval_q, gmc_germ_field, green_entry, sample_batch, sample_gff,
                           wick_cov_check, wick_power)
from wickbench.lattice import build_domain
from wickbench.polyseq import hermite_q


@pytest.fixture(scope="module")
def disk16():
    return build_domain("disk", 1.0, 1 / 16)


@pytest.fixture(scope="module")
def fields(disk16):
    return sample_batch(disk16, 0.7, 11, range(10_000))


def test_mean_is_boundary_value(disk16, fields):
    m = fields.mean(axis=0)
    se = fields.std(axis=0, ddof=1) / math.sqrt(len(fields))
    z = disk16.center
    assert abs(m[z] - 0.7) < 3 * se[z]


def test_variance_is_green_diagonal(disk16, fields):
    rng = np.random.default_rng(5)
    verts = rng.choice(disk16.n, 10, replace=False)
    X = fields[:, verts] - 0.7
    var = (X ** 2).mean(axis=0)
    se = (X ** 2).std(axis=0, ddof=1) / math.sqrt(len(X))
    assert np.all(np.abs(var - disk16.green_diagonal[verts]) < 3.5 * se)


def test_same_stream_bit_identical(disk16):
    a = sample_gff(disk16, 1.0, 3, 17)
    b = sample_gff(disk16, 1.0, 3, 17)
    assert np.array_equal(a.values, b.values)
    batch = sample_batch(disk16, 1.0, 3, [16, 17, 18])
    assert np.array_equal(batch[1], a.values)
    assert not np.array_equal(sample_gff(disk16, 1.0, 3, 18).values, a.values)


def test_wick_power_basics(disk16, fields):
    s = sample_gff(disk16, 0.7, 11, 0)
    assert np.array_equal(wick_power(s, 1), s.values)
    z = disk16.center
    G = disk16.green_diagonal[z]
    for n in (2, 3):
        q = eval_q(hermite_q(n), fields[:, z], G)
        assert abs(q.mean() - 0.7 ** n) < 3 * q.std(ddof=1) / math.sqrt(len(q))
    with pytest.raises(ValueError):
        wick_power(s, 0)


def test_centred_second_wick_power_has_zero_mean(disk16):
    X = sample_batch(disk16, 0.0, 4, range(5000))[:, disk16.center]
    q = eval_q(hermite_q(2), X, disk16.green_diagonal[disk16.center])
    assert abs(q.mean()) < 3 * q.std(ddof=1) / math.sqrt(len(q))


def test_estimator_on_correlated_scalars():
    # E[Q2(X,1) Q2(Y,1)] = 2 rho^2 for standard normals with correlation rho
    rng = streams.stream(9, 0, streams.MISC)
    rho = 0.6
    a, b = rng.standard_normal((2, 200_000))
    X, Y = a, rho * a + math.sqrt(1 - rho * rho) * b
    prod = eval_q(hermite_q(2), X, 1.0) * eval_q(hermite_q(2), Y, 1.0)
    se = prod.std(ddof=1) / math.sqrt(len(prod))
    assert abs(prod.mean() - 2 * rho * rho) < 4 * se


def test_wick_cov_check_small(disk16):
    pairs = [(disk16.center, disk16.center + 1), (3, 40), (100, 101)]
    res = wick_cov_check(disk16, [1, 2], pairs, 20_000, seed=2, chunk=5000)
    assert np.all(np.abs(res.z_scores) < 4.5)
    assert np.all(np.abs(res.cross_z) < 4.5)
    assert res.theoretical[0, 0] == pytest.approx(green_entry(disk16, *pairs[0]))
    with pytest.raises(ValueError):
        wick_cov_check(disk16, [5], pairs, 10)


def test_wick_cov_worker_invariance(disk16):
    pairs = [(1, 2), (5, 60)]
    a = wick_cov_check(disk16, [1, 2], pairs, 900, seed=1, chunk=300, workers=1)
    b = wick_cov_check(disk16, [1, 2], pairs, 900, seed=1, chunk=300, workers=2)
    assert np.array_equal(a.empirical, b.empirical) and np.array_equal(a.se, b.se)


def test_germ_damping_and_undefined_points():
    V = np.array([5.0, 8.0, np.nan, 20.0])
    g = gmc_germ_field(V, 6.0, 1)
    assert np.all(np.abs(g[np.isfinite(V)]) < 1e-30)
    assert g[2] == 0.0
    with pytest.raises(ValueError):
        gmc_germ_field(V, 0.0, 1)


@given(st.floats(0.01, 3.0), st.floats(1e-4, 0.2))
def test_second_order_germ_tends_to_minus_v(V, gamma):
    g = gmc_germ_field([V], gamma, 2)[0]
    assert g / -V == pytest.approx((1 - gamma ** 2 * V) * math.exp(-gamma ** 2 * V / 2), rel=1e-9)
    assert abs(g / -V - 1) <= 1.5 * gamma ** 2 * V + 1e-12
