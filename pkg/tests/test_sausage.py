import math

import numpy as np
import pytest

from wickbench.sausage import (circle_average, h_m, mass_change_check, renorm_loctime,
                               sample_coarse_bm, sample_killed_bm, sausage_area,
                               sausage_area_probe, sausage_ratio_oracle, two_point_check,
                               zero_constant_mass, _two_point_theory)
from wickbench.special import massive_green

M0 = zero_constant_mass()


def test_zero_constant_mass():
    # G_M(r) = -(1/pi) log r + o(1) exactly when M = 2 e^{-2 gamma}
    r = 1e-6
    assert massive_green(M0, r) + math.log(r) / math.pi == pytest.approx(0.0, abs=1e-9)


def test_lifetime_and_endpoint_moments():
    M = 2.0
    paths = [sample_coarse_bm(M, 1e-2, 1, i) for i in range(1000)]
    z = np.array([p.lifetime for p in paths])
    end = np.array([np.sum(p.points[-1] ** 2) for p in paths])
    assert abs(z.mean() - 1 / M) < 4 * z.std() / math.sqrt(1000)
    assert abs(end.mean() - 2 / M) < 4 * end.std() / math.sqrt(1000)
    assert all(p.weights().sum() == pytest.approx(p.lifetime) for p in paths[:20])


def test_paths_reproducible():
    a = sample_coarse_bm(1.0, 1e-3, 5, 7)
    b = sample_coarse_bm(1.0, 1e-3, 5, 7)
    assert np.array_equal(a.points, b.points) and a.key == b.key
    assert not np.array_equal(sample_coarse_bm(1.0, 1e-3, 5, 8).points[1], a.points[1])
    assert sausage_area_probe(a, 1e-2, 50).area == sausage_area_probe(b, 1e-2, 50).area


def test_fine_path_step_limit():
    with pytest.raises(ValueError):
        sample_killed_bm(1.0, 1e-4, 0, 0)
    p = sample_killed_bm(100.0, 1e-7, 0, 0)
    assert p.steps.max() <= 1e-7 * (1 + 1e-9)


def test_single_point_area():
    from wickbench.sausage import BrownianPath
    p = BrownianPath(1.0, np.zeros((2, 2)), 1e-9, (0, 0))
    eps = 0.1
    assert sausage_area(p, eps, eps / 16) == pytest.approx(math.pi * eps * eps, rel=0.03)
    with pytest.raises(ValueError):
        sausage_area(p, eps, eps / 4)


def test_area_monotone_in_radius():
    p = sample_coarse_bm(1.0, 1e-3, 2, 0)
    areas = [sausage_area(p, e) for e in (0.02, 0.04, 0.08)]
    assert areas[0] < areas[1] < areas[2]


def test_probe_area_matches_raster():
    p = sample_killed_bm(1.0, 1e-5, 3, 0)
    eps = 0.05
    raster = sausage_area(p, eps, eps / 16)
    probe = sausage_area_probe(p, eps, 4000)
    assert abs(probe.area - raster) < 4 * probe.se + 0.02 * raster


def test_circle_average_far_and_mean():
    p = sample_coarse_bm(1.0, 1e-3, 4, 0)
    assert circle_average(p, (1e3, 0.0), 0.1) == 0.0
    r = 0.2
    vals = np.array([circle_average(sample_coarse_bm(1.0, 1e-4, 6, i), (0.0, 0.0), r)
                     for i in range(400)])
    assert abs(vals.mean() - h_m(1.0, r)) < 4 * vals.std(ddof=1) / math.sqrt(len(vals))
    with pytest.raises(ValueError):
        circle_average(p, (0, 0), 0.0)


def test_renormalised_local_time():
    p = sample_coarse_bm(1.0, 1e-3, 7, 0)
    grid = np.array([[0.0, 0.0], [0.1, 0.1], [50.0, 50.0]])
    from wickbench.sausage import occupation_grid
    theta = occupation_grid(p, grid, 0.1)
    assert np.allclose(renorm_loctime(p, 1, 0.1, grid, 1.0), theta)
    far = renorm_loctime(p, 2, 0.1, grid, 1.0)[2]
    # no constant term: unvisited points stay at zero for every order
    assert theta[2] == 0.0 and far == 0.0
    with pytest.raises(ValueError):
        renorm_loctime(p, 0, 0.1, grid, 1.0)


def test_two_point_theory_symmetric_and_decaying():
    a = _two_point_theory(1.0, (0.3, 0.0), (0.0, 0.4), 0.05)
    b = _two_point_theory(1.0, (0.0, 0.4), (0.3, 0.0), 0.05)
    assert a == pytest.approx(b, rel=1e-12)
    far = _two_point_theory(1.0, (0.3, 0.0), (2.0, 0.0), 0.05)
    assert 0 < far < a


def test_two_point_small():
    res = two_point_check(10.0, [[(0.1, 0.0), (0.0, 0.1)]], 200, 1e-6, cell=0.06, seed=1)
    assert np.all(np.abs(res.z_scores) < 4.5)
    with pytest.raises(ValueError):
        two_point_check(1.0, [[(0.1, 0.0), (0.1, 0.0)]], 2, 1e-5)


def test_mass_change_identity():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 5, 100)
    assert np.all(mass_change_check(x, 0.7, 0.7, 3) == 0)
    for n in range(1, 5):
        r = mass_change_check(x, rng.uniform(0, 2, 100), rng.uniform(0, 2, 100), n)
        assert r.max() <= 1e-12
    with pytest.raises(ValueError):
        mass_change_check(x, 1.0, 1.0, 0)


def test_ratio_oracle_frozen():
    # independent quadrature, frozen at the zero-constant mass
    assert sausage_ratio_oracle(M0, 1e-2) == pytest.approx(1.1461, abs=1e-3)
    assert sausage_ratio_oracle(M0, 1e-3) == pytest.approx(1.08625, abs=1e-3)
