import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wickbench import special
from wickbench.expansion import (EpsGrid, collar_divergence, expectation_check, germ_limit_check,
                                 log_slope, minkowski_leading, multiscale_psi, probe_table,
                                 psi_prefactor, residual_report, second_moment_leading)
from wickbench.lattice import build_domain, build_zoom_disk


@pytest.fixture(scope="module")
def zoom():
    return build_zoom_disk(1.0, 8, 6.0)


@pytest.fixture(scope="module")
def ztable(zoom):
    return probe_table(zoom, 1.0, 300, seed=3, chunk=100)


@pytest.fixture(scope="module")
def disk8():
    return build_domain("disk", 1.0, 1 / 8)


@pytest.fixture(scope="module")
def utable(disk8):
    return probe_table(disk8, 1.0, 200, seed=4, chunk=100)


def test_eps_grid():
    g = EpsGrid.from_t([1, 2])
    assert np.allclose(g.t, [1, 2])
    assert np.allclose(g.loge, [2 * math.pi, 4 * math.pi])
    assert len(EpsGrid.default()) == 5
    with pytest.raises(ValueError):
        EpsGrid((0.1, 0.2))
    with pytest.raises(ValueError):
        EpsGrid((1.5,))


def test_log_slope_exact():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    s, se = log_slope(x, 3 * x ** 1.5)
    assert s == pytest.approx(1.5) and se < 1e-12


def test_hit_probability_decreases(ztable):
    grid = EpsGrid.from_t([1, 2, 3, 4, 5])
    rep = expectation_check(ztable, 1.0, grid, N_trunc=2, mesh_tol=0.05)
    p = [r["p_emp"] for r in rep.rows]
    assert all(b <= a for a, b in zip(p, p[1:]))
    assert all(r["pass_mc"] for r in rep.rows)
    with pytest.raises(ValueError):
        expectation_check(ztable, 1.0, grid, N_trunc=5)


def test_expectation_rejects_area_tables(utable):
    with pytest.raises(ValueError):
        expectation_check(utable, 1.0, EpsGrid.from_t([1]))


def test_point_probe_counts_A_below_green(ztable):
    G = float(ztable.green[0])
    lo = ztable.exceed(G - 1e-9)[:, 0]
    assert np.all(lo[ztable.in_A[:, 0]])
    assert not ztable.exceed(G + 1)[:, 0].any()


def test_first_multiscale_order_is_rescaled_minkowski(zoom, ztable):
    grid = EpsGrid.from_t([2, 3])
    mk = minkowski_leading(ztable, 1.0, grid, zoom)
    for row in mk.rows:
        psi = multiscale_psi(ztable, row["loge_over_2pi"], (1,), 0)
        assert psi.mass == pytest.approx(row["rescaled"], rel=1e-12)
    assert len(mk.summary["ratios"]) == 1


def test_psi_prefactor_values():
    assert psi_prefactor(0, 4.0) == pytest.approx(1.0)
    assert psi_prefactor(1, 1.0) == pytest.approx(-2 * 1.5 / (2 * math.pi))


def test_multiscale_argument_checks(ztable):
    with pytest.raises(ValueError):
        multiscale_psi(ztable, 2.0, (1, 2), 0)
    with pytest.raises(ValueError):
        multiscale_psi(ztable, 2.0, (), -1)


def test_collar_k0_is_flat_above_green(ztable):
    rep = collar_divergence(ztable, [0, 1], [8.0, 10.0, 12.0], blocks=5)
    assert abs(rep.slopes["k0"]) < 1e-12
    assert abs(rep.slopes["k1"]) < 1e-12


def test_collar_curve_nondecreasing(ztable):
    rep = collar_divergence(ztable, [1], [0.5, 1.0, 2.0, 4.0], blocks=5)
    vals = [r["integral"] for r in rep.rows]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert rep.slopes["k1_se"] >= 0


def test_residual_norms_nonnegative(disk8, utable):
    psi = probe_table(disk8, 1.0, 200, seed=5, chunk=100)
    rep = residual_report(disk8, utable, psi, EpsGrid.from_t([0.5, 1.0]), 1, 0.5)
    assert all(r["resid_norm"] >= 0 for r in rep.rows)
    with pytest.raises(ValueError):
        residual_report(disk8, utable, psi, EpsGrid.from_t([0.5]), 2, 0.5)


def test_second_moment_positive(disk8, utable):
    f = np.ones(len(utable.probes))
    rep = second_moment_leading(utable, f, f, EpsGrid.from_t([0.05, 0.1]))
    assert all(r["second_moment"] > 0 for r in rep.rows)
    assert rep.rows[0]["psi_pred"] > 0


def test_mass_proxy_mean_on_uniform(disk8, utable):
    rep = minkowski_leading(utable, 1.0, EpsGrid.from_t([0.05, 0.1]), disk8)
    s = rep.summary
    assert abs(s["mass_proxy"] - s["mass_target"]) < 4 * s["mass_proxy_se"]


@given(st.floats(0.01, 5.0), st.sampled_from([1e-2, 1e-3, 1e-4]))
def test_germ_limit_ratio_tends_to_one(V, gamma):
    r = germ_limit_check([V], gamma, 2)[0]
    assert abs(r - 1) <= 1.5 * gamma ** 2 * V + 1e-12
    with pytest.raises(ValueError):
        germ_limit_check([V], gamma, 3)


def test_series_closed_form_agree_at_large_t():
    for t in (4.0, 8.0, 16.0):
        closed = special.hitting_tail_t0(1.0, t)
        assert abs(special.series_p_hit(1.0, t, 2) - closed) <= abs(special.series_term(1.0, t, 3))


def test_shallow_graph_gives_nan_ratio(zoom, ztable):
    rep = minkowski_leading(ztable, 1.0, EpsGrid.from_t([7.0, 8.0]), zoom)
    assert math.isnan(rep.summary["ratios"][0])
