import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wickbench.lattice import (LATTICE_KAPPA, build_domain, build_zoom_disk, cr_calibration,
                               green_at, green_diag, green_table, sobolev_norm_sq, v_at, v_field)


@pytest.fixture(scope="module")
def disk16():
    return build_domain("disk", 1.0, 1 / 16)


def test_vertex_counts():
    d = build_domain("disk", 1.0, 1 / 32)
    assert abs(d.n / (math.pi * 32 ** 2) - 1) < 0.02
    assert build_domain("square", 1.0, 1 / 4).n == 9
    coarse, fine = build_domain("disk", 1.0, 1 / 16), build_domain("disk", 1.0, 1 / 32)
    assert abs(fine.n / coarse.n - 4) < 0.2
    with pytest.raises(ValueError):
        build_domain("disk", 1.0, 1.0)
    with pytest.raises(ValueError):
        build_domain("square", 1.0, 0.3)


def test_small_green_values():
    # one vertex whose four neighbours are all pinned
    sq = build_domain("square", 1.0, 1 / 4)
    rm = np.ones(sq.n, bool)
    rm[sq.center] = False
    assert green_diag(sq, rm)[sq.center] == pytest.approx(0.25, abs=1e-15)
    assert sq.green_diagonal[sq.center] == pytest.approx(3 / 8, abs=1e-14)


def test_green_symmetric_positive(disk16):
    dense = np.linalg.inv(disk16.laplacian.toarray())
    assert np.allclose(disk16.green_diagonal, np.diag(dense), atol=1e-12)
    tab = green_table(disk16)
    rng = np.random.default_rng(0)
    for i, j in rng.integers(0, disk16.n, size=(10, 2)):
        assert tab.entry(i, j) == pytest.approx(tab.entry(j, i), abs=1e-13)
        assert tab.entry(i, j) > 0


def test_v_field_empty_and_minimal_hole(disk16):
    assert np.allclose(v_field(disk16, np.zeros(disk16.n, bool)), 0)
    z = disk16.center
    A = np.ones(disk16.n, bool)
    A[z] = False
    V = v_field(disk16, A)
    assert V[z] == pytest.approx(disk16.green_diagonal[z] - 0.25)
    assert np.isnan(V[A]).all()


def test_pinned_paths_agree(disk16):
    rng = np.random.default_rng(3)
    A = rng.random(disk16.n) < 0.3
    extra = np.where(rng.random(disk16.n) < 0.1, rng.random(disk16.n), 0.0)
    gd = green_diag(disk16, A, extra)
    for z in np.flatnonzero(~A)[:15]:
        assert green_at(disk16, int(z), A, extra) == pytest.approx(gd[z], rel=1e-10)
    zoom = build_zoom_disk(1.0, 8, 4)
    B = np.zeros(zoom.n, bool)
    B[:20] = True
    full = green_diag(zoom, B)
    assert green_at(zoom, zoom.n - 1, B) == pytest.approx(full[-1], rel=1e-10)
    assert green_at(zoom, 30, B) == pytest.approx(full[30], rel=1e-10)


@given(st.integers(0, 10_000))
def test_v_monotone_in_A(seed):
    d = build_domain("disk", 1.0, 1 / 8)
    rng = np.random.default_rng(seed)
    small = rng.random(d.n) < 0.2
    big = small | (rng.random(d.n) < 0.2)
    keep = np.flatnonzero(~big)
    assert np.all(v_field(d, big)[keep] >= v_field(d, small)[keep] - 1e-12)
    if len(keep):
        assert v_at(d, int(keep[0]), big) == pytest.approx(v_field(d, big)[keep[0]], abs=1e-12)


def test_zoom_center_green():
    z = build_zoom_disk(1.0, 16, 3)
    assert z.green_diagonal[z.center] == pytest.approx((z.params["n_rings"] + 1) / 16, rel=1e-12)
    assert z.bandwidth == 16


def test_cr_calibration_refines():
    k65, s65 = cr_calibration(build_domain("disk", 1.0, 1 / 32))
    k129, s129 = cr_calibration(build_domain("disk", 1.0, 1 / 64))
    assert s129 < s65
    assert abs(k65 - k129) < 3 * s65
    assert abs(k129 - LATTICE_KAPPA) < 3 * s65


def test_cr_calibration_translation():
    # the same disk sampled with a shifted centre: kappa moves by less than the spread
    k, s = cr_calibration(build_domain("disk", 1.0, 1 / 32))
    k2, _ = cr_calibration(build_domain("disk", 1.0 + 1 / 64, 1 / 32))
    assert abs(k - k2) < max(s, 1e-3)


def test_sobolev_norm():
    d = build_domain("disk", 1.0, 1 / 8)
    assert sobolev_norm_sq(d, np.zeros(d.n), 1.5) == 0.0
    f = np.zeros(d.n)
    f[d.center] = 1.0
    h = d.mesh
    assert sobolev_norm_sq(d, f, 1.5) == pytest.approx(h ** 4 / (2 * math.pi), rel=1e-12)
    g = np.random.default_rng(1).standard_normal(d.n)
    vals = [sobolev_norm_sq(d, g, eta) for eta in (1.2, 1.5, 2.0)]
    assert vals[0] > vals[1] > vals[2] > 0
