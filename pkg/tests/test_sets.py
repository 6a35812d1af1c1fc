import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wickbench.gff import FieldSample, sample_gff
from wickbench.lattice import build_domain, build_zoom_disk, green_diag
from wickbench.sets import (ClusterSet, extract_fps, extract_sign_clusters, group_generations,
                            mass_proxy, neighborhood, tilde_neighborhood)


@pytest.fixture(scope="module")
def disk8():
    return build_domain("disk", 1.0, 1 / 8)


def test_levels_at_the_extremes(disk8):
    flat = FieldSample(np.zeros(disk8.n), 1.0, (0, 0), disk8)
    assert not extract_fps(flat, 0.5).in_A.any()
    s = sample_gff(disk8, 1.0, 0, 0)
    assert extract_fps(s, -1e3).in_A.all()
    with pytest.raises(ValueError):
        extract_fps(s, 1.0)


def test_field_is_above_level_on_A(disk8):
    for k in range(20):
        f = extract_fps(sample_gff(disk8, 1.0, 1, k), 0.0)
        assert np.all(f.field_values[f.in_A] > 0)
        assert np.all(f.cut_extra[f.in_A] == 0)


def test_nested_in_level(disk8):
    s = sample_gff(disk8, 1.0, 2, 5)
    sets = [extract_fps(s, a).in_A for a in (0.5, 0.0, -0.5, -1.0)]
    for small, big in zip(sets, sets[1:]):
        assert np.all(big[small])


def test_mean_measure_identity(disk8):
    m = np.array([mass_proxy(extract_fps(sample_gff(disk8, 1.0, 3, k), 0.0)) for k in range(2000)])
    se = m.std(ddof=1) / math.sqrt(len(m))
    assert abs(m.mean() - disk8.leb) < 3 * se


def test_v_values_and_point_access(disk8):
    f = extract_fps(sample_gff(disk8, 1.0, 4, 2), 0.0)
    V = f.v_values
    assert np.isnan(V[f.in_A]).all()
    free = np.flatnonzero(~f.in_A)
    assert np.all(V[free] >= -1e-12)
    ref = disk8.green_diagonal - green_diag(disk8, f.in_A, f.cut_extra)
    assert np.allclose(V[free], ref[free])
    z = int(free[0])
    f2 = extract_fps(sample_gff(disk8, 1.0, 4, 2), 0.0)
    assert f2.v_at(z) == pytest.approx(V[z], abs=1e-12)
    if f.in_A.any():
        a = int(np.flatnonzero(f.in_A)[0])
        assert f.v_at(a) == disk8.green_diagonal[a]


def test_neighborhoods(disk8):
    f = extract_fps(sample_gff(disk8, 1.0, 5, 1), 0.0)
    one = neighborhood(f, 1.0)
    assert np.array_equal(one.mask, (f.v_values > 0) & ~f.in_A)
    assert neighborhood(f, 0.3, include_A=True).mask[f.in_A].all()
    with pytest.raises(ValueError):
        neighborhood(f, 0.0)


@given(st.floats(1e-6, 1.0), st.floats(1e-6, 1.0))
def test_neighborhoods_nested(e1, e2):
    d = build_domain("disk", 1.0, 1 / 8)
    f = extract_fps(sample_gff(d, 1.0, 6, 0), 0.0)
    lo, hi = sorted((e1, e2))
    assert np.all(neighborhood(f, hi).mask[neighborhood(f, lo).mask])


def test_tilde_neighborhood(disk8):
    f = extract_fps(sample_gff(disk8, 1.0, 7, 3), 0.0)
    V = f.v_values
    cr = disk8.conformal_radius()
    for eps in (0.5, 0.05, 1e-3):
        t = tilde_neighborhood(f, eps).mask
        manual = (V > np.log(cr / eps) / (2 * math.pi)) & ~f.in_A
        assert np.array_equal(t, manual)
    big = tilde_neighborhood(f, 10.0).mask
    assert np.array_equal(big, ~f.in_A)
    sq = build_domain("square", 1.0, 1 / 8)
    with pytest.raises(ValueError):
        tilde_neighborhood(extract_fps(sample_gff(sq, 1.0, 0, 0), 0.0), 0.1)


def test_sign_clusters_partition_and_balance(disk8):
    plus = total = 0
    for k in range(200):
        s = sample_gff(disk8, 0.0, 8, k)
        c = extract_sign_clusters(s)
        phi = s.values
        assert c.sizes().sum() == np.count_nonzero(phi)
        lab = c.labels
        assert np.all(np.sign(phi[lab >= 0]) == c.signs[lab[lab >= 0]])
        recon = sum(c.signs[i] * phi[lab == i].sum() for i in range(c.n_clusters))
        assert recon == pytest.approx(np.abs(phi).sum())
        plus += int((c.signs > 0).sum())
        total += c.n_clusters
    p = plus / total
    assert abs(p - 0.5) < 3 * math.sqrt(0.25 / total)
    with pytest.raises(ValueError):
        extract_sign_clusters(sample_gff(disk8, 1.0, 0, 0))


def test_generations_on_nested_rings():
    d = build_domain("square", 1.0, 1 / 20)
    cheb = np.max(np.abs(d.ij - 10), axis=1)
    labels = np.full(d.n, -1)
    labels[cheb == 8] = 0
    labels[cheb == 5] = 1
    labels[cheb <= 2] = 2
    c = ClusterSet(d, labels, np.array([1, -1, 1]), np.zeros(d.n_edges, bool))
    assert group_generations(c).tolist() == [0, 1, 2]


def test_generations_on_samples(disk8):
    c = extract_sign_clusters(sample_gff(build_domain("disk", 1.0, 1 / 16), 0.0, 9, 0))
    g = group_generations(c)
    assert len(g) == c.n_clusters and g.min() == 0
    boundary = np.unique(c.labels[c.domain.boundary_edges])
    assert np.all(g[boundary[boundary >= 0]] == 0)
    with pytest.raises(ValueError):
        group_generations(ClusterSet(build_zoom_disk(1, 8, 1), np.zeros(9, int), np.ones(1), None))
