"""Acceptance criteria at full scale, one PASS/FAIL line per criterion.

Each experiment runs once per session with its shipped defaults and seed 0.
Bounds are pinned here as well, so a loosened config cannot turn a criterion
green. The lines are printed in the terminal summary.
"""
import json
from pathlib import Path

import pytest

from wickbench import cli, config

from conftest import ACCEPTANCE_LINES

_RUNS: dict = {}


@pytest.fixture(scope="session")
def results(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")

    def get(exp):
        if exp not in _RUNS:
            out = root / exp
            code = cli.run(exp, None, seed=0, out=str(out))
            res = json.loads((out / "results.json").read_text())
            _RUNS[exp] = (code, {c["tag"]: c for c in res["criteria"]}, out)
        return _RUNS[exp]
    return get


def _verdict(number, title, crits, pinned):
    ok = True
    parts = []
    for tag, bound in pinned.items():
        c = crits[tag]
        good = c["pass"] and (bound is None or c["bound"] == bound)
        ok &= good
        v = c["value"]
        parts.append(f"{tag}={v:.4g}" if isinstance(v, float) else f"{tag}={v}")
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}  {title}: "
                            + ", ".join(parts))
    failed = [t for t in pinned if not crits[t]["pass"]]
    assert ok, f"failing: {failed or 'bound mismatch'}"


def test_c01_exact_identities(results):
    _, crits, _ = results("identities")
    exact = {t: None for t in crits
             if t.startswith(("identity.", "umbral.", "nullspace."))}
    for kind in ("hermite", "laguerre"):
        for N in (4, 6, 8):
            assert f"nullspace.{kind}.N{N}" in exact
    exact["identities.runtime"] = 10.0
    _verdict(1, "exact identity suite", crits, exact)


def test_c02_series_vs_erf(results):
    _, crits, _ = results("identities")
    _verdict(2, "hitting series vs erf", crits, {"special.series_vs_erf": 1e-12})


def test_c03_bessel(results):
    _, crits, _ = results("identities")
    _verdict(3, "Bessel and potential", crits,
             {"special.k0_at_1": 1e-9, "special.potential_1.5_at_0": 1e-10,
              "special.potential_0.5_slope": [-1.05, -0.95]})


def test_c04_wick_covariance(results):
    _, crits, _ = results("gff-cov")
    _verdict(4, "Wick covariance", crits,
             {"wick.cov.order1": 19, "wick.cov.order2": 19, "wick.cov.order3": 19,
              "wick.cross_order": 4.0, "wick.runtime": 180.0})


def test_c05_mean_measure(results):
    _, crits, _ = results("fps-law")
    _verdict(5, "FPS mean measure", crits, {"fps.mean_measure": 3.0})


def test_c06_conformal_radius_law(results):
    _, crits, _ = results("fps-law")
    _verdict(6, "FPS conformal radius law", crits,
             {"fps.cr_law_ks": 0.08, "fps.cr_law_ks_refines": 2})


def test_c07_expectation(results):
    _, crits, _ = results("expansion")
    _verdict(7, "expectation expansion", crits,
             {"expansion.expectation_mc": 1.0, "expansion.series_N2": 1.0})


def test_c08_minkowski(results):
    _, crits, _ = results("expansion")
    _verdict(8, "Minkowski leading order", crits,
             {"expansion.minkowski_ratios": [0.9, 1.1], "expansion.minkowski_mass": 0.1})


def test_c09_multiscale(results):
    _, crits, _ = results("multiscale")
    _verdict(9, "multi-scale psi3", crits,
             {"multiscale.alpha_agreement": 5.0, "multiscale.psi3_mass": 4.0})


def test_c10_collar(results):
    _, crits, _ = results("collar")
    _verdict(10, "collar divergence", crits,
             {"collar.slope_k1": [0.3, 0.7], "collar.slope_k2": [1.3, 1.7]})


def test_c11_gmc(results):
    _, crits, _ = results("gmc")
    _verdict(11, "GMC germ trend", crits, {"gmc.n1_gap_shrinks": 0.8, "gmc.n2_pointwise": 0.1})


def test_c12_sausage(results):
    _, crits, _ = results("sausage")
    _verdict(12, "Wiener sausage", crits,
             {"sausage.ratio_finest": [0.85, 1.15], "sausage.ratio_trend": None,
              "sausage.two_point": 9, "sausage.mass_change": 1e-12,
              "sausage.runtime": 300.0})


DET_CONFIGS = {
    "fps-law": """experiment = "fps-law"
mass_samples = 60
ks_samples = 40
ks_seeds = 2
chunk = 7
[mass_domain]
mesh = 0.125
[ks_domain]
mesh = 0.0625
[coarse_domain]
mesh = 0.125
""",
    "expansion": """experiment = "expansion"
t_grid = [2.0, 3.0, 4.0, 5.0, 6.0]
samples = 60
chunk = 7
mass_samples = 30
[domain]
depth = 8.0
[mass_domain]
mesh = 0.125
""",
}


def test_c13_determinism(tmp_path):
    lines = []
    ok = True
    for exp, text in DET_CONFIGS.items():
        cfg = tmp_path / f"{exp}.toml"
        cfg.write_text(text)
        config.load(str(cfg), exp)
        blobs = []
        for tag, workers in (("a", 1), ("b", 1), ("c", 4)):
            out = tmp_path / f"{exp}-{tag}"
            cli.run(exp, str(cfg), seed=5, out=str(out), workers=workers)
            blobs.append((out / "results.json").read_bytes())
        same = blobs[0] == blobs[1] == blobs[2]
        ok &= same
        lines.append(f"{exp} {'identical' if same else 'DIFFERS'}")
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  criterion 13  determinism (repeat, "
                            f"workers 1 vs 4): " + ", ".join(lines))
    assert ok
