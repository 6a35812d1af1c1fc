"""Monte Carlo checks of the half-integer-power neighbourhood expansions.

Every estimator here is driven by a table of ``V_A`` values at probe vertices,
one row per first passage set sample. On a zoom disk the only probe is the
centre, weighted by the whole area; on uniform lattices every vertex is a probe
with its own cell area.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import special
from .gff import gmc_germ_field, sample_gff
from .lattice import GridDomain, domain_from_spec, sobolev_norm_sq
from .parallel import map_chunks
from .polyseq import vandermonde_coeffs
from .sets import extract_fps, mass_proxy

__all__ = [
    "EpsGrid", "ProbeTable", "ExpansionReport", "PsiEstimate", "probe_table",
    "expectation_check", "minkowski_leading", "multiscale_psi", "psi_prefactor",
    "gmc_cross_validate", "germ_limit_check", "second_moment_leading",
    "collar_divergence", "residual_report", "log_slope",
]

TWO_PI = 2 * math.pi


@dataclass(frozen=True)
class EpsGrid:
    values: tuple

    def __post_init__(self):
        vals = tuple(float(e) for e in self.values)
        if any(not 0 < e < 1 for e in vals):
            raise ValueError("eps values must lie in (0, 1)")
        if any(b >= a for a, b in zip(vals, vals[1:])):
            raise ValueError("eps values must be strictly decreasing")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_t(cls, ts) -> "EpsGrid":
        """Grid with ``(1/2pi)|log eps| = t`` for each t."""
        return cls(tuple(math.exp(-TWO_PI * t) for t in ts))

    @classmethod
    def default(cls) -> "EpsGrid":
        return cls.from_t((4, 6, 8, 12, 16))

    @property
    def t(self) -> np.ndarray:
        return -np.log(np.array(self.values)) / TWO_PI

    @property
    def loge(self) -> np.ndarray:
        return -np.log(np.array(self.values))

    def __len__(self):
        return len(self.values)


@dataclass
class ExpansionReport:
    name: str
    rows: list
    slopes: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"name": self.name, "rows": self.rows, "slopes": self.slopes,
                "summary": self.summary, "config": self.config}

    def write_csv(self, path) -> None:
        if not self.rows:
            raise ValueError("empty report")
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(self.rows[0]))
            w.writeheader()
            w.writerows(self.rows)


@dataclass
class PsiEstimate:
    order: int
    field: np.ndarray          # mean density per probe vertex
    variance: np.ndarray       # per-vertex sample variance of the density
    totals: np.ndarray         # per-sample total mass
    probes: np.ndarray
    weights: np.ndarray

    @property
    def mass(self) -> float:
        return float(self.totals.mean())

    @property
    def mass_se(self) -> float:
        return float(self.totals.std(ddof=1) / math.sqrt(len(self.totals)))


# ---------------------------------------------------------------------------
# sample tables

@dataclass
class ProbeTable:
    """``V_A`` at probe vertices, NaN where the probe lies in A."""

    probes: np.ndarray
    weights: np.ndarray
    V: np.ndarray              # (samples, probes)
    in_A: np.ndarray           # (samples, probes) bool
    mass: np.ndarray           # mass proxy per sample
    green: np.ndarray          # G_D at the probes
    point_probe: bool          # True when probes stand for a single point

    @property
    def samples(self) -> int:
        return self.V.shape[0]

    @classmethod
    def concat(cls, tables: list) -> "ProbeTable":
        """Pool tables over the same probes (e.g. runs with different seeds)."""
        t0 = tables[0]
        return cls(t0.probes, t0.weights, np.concatenate([t.V for t in tables]),
                   np.concatenate([t.in_A for t in tables]),
                   np.concatenate([t.mass for t in tables]), t0.green, t0.point_probe)

    def exceed(self, t: float, include_A: bool | None = None) -> np.ndarray:
        """Indicator of ``V_A > t`` per sample and probe.

        A point probe lying in A means A came within the graph resolution of
        the point, i.e. ``V_A`` is at least ``G_D``; it is counted for every
        ``t`` below ``G_D``. Area probes exclude A unless asked otherwise.
        """
        if include_A is None:
            include_A = self.point_probe
        with np.errstate(invalid="ignore"):
            m = self.V > t
        if include_A:
            m = m | (self.in_A & (t < self.green))
        return m

    def areas(self, t: float, include_A: bool | None = None) -> np.ndarray:
        return self.exceed(t, include_A) @ self.weights


def _probe_chunk(start, stop, spec, v, a, seed, probe):
    dom = domain_from_spec(spec)
    verts, _ = dom.probe(probe)
    V = np.empty((stop - start, len(verts)))
    inA = np.empty((stop - start, len(verts)), dtype=bool)
    mass = np.empty(stop - start)
    for r, k in enumerate(range(start, stop)):
        fps = extract_fps(sample_gff(dom, v, seed, k), a)
        inA[r] = fps.in_A[verts]
        if len(verts) == 1:
            z = int(verts[0])
            V[r, 0] = np.nan if inA[r, 0] else fps.v_at(z)
        else:
            V[r] = fps.v_values[verts]
        mass[r] = mass_proxy(fps)
    return V, inA, mass


def probe_table(domain: GridDomain, v: float, samples: int, seed: int = 0, a: float = 0.0,
                probe: str = "auto", workers: int | None = None, chunk: int = 250,
                offset: int = 0) -> ProbeTable:
    verts, w = domain.probe(probe)
    parts = map_chunks(_probe_chunk, samples, chunk, (domain.spec, v, a, seed, probe),
                       workers, offset=offset)
    V = np.concatenate([p[0] for p in parts])
    inA = np.concatenate([p[1] for p in parts])
    mass = np.concatenate([p[2] for p in parts])
    return ProbeTable(verts, w, V, inA, mass, domain.green_diagonal[verts], len(verts) == 1)


def _mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def log_slope(x, y) -> tuple[float, float]:
    """Least-squares slope of log y on log x and its standard error."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, res, *_ = np.linalg.lstsq(A, ly, rcond=None)
    n = len(lx)
    if n > 2:
        s2 = float(np.sum((ly - A @ coef) ** 2)) / (n - 2)
        se = math.sqrt(s2 / float(np.sum((lx - lx.mean()) ** 2)))
    else:
        se = 0.0
    return float(coef[0]), se


# ---------------------------------------------------------------------------
# expectation level

def expectation_check(table: ProbeTable, v: float, eps_grid: EpsGrid, N_trunc: int = 2,
                      mesh_tol: float = 0.02) -> ExpansionReport:
    """``P(z0 in N_eps)`` against the truncated series and the erf closed form."""
    if not 0 <= N_trunc <= 4:
        raise ValueError("N_trunc must lie in 0..4")
    if table.V.shape[1] != 1:
        raise ValueError("expectation_check needs a single (centre) probe")
    rows = []
    for eps, t in zip(eps_grid.values, eps_grid.t):
        p, se = _mean_se(table.exceed(t)[:, 0])
        closed = special.hitting_tail_t0(v, t)
        series = special.series_p_hit(v, t, N_trunc)
        nxt = abs(special.series_term(v, t, N_trunc + 1))
        tol = max(3 * se, mesh_tol)
        rows.append({"eps": eps, "loge_over_2pi": float(t), "p_emp": p, "p_se": se,
                     "closed_form": closed, "series_pred": series, "next_term": nxt,
                     "deviation": p - closed, "tolerance": tol,
                     "pass_mc": abs(p - closed) <= tol,
                     "pass_series": abs(series - closed) <= nxt})
    return ExpansionReport("expectation", rows,
                           config={"v": v, "N_trunc": N_trunc, "samples": table.samples})


def minkowski_leading(table: ProbeTable, v: float, eps_grid: EpsGrid,
                      domain: GridDomain, a: float = 0.0) -> ExpansionReport:
    """Rescaled areas ``(1/2)|log eps|^(1/2) E[area]`` and their stabilisation.

    The summary also carries the mass proxy, whose exact mean on any graph is
    ``(v - a)`` times the total cell weight.
    """
    leb = domain.leb
    rows = []
    for eps, t, L in zip(eps_grid.values, eps_grid.t, eps_grid.loge):
        m, se = _mean_se(table.areas(t))
        k = 0.5 * math.sqrt(L)
        rows.append({"eps": eps, "loge_over_2pi": float(t), "area_mean": m, "area_se": se,
                     "rescaled": k * m, "rescaled_se": k * se,
                     "series_pred": leb * special.series_p_hit(v, t, 0)})
    # a zero area means the graph is too shallow for that scale
    ratios = [rows[i + 1]["rescaled"] / rows[i]["rescaled"] if rows[i]["rescaled"] else float("nan")
              for i in range(len(rows) - 1)]
    for r, q in zip(rows[1:], ratios):
        r["ratio_prev"] = q
    rows[0]["ratio_prev"] = float("nan")
    mass, mass_se = _mean_se(table.mass)
    summary = {"ratios": ratios, "mass_proxy": mass, "mass_proxy_se": mass_se,
               "mass_target": (v - a) * float(domain.cell_area.sum()),
               "leb": leb, "finest_rescaled": rows[-1]["rescaled"]}
    return ExpansionReport("minkowski", rows, summary=summary,
                           config={"v": v, "samples": table.samples})


def psi_prefactor(n: int, loge: float) -> float:
    """``(-1)^n 2^n n! (n+1/2) / (2pi)^n |log eps|^(n+1/2)``."""
    return (-1) ** n * 2 ** n * math.factorial(n) * (n + 0.5) / TWO_PI ** n * loge ** (n + 0.5)


def multiscale_psi(table: ProbeTable, base_t: float, alphas, n: int) -> PsiEstimate:
    """Vandermonde combination of the masks at ``eps^alpha_i`` isolating ``psi_{2n+1}``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    alphas = tuple(alphas)
    if len(alphas) != n + 1:
        raise ValueError("inconsistent alphas: need n+1 scale factors")
    c = [float(x) for x in vandermonde_coeffs(alphas, n)]
    dens = np.zeros(table.V.shape)
    for ci, al in zip(c, alphas):
        dens += ci * table.exceed(base_t * float(al))
    dens *= psi_prefactor(n, TWO_PI * base_t)
    totals = dens @ table.weights
    return PsiEstimate(2 * n + 1, dens.mean(axis=0), dens.var(axis=0, ddof=1), totals,
                       table.probes, table.weights)


# ---------------------------------------------------------------------------
# GMC germ

def _germ_masses(table: ProbeTable, gamma: float, n: int) -> np.ndarray:
    return gmc_germ_field(table.V, gamma, n) @ table.weights


def gmc_cross_validate(tables: list, gamma_grid, psi_t: float, n_odd: int = 1,
                       alphas=None) -> ExpansionReport:
    """Germ masses against the multi-scale ``psi_{n_odd}`` mass, one row per table.

    Each table is one seed group (e.g. a seed triple pooled). The gap at the
    smallest gamma should be smaller than at the largest.
    """
    if n_odd not in (1, 3):
        raise ValueError("n_odd must be 1 or 3")
    n = (n_odd - 1) // 2
    alphas = alphas or tuple(range(1, n + 2))
    gammas = sorted(gamma_grid, reverse=True)
    rows = []
    for g_idx, tab in enumerate(tables):
        psi = multiscale_psi(tab, psi_t, alphas, n)
        row = {"group": g_idx, "psi_mass": psi.mass, "psi_se": psi.mass_se}
        for g in gammas:
            m = _germ_masses(tab, g, n_odd)
            row[f"germ_{g:g}"] = float(m.mean())
            row[f"gap_{g:g}"] = float(m.mean()) - psi.mass
        row["shrinks"] = abs(row[f"gap_{gammas[-1]:g}"]) < abs(row[f"gap_{gammas[0]:g}"])
        rows.append(row)
    frac = float(np.mean([r["shrinks"] for r in rows]))
    return ExpansionReport("gmc", rows, summary={"fraction_shrinking": frac},
                           config={"gammas": gammas, "n_odd": n_odd, "psi_t": psi_t})


def germ_limit_check(V_values, gamma: float, n: int = 2) -> np.ndarray:
    """Ratio of the order-n germ to its gamma -> 0 limit ``(-1)^k (2k)!/(2^k k!) V^k``."""
    if n % 2:
        raise ValueError("even n only")
    k = n // 2
    V = np.asarray(V_values, dtype=float)
    limit = (-1) ** k * math.factorial(2 * k) / (2 ** k * math.factorial(k)) * V ** k
    return gmc_germ_field(V, gamma, n) / limit


# ---------------------------------------------------------------------------
# second moments, collar, residuals

def second_moment_leading(table: ProbeTable, f1, f2, eps_grid: EpsGrid,
                          ref_t: float | None = None) -> ExpansionReport:
    """``|log eps| E[(1_N, f1)(1_N, f2)]`` against ``4 E[(psi1, f1)(psi1, f2)]``.

    ``psi1`` is the per-sample Minkowski proxy at ``ref_t`` (default: the finest
    scale of the grid); f1, f2 are values at the probe vertices.
    """
    f1 = np.asarray(f1, float) * table.weights
    f2 = np.asarray(f2, float) * table.weights
    ref_t = float(eps_grid.t[-1]) if ref_t is None else ref_t
    psi = 0.5 * math.sqrt(TWO_PI * ref_t) * table.exceed(ref_t)
    rhs, rhs_se = _mean_se(4 * (psi @ f1) * (psi @ f2))
    rows = []
    for eps, t, L in zip(eps_grid.values, eps_grid.t, eps_grid.loge):
        m = table.exceed(t)
        prod = (m @ f1) * (m @ f2)
        mm, se = _mean_se(prod)
        rows.append({"eps": eps, "loge_over_2pi": float(t), "second_moment": mm,
                     "second_moment_se": se, "scaled": L * mm, "scaled_se": L * se,
                     "psi_pred": rhs, "psi_pred_se": rhs_se})
    pos = [r for r in rows if r["second_moment"] > 0]
    slope = log_slope([TWO_PI * r["loge_over_2pi"] for r in pos],
                      [r["second_moment"] for r in pos]) if len(pos) >= 2 else (float("nan"), 0.0)
    return ExpansionReport("second_moment", rows, slopes={"loglog": slope[0], "loglog_se": slope[1]},
                           config={"ref_t": ref_t})


def collar_divergence(table: ProbeTable, k_list, q_grid, blocks: int = 10) -> ExpansionReport:
    """Slope of ``q -> E[sum_{V_A <= q} V_A^k w]`` on log axes, with a jackknife error."""
    q = np.asarray(q_grid, dtype=float)
    V = np.where(np.isnan(table.V), np.inf, table.V)
    rows = []
    slopes = {}
    S = table.samples
    bsize = S // blocks

    def curve(sel, k):
        out = []
        for qq in q:
            vals = np.where(V[sel] <= qq, V[sel] ** k, 0.0) @ table.weights
            out.append(vals.mean())
        return np.array(out)

    for k in k_list:
        full = curve(slice(None), k)
        s, _ = log_slope(q, full) if np.all(full > 0) else (float("nan"), 0.0)
        jack = []
        for b in range(blocks):
            keep = np.ones(S, dtype=bool)
            keep[b * bsize:(b + 1) * bsize] = False
            cb = curve(keep, k)
            if np.all(cb > 0):
                jack.append(log_slope(q, cb)[0])
        jack = np.array(jack)
        half = float(math.sqrt((len(jack) - 1) / len(jack) * np.sum((jack - jack.mean()) ** 2))) \
            if len(jack) > 1 else float("nan")
        slopes[f"k{k}"] = s
        slopes[f"k{k}_se"] = half
        for qq, val in zip(q, full):
            rows.append({"k": k, "q": float(qq), "integral": float(val)})
    return ExpansionReport("collar", rows, slopes=slopes,
                           config={"k": list(k_list), "q": q.tolist(), "samples": S})


def residual_report(domain: GridDomain, table: ProbeTable, psi_table: ProbeTable,
                    eps_grid: EpsGrid, N_trunc: int, psi_t: float, eta: float = 1.5,
                    alphas_by_order=None) -> ExpansionReport:
    """H^-eta norm of ``E[1_N_eps] - sum_{k<=N} c_k |log eps|^-(k+1/2) psi_{2k+1}``.

    The psi fields come from ``psi_table`` (an independent batch) so the
    residual is not zero by construction at any scale.
    """
    if N_trunc not in (0, 1):
        raise ValueError("N_trunc must be 0 or 1")
    if not domain.is_uniform:
        raise ValueError("residual norms need a uniform lattice")
    alphas_by_order = alphas_by_order or {0: (1,), 1: (1, 2)}
    psis = [multiscale_psi(psi_table, psi_t, alphas_by_order[k], k).field for k in range(N_trunc + 1)]
    rows = []
    for eps, t, L in zip(eps_grid.values, eps_grid.t, eps_grid.loge):
        mean_mask = table.exceed(t).mean(axis=0)
        pred = np.zeros(domain.n)
        for k, psi in enumerate(psis):
            coef = (-1) ** k * TWO_PI ** k / (2 ** k * math.factorial(k) * (k + 0.5))
            pred += coef * L ** (-(k + 0.5)) * psi
        res = sobolev_norm_sq(domain, mean_mask - pred, eta)
        rows.append({"eps": eps, "loge_over_2pi": float(t),
                     "area_mean": float(table.areas(t).mean()),
                     "series_pred": float(pred @ table.weights),
                     "resid_norm": math.sqrt(max(res, 0.0))})
    slope = log_slope(eps_grid.loge, [r["resid_norm"] for r in rows])
    return ExpansionReport("residual", rows, slopes={"resid": slope[0], "resid_se": slope[1]},
                           config={"N_trunc": N_trunc, "eta": eta, "psi_t": psi_t})
