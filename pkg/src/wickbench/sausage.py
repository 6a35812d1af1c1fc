"""Killed planar Brownian motion: sausages, occupation fields, local times.

Two path representations are used. ``sample_killed_bm`` stores a fine
Euler path. ``sample_coarse_bm`` stores a coarse skeleton plus a hash key; the
Brownian bridges between skeleton points are refined lazily and reproducibly
(midpoints are a deterministic function of the key and the dyadic node), so
the sausage at very small radii can be probed without materialising the path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np
from scipy import ndimage
from scipy.integrate import quad

from . import streams
from .gff import eval_q
from .polyseq import laguerre_coeff, laguerre_lambda
from .special import bessel_k_array, massive_green

__all__ = [
    "BrownianPath", "sample_killed_bm", "sample_coarse_bm", "sausage_area",
    "sausage_area_probe", "sausage_ratio_oracle", "circle_average", "h_m",
    "occupation_grid", "renorm_loctime", "two_point_check", "TwoPointResult",
    "mass_change_check", "zero_constant_mass",
]


def zero_constant_mass() -> float:
    """The mass M at which the constant term of G_M vanishes: ``2 exp(-2 gamma)``."""
    return 2.0 * math.exp(-2.0 * 0.5772156649015329)


@dataclass(eq=False)
class BrownianPath:
    dt: float
    points: np.ndarray     # (K+1, 2), points[i] = B(i dt) for i dt < lifetime, last = B(lifetime)
    lifetime: float
    seed_path: tuple
    key: int = 0           # hash key for lazy bridge refinement (coarse paths)

    @property
    def steps(self) -> np.ndarray:
        """Duration of each segment; all ``dt`` except a shorter last one."""
        k = len(self.points) - 1
        d = np.full(k, self.dt)
        if k:
            d[-1] = self.lifetime - self.dt * (k - 1)
        return d

    def weights(self) -> np.ndarray:
        """Occupation time carried by each stored point (left-point rule)."""
        w = np.zeros(len(self.points))
        w[:-1] = self.steps
        return w


def _draw_path(M: float, dt: float, seed: int, index: int) -> BrownianPath:
    rng = streams.stream(seed, index, streams.PATH)
    zeta = float(rng.exponential(1.0 / M))
    key = int(rng.integers(0, 2 ** 63))
    k = max(1, int(math.ceil(zeta / dt)))
    inc = rng.standard_normal((k, 2)) * math.sqrt(dt)
    inc[-1] *= math.sqrt((zeta - dt * (k - 1)) / dt)
    pts = np.zeros((k + 1, 2))
    np.cumsum(inc, axis=0, out=pts[1:])
    return BrownianPath(dt, pts, zeta, (seed, index), key)


def sample_killed_bm(M: float, dt: float, seed: int, index: int) -> BrownianPath:
    """Euler path of planar BM from 0 killed at an independent Exp(M) time."""
    if M <= 0:
        raise ValueError("M must be positive")
    if dt > 1e-5 / M * (1 + 1e-12):
        raise ValueError("dt must be at most 1e-5 / M")
    return _draw_path(M, dt, seed, index)


def sample_coarse_bm(M: float, dt0: float, seed: int, index: int) -> BrownianPath:
    """Coarse skeleton of the same kind of path, refined lazily by the probes."""
    if M <= 0 or dt0 <= 0:
        raise ValueError("M and dt0 must be positive")
    return _draw_path(M, dt0, seed, index)


# ---------------------------------------------------------------------------
# raster sausage

def sausage_area(path: BrownianPath, eps: float, cell: float | None = None) -> float:
    """Area of the eps-neighbourhood of the stored points, by distance transform."""
    cell = eps / 8 if cell is None else cell
    if eps < 8 * cell * (1 - 1e-12):
        raise ValueError("cell too coarse: need cell <= eps/8")
    pts = path.points
    lo = pts.min(axis=0) - eps - 2 * cell
    shape = tuple(np.ceil((pts.max(axis=0) + eps + 2 * cell - lo) / cell).astype(int) + 1)
    grid = np.ones(shape, dtype=bool)
    ij = np.floor((pts - lo) / cell).astype(int)
    grid[ij[:, 0], ij[:, 1]] = False
    d = ndimage.distance_transform_edt(grid, sampling=cell)
    return float(np.count_nonzero(d < eps)) * cell * cell


# ---------------------------------------------------------------------------
# lazy bridge sausage

@numba.njit(cache=True)
def _mix(z):
    z = (z + np.uint64(0x9E3779B97F4A7C15))
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True)
def _gauss_pair(key, seg, node):
    h1 = _mix(key ^ _mix(np.uint64(seg) * np.uint64(0x100000001B3) ^ _mix(node)))
    h2 = _mix(h1 ^ np.uint64(0xD1B54A32D192ED03))
    u1 = ((h1 >> np.uint64(11)) + np.uint64(1)) * (1.0 / 9007199254740993.0)
    u2 = (h2 >> np.uint64(11)) * (1.0 / 9007199254740992.0)
    r = math.sqrt(-2.0 * math.log(u1))
    return r * math.cos(2 * math.pi * u2), r * math.sin(2 * math.pi * u2)


@numba.njit(cache=True)
def _seg_dist(px, py, ax, ay, bx, by):
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    s = 0.0
    if L2 > 0:
        s = ((px - ax) * dx + (py - ay) * dy) / L2
        s = min(1.0, max(0.0, s))
    ex, ey = ax + s * dx - px, ay + s * dy - py
    return math.sqrt(ex * ex + ey * ey)


@numba.njit(cache=True)
def _bridge_hits(px, py, P, taus, seg, key, eps, c, tau_min):
    """Does the bridge on skeleton segment ``seg`` come within eps of (px, py)?"""
    sax = np.empty(64)
    say = np.empty(64)
    sbx = np.empty(64)
    sby = np.empty(64)
    stau = np.empty(64)
    snode = np.empty(64, dtype=np.uint64)
    n = 1
    sax[0], say[0] = P[seg, 0], P[seg, 1]
    sbx[0], sby[0] = P[seg + 1, 0], P[seg + 1, 1]
    stau[0] = taus[seg]
    snode[0] = np.uint64(1)
    while n > 0:
        n -= 1
        ax, ay, bx, by, tau, node = sax[n], say[n], sbx[n], sby[n], stau[n], snode[n]
        d = _seg_dist(px, py, ax, ay, bx, by)
        if d > eps + c * math.sqrt(tau):
            continue
        if tau <= tau_min:
            if d < eps:
                return True
            continue
        g1, g2 = _gauss_pair(key, seg, node)
        sd = math.sqrt(tau / 4.0)
        mx = 0.5 * (ax + bx) + sd * g1
        my = 0.5 * (ay + by) + sd * g2
        if (mx - px) ** 2 + (my - py) ** 2 < eps * eps:
            return True
        # push the farther half first so the nearer one is explored first
        da = (0.5 * (ax + mx) - px) ** 2 + (0.5 * (ay + my) - py) ** 2
        db = (0.5 * (bx + mx) - px) ** 2 + (0.5 * (by + my) - py) ** 2
        first_a = da <= db
        for side in range(2):
            use_a = (side == 1) == first_a
            if use_a:
                sax[n], say[n], sbx[n], sby[n] = ax, ay, mx, my
                snode[n] = node * np.uint64(2)
            else:
                sax[n], say[n], sbx[n], sby[n] = mx, my, bx, by
                snode[n] = node * np.uint64(2) + np.uint64(1)
            stau[n] = tau / 2.0
            n += 1
    return False


@numba.njit(cache=True)
def _probe_sausage(P, taus, key, eps, c, tau_min, cx, cy, rad, seg_pick, ox, oy):
    """Per-probe ``hit / cover`` for probes placed in the disk of ``seg_pick``."""
    m = len(seg_pick)
    K = len(taus)
    out = np.zeros(m)
    for p in range(m):
        s0 = seg_pick[p]
        px = cx[s0] + ox[p]
        py = cy[s0] + oy[p]
        cover = 0
        hit = False
        for j in range(K):
            dx, dy = px - cx[j], py - cy[j]
            if dx * dx + dy * dy < rad[j] * rad[j]:
                cover += 1
                if not hit:
                    hit = _bridge_hits(px, py, P, taus, j, key, eps, c, tau_min)
        if hit:
            out[p] = 1.0 / cover
    return out


@dataclass
class ProbeArea:
    area: float
    se: float
    probes: int


def sausage_area_probe(path: BrownianPath, eps: float, n_probes: int = 400,
                       c: float = 5.0, tau_min: float | None = None,
                       probe_seed: int | None = None) -> ProbeArea:
    """Unbiased Monte Carlo area of the sausage of the lazily refined path.

    Each skeleton segment gets a disk containing every point within
    ``eps + c sqrt(dt)`` of its chord; probes are uniform on the union of these
    disks (pick a disk by area, then a point, weight by 1/cover), and a probe
    counts when the bridge comes within eps of it. Bridges are refined down to
    duration ``tau_min`` (default ``eps^2/256``) and pruned when the chord is
    farther than ``eps + c sqrt(tau)``.
    """
    tau_min = eps * eps / 256 if tau_min is None else tau_min
    P = path.points
    taus = path.steps
    mid = 0.5 * (P[:-1] + P[1:])
    rad = 0.5 * np.hypot(*(P[1:] - P[:-1]).T) + c * np.sqrt(taus) + eps
    areas = math.pi * rad * rad
    total = float(areas.sum())
    seed, index = path.seed_path if probe_seed is None else (probe_seed, path.seed_path[1])
    rng = streams.stream(seed, index, streams.PROBES)
    pick = rng.choice(len(taus), size=n_probes, p=areas / total)
    r = rad[pick] * np.sqrt(rng.random(n_probes))
    th = 2 * math.pi * rng.random(n_probes)
    vals = _probe_sausage(P, taus, np.uint64(path.key), eps, c, tau_min, mid[:, 0], mid[:, 1],
                          rad, pick.astype(np.int64), r * np.cos(th), r * np.sin(th))
    return ProbeArea(total * float(vals.mean()), total * float(vals.std(ddof=1)) / math.sqrt(n_probes),
                     n_probes)


def _killed_mean_area(m: float, eps: float) -> float:
    """``E|S_eps|`` for BM killed at rate m: ``pi eps^2 + 2 pi eps K1(k eps) / (k K0(k eps))``."""
    k = math.sqrt(2 * m)
    k0, k1 = bessel_k_array(0, k * eps), bessel_k_array(1, k * eps)
    return math.pi * eps * eps + 2 * math.pi * eps * float(k1) / (k * float(k0))


def sausage_ratio_oracle(M: float, eps: float) -> float:
    """``E[(1/pi)|log eps| |S_eps| / zeta]`` from the killed-path mean area.

    Uses ``1/zeta = int_0^inf exp(-s zeta) ds`` and ``E[|S| e^{-s zeta}] =
    M/(M+s) * E_{M+s}|S|``. The ``pi eps^2`` floor makes the full integral
    diverge logarithmically, so s is cut at ``1/eps^2`` (paths shorter than
    ``eps^2``); the neglected part is below ``M pi eps^2 log`` terms.
    """
    f = lambda s: M / (M + s) * _killed_mean_area(M + s, eps)
    smax = 1.0 / (eps * eps)
    pts = [0.0] + [x for x in (1.0, 10.0, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8) if x < smax] + [smax]
    tot = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        tot += quad(f, a, b, limit=200, epsabs=0, epsrel=1e-10)[0]
    return -math.log(eps) / math.pi * tot


# ---------------------------------------------------------------------------
# occupation fields

def circle_average(path: BrownianPath, z, r: float, delta: float | None = None) -> float:
    """Time spent in the annulus ``r - delta < |x - z| < r + delta`` over its area."""
    if r <= 0:
        raise ValueError("r must be positive")
    delta = r / 10 if delta is None else delta
    d = np.hypot(path.points[:, 0] - z[0], path.points[:, 1] - z[1])
    w = path.weights()
    t = float(w[(d > r - delta) & (d < r + delta)].sum())
    return t / (4 * math.pi * r * delta)


@lru_cache(maxsize=64)
def h_m(M: float, r: float, delta: float | None = None) -> float:
    """Mean circle average at the start point: the annulus average of G_M."""
    delta = r / 10 if delta is None else delta
    f = lambda rho: 2 * math.pi * rho * massive_green(M, rho)
    return quad(f, r - delta, r + delta, epsabs=0, epsrel=1e-11)[0] / (4 * math.pi * r * delta)


def occupation_grid(path: BrownianPath, z_grid, r: float, delta: float | None = None,
                    block: int = 20000) -> np.ndarray:
    """Circle averages at every point of ``z_grid`` (shape (m, 2))."""
    delta = r / 10 if delta is None else delta
    z = np.asarray(z_grid, dtype=float)
    out = np.zeros(len(z))
    w = path.weights()
    P = path.points
    for s in range(0, len(P), block):
        seg = P[s:s + block]
        d = np.hypot(seg[None, :, 0] - z[:, None, 0], seg[None, :, 1] - z[:, None, 1])
        out += ((d > r - delta) & (d < r + delta)) @ w[s:s + block]
    return out / (4 * math.pi * r * delta)


def renorm_loctime(path: BrownianPath, n: int, r: float, z_grid, M: float,
                   delta: float | None = None) -> np.ndarray:
    """``Lambda_n(Theta_r(z), h_M(r))`` on a grid of points."""
    if n < 1:
        raise ValueError("n must be >= 1")
    theta = occupation_grid(path, z_grid, r, delta)
    return eval_q(laguerre_lambda(n), theta, h_m(M, r, delta))


@dataclass
class TwoPointResult:
    empirical: np.ndarray
    theoretical: np.ndarray
    se: np.ndarray
    paths: int

    @property
    def z_scores(self) -> np.ndarray:
        return (self.empirical - self.theoretical) / self.se


def _cell_nodes(center, cell, k=4):
    g = (np.arange(k) + 0.5) / k - 0.5
    X, Y = np.meshgrid(g, g, indexing="ij")
    return np.stack([center[0] + cell * X.ravel(), center[1] + cell * Y.ravel()], axis=1)


def _two_point_theory(M, z, w, cell):
    Z = _cell_nodes(z, cell)
    W = _cell_nodes(w, cell)
    G0z = massive_green_array(M, np.hypot(Z[:, 0], Z[:, 1]))
    G0w = massive_green_array(M, np.hypot(W[:, 0], W[:, 1]))
    Gzw = massive_green_array(M, np.hypot(Z[:, None, 0] - W[None, :, 0], Z[:, None, 1] - W[None, :, 1]))
    return float(np.mean((G0z[:, None] + G0w[None, :]) * Gzw))


def massive_green_array(M: float, r) -> np.ndarray:
    return bessel_k_array(0, math.sqrt(2 * M) * np.asarray(r, dtype=float)) / math.pi


def _cell_occupation(path: BrownianPath, centers, cell) -> np.ndarray:
    P = path.points
    w = path.weights()
    out = np.empty(len(centers))
    for i, c in enumerate(centers):
        inside = (np.abs(P[:, 0] - c[0]) < cell / 2) & (np.abs(P[:, 1] - c[1]) < cell / 2)
        out[i] = w[inside].sum()
    return out


def two_point_check(M: float, pairs, paths: int, dt: float, cell: float = 0.05,
                    seed: int = 0) -> TwoPointResult:
    """``E[Theta(cell_z) Theta(cell_w)] / cell^4`` against ``(G(0,z) + G(0,w)) G(z,w)``.

    The theoretical side is averaged over both cells by a 4x4 midpoint rule.
    """
    pairs = np.asarray(pairs, dtype=float)
    z, w = pairs[:, 0], pairs[:, 1]
    if np.any(np.all(np.isclose(z, w), axis=1)) or np.any(np.all(z == 0, axis=1)) \
            or np.any(np.all(w == 0, axis=1)):
        raise ValueError("coincident points")
    centers = np.concatenate([z, w])
    k = len(pairs)
    prods = np.empty((paths, k))
    for i in range(paths):
        occ = _cell_occupation(sample_killed_bm(M, dt, seed, i), centers, cell)
        prods[i] = occ[:k] * occ[k:] / cell ** 4
    theo = np.array([_two_point_theory(M, a, b, cell) for a, b in zip(z, w)])
    emp = prods.mean(axis=0)
    se = prods.std(axis=0, ddof=1) / math.sqrt(paths)
    return TwoPointResult(emp, theo, se, paths)


# ---------------------------------------------------------------------------
# change of mass

def mass_change_check(x, u1, u2, n: int) -> np.ndarray:
    """Relative residual of ``Lambda_n(x,u2) = sum_k a_{n,k} (u2-u1)^(n-k) Lambda_k(x,u1)``.

    ``a_{n,k}`` are the signed Laguerre coefficients of x^k in Lambda_n.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    x, u1, u2 = (np.asarray(a, dtype=float) for a in (x, u1, u2))
    lhs = eval_q(laguerre_lambda(n), x, u2)
    terms = [float(laguerre_coeff(n, k)) * (u2 - u1) ** (n - k) * eval_q(laguerre_lambda(k), x, u1)
             for k in range(1, n + 1)]
    rhs = np.sum(terms, axis=0)
    scale = np.abs(lhs) + np.sum(np.abs(terms), axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return np.abs(lhs - rhs) / scale
