"""First passage sets, sign clusters and their generations on the cable graph.

Each lattice edge carries a Brownian bridge between its endpoint values (unit
resistance, matching ``-Lap``). Vertex values are the Gaussian sample; bridge
minima are resolved exactly in law, so level sets are those of the metric-graph
field, not of a vertex-only approximation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.sparse import csgraph

from . import streams
from .gff import FieldSample
from .lattice import GridDomain, green_at, v_field

__all__ = [
    "FirstPassageSet", "ClusterSet", "NeighborhoodMask", "extract_fps", "neighborhood",
    "tilde_neighborhood", "extract_sign_clusters", "group_generations", "mass_proxy",
]


@dataclass(eq=False)
class FirstPassageSet:
    domain: GridDomain
    in_A: np.ndarray            # bool per vertex
    open_edges: np.ndarray      # bool per interior edge
    open_boundary: np.ndarray   # bool per boundary edge
    level: float
    boundary_value: float
    cut_extra: np.ndarray       # conductance added at vertices next to a cut edge
    field_values: np.ndarray
    _v: np.ndarray | None = field(default=None, repr=False)

    @property
    def vertices(self) -> np.ndarray:
        return np.flatnonzero(self.in_A)

    @property
    def v_values(self) -> np.ndarray:
        """``V_A`` on the complement of A (NaN on A), computed on first use."""
        if self._v is None:
            if self.in_A.all():
                self._v = np.full(self.domain.n, np.nan)
            else:
                self._v = v_field(self.domain, self.in_A, self.cut_extra)
        return self._v

    def v_at(self, vertex: int) -> float:
        """``V_A`` at one vertex; ``G_D(z,z)`` when the vertex lies in A."""
        g = float(self.domain.green_diagonal[vertex])
        if self.in_A[vertex]:
            return g
        if self._v is not None:
            return float(self._v[vertex])
        return g - green_at(self.domain, vertex, self.in_A, self.cut_extra)


def _cross_prob(p, q):
    """P(a Brownian bridge of unit length from p > 0 to q > 0 stays positive)."""
    return -np.expm1(-2.0 * p * q)


def _boundary_hit_components(n, edges, open_e, bnd, open_b):
    e = edges[open_e]
    g = sp.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    _, labels = csgraph.connected_components(g, directed=False)
    roots = np.unique(labels[bnd[open_b]])
    return np.isin(labels, roots)


def extract_fps(sample: FieldSample, a: float, seed: int | None = None,
                index: int | None = None) -> FirstPassageSet:
    """Cable-graph first passage set of ``sample`` at level ``a`` (below the boundary value).

    Edge uniforms are drawn first, one per edge in a fixed order, so the sets
    for different levels built from the same stream are nested. Cut positions on
    edges leaving A are drawn afterwards: if A stops on an edge at distance
    ``tau`` from the A side, the other endpoint sees the pinned point through the
    remaining length ``1 - tau``, i.e. an extra conductance ``s = tau/(1-tau)``,
    whose law is inverse Gaussian with mean ``u/|w|`` and shape ``u^2``.
    """
    dom = sample.domain
    v = sample.boundary_value
    if not a < v:
        raise ValueError("level must lie below the boundary value")
    seed, index = sample.seed_path if seed is None else (seed, index)
    rng = streams.stream(seed, index, streams.EDGES)
    u_edge = rng.random(dom.n_edges)
    u_bnd = rng.random(len(dom.boundary_edges))

    h = sample.values - a
    x, y = dom.edges[:, 0], dom.edges[:, 1]
    pos = h > 0
    open_e = pos[x] & pos[y] & (u_edge < _cross_prob(np.maximum(h[x], 0), np.maximum(h[y], 0)))
    b = dom.boundary_edges
    open_b = pos[b] & (u_bnd < _cross_prob(v - a, np.maximum(h[b], 0)))
    in_A = _boundary_hit_components(dom.n, dom.edges, open_e, b, open_b)

    # cut edges between A (or the boundary) and the rest
    extra = np.zeros(dom.n)
    side = in_A[x] != in_A[y]
    ai = np.where(in_A[x], x, y)[side]
    oi = np.where(in_A[x], y, x)[side]
    cb = ~in_A[b]
    src_u = np.concatenate([h[ai], np.full(int(cb.sum()), v - a)])
    dst = np.concatenate([oi, b[cb]])
    if len(dst):
        w = np.maximum(np.abs(h[dst]), 1e-300)
        s = rng.wald(src_u / w, src_u * src_u)
        np.add.at(extra, dst, s)
    return FirstPassageSet(dom, in_A, open_e, open_b, float(a), float(v), extra, sample.values)


def mass_proxy(fps: FirstPassageSet) -> float:
    """``sum_{x in A} (Phi(x) - a) * cell(x)``, whose mean is ``(v - a) Leb(D)``."""
    h = fps.field_values - fps.level
    return float(np.sum((h * fps.domain.cell_area)[fps.in_A]))


@dataclass
class NeighborhoodMask:
    eps: float
    mask: np.ndarray
    area: float


def _threshold(eps: float) -> float:
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    return -math.log(eps) / (2 * math.pi)


def neighborhood(fps: FirstPassageSet, eps: float, include_A: bool = False) -> NeighborhoodMask:
    """Vertices off A with ``V_A(z) > (1/2pi)|log eps|``.

    ``include_A`` adds the vertices of A themselves, where the conformal radius
    ratio is infinite.
    """
    t = _threshold(eps)
    V = fps.v_values
    with np.errstate(invalid="ignore"):
        m = V > t if eps < 1 else V > 0
    m &= ~fps.in_A
    if include_A:
        m |= fps.in_A
    return NeighborhoodMask(eps, m, float(fps.domain.cell_area[m].sum()))


def tilde_neighborhood(fps: FirstPassageSet, eps: float) -> NeighborhoodMask:
    """Vertices off A with ``CR(z, D minus A) < eps``, using the exact disk radius."""
    if fps.domain.shape not in ("disk", "zoom"):
        raise ValueError("tilde neighbourhoods need a disk domain")
    if eps <= 0:
        raise ValueError("eps must be positive")
    log_cr = np.log(fps.domain.conformal_radius()) / (2 * math.pi)
    with np.errstate(invalid="ignore"):
        m = (log_cr - fps.v_values) < math.log(eps) / (2 * math.pi)
    m &= ~fps.in_A
    return NeighborhoodMask(eps, m, float(fps.domain.cell_area[m].sum()))


# ---------------------------------------------------------------------------
# sign clusters

@dataclass(eq=False)
class ClusterSet:
    domain: GridDomain
    labels: np.ndarray       # cluster id per vertex, -1 where the field vanishes
    signs: np.ndarray        # +1/-1 per cluster
    open_edges: np.ndarray
    generation: np.ndarray | None = None

    @property
    def n_clusters(self) -> int:
        return len(self.signs)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels[self.labels >= 0], minlength=self.n_clusters)


def extract_sign_clusters(sample: FieldSample, seed: int | None = None,
                          index: int | None = None) -> ClusterSet:
    """Excursion clusters of a zero-boundary field on the cable graph.

    A same-sign edge stays open when its bridge avoids 0, with probability
    ``1 - exp(-2 |Phi(x)| |Phi(y)|)``; boundary edges always reach 0.
    """
    if sample.boundary_value != 0:
        raise ValueError("sign clusters need boundary value 0")
    dom = sample.domain
    seed, index = sample.seed_path if seed is None else (seed, index)
    u_edge = streams.stream(seed, index, streams.EDGES).random(dom.n_edges)
    phi = sample.values
    x, y = dom.edges[:, 0], dom.edges[:, 1]
    same = phi[x] * phi[y] > 0
    open_e = same & (u_edge < _cross_prob(np.abs(phi[x]), np.abs(phi[y])))
    e = dom.edges[open_e]
    g = sp.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(dom.n, dom.n))
    _, lab = csgraph.connected_components(g, directed=False)
    nz = phi != 0
    labels = np.full(dom.n, -1, dtype=np.int64)
    uniq, first, inv = np.unique(lab[nz], return_index=True, return_inverse=True)
    labels[nz] = inv
    signs = np.sign(phi[nz][first]).astype(np.int64)
    return ClusterSet(dom, labels, signs, open_e)


def _raster(domain: GridDomain):
    if domain.ij is None:
        raise ValueError("generations need a uniform lattice domain")
    ij = domain.ij - domain.ij.min(axis=0) + 1
    shape = tuple(ij.max(axis=0) + 2)
    return ij, shape


def group_generations(clusters: ClusterSet) -> np.ndarray:
    """Number of clusters that topologically surround each cluster.

    Cluster ``c'`` surrounds ``c`` when ``c`` lies in a hole of ``c'``: a
    component of the complement of ``c'`` (8-connected, so diagonal contact
    does not block) that meets neither the outside of the domain nor the
    window border.
    """
    ij, shape = _raster(clusters.domain)
    lab = clusters.labels
    grid = np.full(shape, -2, dtype=np.int64)          # -2: outside the domain
    grid[ij[:, 0], ij[:, 1]] = lab
    k = clusters.n_clusters
    gen = np.zeros(k, dtype=np.int64)
    eight = np.ones((3, 3), dtype=bool)
    objs = ndimage.find_objects(np.where(grid >= 0, grid + 1, 0))
    for c, sl in enumerate(objs):
        r0, r1 = sl[0].start, sl[0].stop
        c0, c1 = sl[1].start, sl[1].stop
        if (r1 - r0) < 3 or (c1 - c0) < 3:
            continue
        win = grid[r0 - 1:r1 + 1, c0 - 1:c1 + 1]
        bg = win != c
        bl, nb = ndimage.label(bg, structure=eight)
        if nb < 2:
            continue
        outside = np.zeros(nb + 1, dtype=bool)
        border = np.concatenate([bl[0], bl[-1], bl[:, 0], bl[:, -1]])
        outside[border] = True
        outside[np.unique(bl[win == -2])] = True
        outside[0] = True
        hole_lab = np.where(outside[bl], 0, bl)
        inner = np.unique(win[hole_lab > 0])
        inner = inner[inner >= 0]
        gen[inner] += 1
    clusters.generation = gen
    return gen
