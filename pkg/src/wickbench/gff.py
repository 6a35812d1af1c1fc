"""Discrete Gaussian free field sampling, Wick powers and GMC germs."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import streams
from .lattice import GridDomain, domain_from_spec
from .parallel import map_chunks
from .polyseq import MPoly, hermite_q

__all__ = [
    "FieldSample", "sample_gff", "sample_batch", "wick_power", "eval_q",
    "wick_cov_check", "WickCovResult", "gmc_germ_field",
]


@dataclass(eq=False)
class FieldSample:
    values: np.ndarray
    boundary_value: float
    seed_path: tuple[int, int]
    domain: GridDomain

    @property
    def centered(self) -> np.ndarray:
        return self.values - self.boundary_value


def _noise(domain: GridDomain, seed: int, indices) -> np.ndarray:
    xi = np.empty((domain.n, len(indices)))
    for c, k in enumerate(indices):
        xi[:, c] = streams.stream(seed, int(k), streams.FIELD).standard_normal(domain.n)
    return xi


def sample_batch(domain: GridDomain, v: float, seed: int, indices) -> np.ndarray:
    """Fields for several sample indices, shape ``(len(indices), n)``.

    Column k is ``v + U^{-1} xi_k`` with ``-Lap = U^T U``; each column depends
    only on its own stream, so batching does not change any value.
    """
    xi = _noise(domain, seed, indices)
    return (domain.factor.solve_upper(xi) + v).T


def sample_gff(domain: GridDomain, v: float, seed: int, index: int) -> FieldSample:
    if v < 0:
        raise ValueError("boundary value must be nonnegative")
    vals = sample_batch(domain, v, seed, [index])[0]
    return FieldSample(vals, float(v), streams.seed_path(seed, index), domain)


def eval_q(poly: MPoly, x, u) -> np.ndarray:
    """Evaluate a polynomial in (x, u) elementwise in floating point."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    out = np.zeros(np.broadcast(x, u).shape)
    for (i, j), c in poly.terms.items():
        out = out + float(c) * x ** i * u ** j
    return out


def wick_power(sample: FieldSample, n: int, variance=None) -> np.ndarray:
    """Per-vertex ``Q_n(Phi(z), G_D(z,z))``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    u = sample.domain.green_diagonal if variance is None else variance
    return eval_q(hermite_q(n), sample.values, u)


@dataclass
class WickCovResult:
    pairs: np.ndarray
    orders: list
    empirical: np.ndarray      # (len(orders), len(pairs))
    theoretical: np.ndarray
    se: np.ndarray
    cross_empirical: np.ndarray
    cross_se: np.ndarray
    samples: int

    @property
    def z_scores(self) -> np.ndarray:
        return (self.empirical - self.theoretical) / self.se

    @property
    def cross_z(self) -> np.ndarray:
        return self.cross_empirical / self.cross_se


def _wick_chunk(start, stop, spec, seed, pairs, orders, batch):
    dom = domain_from_spec(spec)
    verts = np.unique(pairs)
    pos = np.searchsorted(verts, pairs)
    g = dom.green_diagonal[verts]
    no = len(orders)
    s1 = np.zeros((no, len(pairs)))
    s2 = np.zeros((no, len(pairs)))
    c1 = np.zeros(len(pairs))
    c2 = np.zeros(len(pairs))
    polys = {n: hermite_q(n) for n in set(orders) | {2, 3}}
    for b0 in range(start, stop, batch):
        idx = np.arange(b0, min(b0 + batch, stop))
        X = sample_batch(dom, 0.0, seed, idx)[:, verts]
        Q = {n: eval_q(p, X, g) for n, p in polys.items()}
        for a, n in enumerate(orders):
            prod = Q[n][:, pos[:, 0]] * Q[n][:, pos[:, 1]]
            s1[a] += prod.sum(axis=0)
            s2[a] += (prod * prod).sum(axis=0)
        cross = Q[2][:, pos[:, 0]] * Q[3][:, pos[:, 1]]
        c1 += cross.sum(axis=0)
        c2 += (cross * cross).sum(axis=0)
    return s1, s2, c1, c2


def wick_cov_check(domain: GridDomain, n_list, pairs, samples: int, seed: int = 0,
                   workers: int | None = None, chunk: int = 5000, batch: int = 1000) -> WickCovResult:
    """Monte Carlo check of ``E[Q_n(X) Q_n(Y)] = n! G(z,w)^n`` for the centred field.

    Also accumulates the cross-order moment ``E[:Phi^2:(z) :Phi^3:(w)]`` which
    must vanish.
    """
    orders = list(n_list)
    if any(n < 1 or n > 4 for n in orders):
        raise ValueError("orders must lie in 1..4")
    pairs = np.asarray(pairs, dtype=np.int64)
    parts = map_chunks(_wick_chunk, samples, chunk,
                       (domain.spec, seed, pairs, orders, batch), workers)
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    c1 = sum(p[2] for p in parts)
    c2 = sum(p[3] for p in parts)
    mean = s1 / samples
    se = np.sqrt(np.maximum(s2 / samples - mean ** 2, 0) / (samples - 1))
    cmean = c1 / samples
    cse = np.sqrt(np.maximum(c2 / samples - cmean ** 2, 0) / (samples - 1))
    G = np.array([green_entry(domain, int(a), int(b)) for a, b in pairs])
    theo = np.array([[math.factorial(n) * gg ** n for gg in G] for n in orders])
    return WickCovResult(pairs, orders, mean, theo, se, cmean, cse, samples)


def green_entry(domain: GridDomain, i: int, j: int) -> float:
    e = np.zeros(domain.n)
    e[j] = 1.0
    return float(domain.factor.solve(e)[i])


def gmc_germ_field(v_values, gamma: float, n: int) -> np.ndarray:
    """``H_n(gamma sqrt(V)) V^(n/2) exp(-gamma^2 V / 2)``, zero where V is undefined.

    Uses ``H_n(gamma sqrt V) V^(n/2) = Q_n(gamma V, V)`` to stay polynomial.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    V = np.asarray(v_values, dtype=float)
    ok = np.isfinite(V)
    out = np.zeros(V.shape)
    Vk = V[ok]
    out[ok] = eval_q(hermite_q(n), gamma * Vk, Vk) * np.exp(-0.5 * gamma * gamma * Vk)
    return out
