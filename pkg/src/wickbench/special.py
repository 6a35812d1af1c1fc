"""Scalar special functions and closed-form Brownian laws.

Everything here is a pure function of its arguments. ``bessel_k`` and ``erf``
are evaluated by their own series / continued fractions so that tests can use
scipy and mpmath as independent references.
"""
from __future__ import annotations

import math
from functools import lru_cache
from typing import NamedTuple

import mpmath
import numpy as np

__all__ = [
    "EULER_GAMMA", "BESSEL_SERIES_MAX", "BESSEL_ASYMPTOTIC_MIN",
    "bessel_k", "bessel_k_array", "bessel_potential", "bessel_potential_array",
    "massive_green", "c_of_m", "erf", "erfc", "hitting_tail_t0",
    "hitting_tail_t0_integral", "hitting_cdf_t0", "series_p_hit",
    "series_term", "exit_tail_symmetric", "ExitTail",
]

EULER_GAMMA = 0.5772156649015329

# branch switchovers for K_nu: Temme series below, Steed continued fraction
# in between, large-argument asymptotic series above
BESSEL_SERIES_MAX = 2.0
BESSEL_ASYMPTOTIC_MIN = 25.0

_EPS = 1e-17
_MAXIT = 100_000


@lru_cache(maxsize=256)
def _temme_gammas(mu: float) -> tuple[float, float, float, float]:
    """gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu) for |mu| <= 1/2.

    gam1 is a 0/0 ratio near mu=0, so it is formed with enough extra digits
    to absorb the cancellation at any nonzero mu.
    """
    extra = int(-math.log10(abs(mu))) if mu else 0
    with mpmath.workdps(40 + max(extra, 0)):
        m = mpmath.mpf(mu)
        gp = mpmath.rgamma(1 + m)
        gm = mpmath.rgamma(1 - m)
        if m == 0:
            g1 = -mpmath.euler
        else:
            g1 = (gm - gp) / (2 * m)
        g2 = (gm + gp) / 2
        return float(g1), float(g2), float(gp), float(gm)


def _k_temme_series(mu: float, x: float) -> tuple[float, float]:
    """K_mu(x) and K_{mu+1}(x) for |mu| <= 1/2 and small x."""
    x2 = 0.5 * x
    pimu = math.pi * mu
    fact = 1.0 if abs(pimu) < 1e-15 else pimu / math.sin(pimu)
    d = -math.log(x2)
    e = mu * d
    fact2 = 1.0 if abs(e) < 1e-15 else math.sinh(e) / e
    gam1, gam2, gampl, gammi = _temme_gammas(mu)
    ff = fact * (gam1 * math.cosh(e) + gam2 * fact2 * d)
    total = ff
    e = math.exp(e)
    p = 0.5 * e / gampl
    q = 0.5 / (e * gammi)
    c = 1.0
    d = x2 * x2
    total1 = p
    for i in range(1, _MAXIT):
        ff = (i * ff + p + q) / (i * i - mu * mu)
        c *= d / i
        p /= i - mu
        q /= i + mu
        term = c * ff
        total += term
        total1 += c * (p - i * ff)
        if abs(term) < abs(total) * _EPS:
            break
    return total, total1 * 2.0 / x


def _k_steed_cf(mu: float, x: float) -> tuple[float, float]:
    """K_mu(x) and K_{mu+1}(x) from Temme's continued fraction (x >= 2)."""
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = delh = d
    q1, q2 = 0.0, 1.0
    a1 = 0.25 - mu * mu
    q = c = a1
    a = -a1
    s = 1.0 + q * delh
    for i in range(2, _MAXIT):
        a -= 2 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1, q2 = q2, qnew
        q += c * qnew
        b += 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h += delh
        dels = q * delh
        s += dels
        if abs(dels / s) < _EPS:
            break
    h = a1 * h
    kmu = math.sqrt(math.pi / (2.0 * x)) * math.exp(-x) / s
    return kmu, kmu * (mu + x + 0.5 - h) / x


def _k_asymptotic(nu: float, x: float) -> float:
    four_nu2 = 4.0 * nu * nu
    total = 1.0
    term = 1.0
    for k in range(1, 200):
        nxt = term * (four_nu2 - (2 * k - 1) ** 2) / (k * 8.0 * x)
        if abs(nxt) >= abs(term) and k > 1:
            break
        term = nxt
        total += term
        if abs(term) < 1e-18 * abs(total):
            break
    return math.sqrt(math.pi / (2.0 * x)) * math.exp(-x) * total


def bessel_k(nu: float, x: float) -> float:
    """Modified Bessel function of the second kind ``K_nu(x)``, nu real, x > 0.

    Branches: Temme's series for x < 2, Steed's continued fraction for
    2 <= x < 25, and the large-argument asymptotic series beyond; orders
    above 1/2 are reached by the (stable) upward recurrence.

    >>> round(bessel_k(0.5, 1.0) / (math.sqrt(math.pi / 2) * math.exp(-1)), 12)
    1.0
    """
    if not x > 0:
        raise ValueError("bessel_k needs x > 0")
    nu = abs(float(nu))  # K_{-nu} = K_nu
    x = float(x)
    if x >= BESSEL_ASYMPTOTIC_MIN:
        return _k_asymptotic(nu, x)
    nl = int(nu + 0.5)
    mu = nu - nl
    if x < BESSEL_SERIES_MAX:
        kmu, k1 = _k_temme_series(mu, x)
    else:
        kmu, k1 = _k_steed_cf(mu, x)
    for i in range(1, nl + 1):
        kmu, k1 = k1, (mu + i) * (2.0 / x) * k1 + kmu
    return kmu


def bessel_k_array(nu: float, x) -> np.ndarray:
    """Elementwise ``bessel_k`` evaluated once per distinct argument."""
    x = np.asarray(x, dtype=float)
    uniq, inv = np.unique(x, return_inverse=True)
    vals = np.array([bessel_k(nu, v) for v in uniq])
    return vals[inv].reshape(x.shape)


def bessel_potential(eta: float, r: float) -> float:
    """Kernel of the H^-eta norm: 2^(1-eta)/(2 pi Gamma(eta)) K_{eta-1}(r) / r^(1-eta)."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    if r < 0:
        raise ValueError("r must be nonnegative")
    if r == 0:
        if eta <= 1:
            raise ValueError("kernel diverges at r = 0 for eta <= 1")
        return 1.0 / (4.0 * math.pi * (eta - 1.0))
    pref = 2.0 ** (1.0 - eta) / (2.0 * math.pi * math.gamma(eta))
    return pref * bessel_k(eta - 1.0, r) * r ** (eta - 1.0)


def bessel_potential_array(eta: float, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    uniq, inv = np.unique(r, return_inverse=True)
    vals = np.array([bessel_potential(eta, v) for v in uniq])
    return vals[inv].reshape(r.shape)


def massive_green(M: float, r: float) -> float:
    """Green function of (1/2)Laplacian - M on the plane: (1/pi) K_0(sqrt(2M) r)."""
    if M <= 0:
        raise ValueError("M must be positive")
    if r <= 0:
        raise ValueError("r must be positive")
    return bessel_k(0.0, math.sqrt(2.0 * M) * r) / math.pi


def c_of_m(M: float) -> float:
    """Constant term of the massive Green function at 0: G_M(0,r) + (1/pi) log r -> C(M)."""
    if M <= 0:
        raise ValueError("M must be positive")
    return ((math.log(2.0) - math.log(M)) / 2.0 - EULER_GAMMA) / math.pi


def _erf_series(x: float) -> float:
    # e^{-x^2} sum 2^n x^{2n+1} / (1*3*...*(2n+1)); all terms positive
    term = x
    total = x
    x2 = x * x
    n = 0
    while True:
        n += 1
        term *= 2.0 * x2 / (2 * n + 1)
        total += term
        if term < 1e-17 * total:
            break
    return 2.0 / math.sqrt(math.pi) * math.exp(-x2) * total


def _erfc_cf(x: float) -> float:
    # continued fraction erfc(x) = e^{-x^2}/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    # evaluated with the modified Lentz algorithm
    tiny = 1e-300
    f = x
    C = x
    D = 0.0
    for k in range(1, 5000):
        a = k / 2.0
        D = x + a * D
        D = tiny if D == 0 else D
        C = x + a / C
        C = tiny if C == 0 else C
        D = 1.0 / D
        delta = C * D
        f *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return math.exp(-x * x) / math.sqrt(math.pi) / f


_ERF_SWITCH = 3.0


def erf(x: float) -> float:
    """Error function from a positive-term series (|x| < 3) or a continued fraction."""
    x = float(x)
    if x < 0:
        return -erf(-x)
    if x == 0:
        return 0.0
    if x < _ERF_SWITCH:
        return _erf_series(x)
    return 1.0 - _erfc_cf(x)


def erfc(x: float) -> float:
    x = float(x)
    if x < _ERF_SWITCH:
        return 1.0 - erf(x)
    return _erfc_cf(x)


def hitting_tail_t0(v: float, t: float) -> float:
    """P_v(T_0 > t) for Brownian motion started at v > 0: erf(v / sqrt(2t))."""
    if v <= 0 or t <= 0:
        raise ValueError("v and t must be positive")
    return erf(v / math.sqrt(2.0 * t))


def hitting_tail_t0_integral(v: float, t: float) -> float:
    """Same probability by integrating the hitting density over (t, infinity)."""
    from scipy import integrate

    if v <= 0 or t <= 0:
        raise ValueError("v and t must be positive")
    dens = lambda s: v / (math.sqrt(2 * math.pi) * s ** 1.5) * math.exp(-v * v / (2 * s))
    # the tail decays like s^{-3/2}; map (t, inf) onto (0, 1/t] via s = 1/w^2
    g = lambda w: dens(1.0 / (w * w)) * 2.0 / w ** 3
    val, _ = integrate.quad(g, 0.0, 1.0 / math.sqrt(t), epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def hitting_cdf_t0(v: float, t) -> np.ndarray:
    """P_v(T_0 <= t), elementwise over an array of times (t <= 0 gives 0)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = [erfc(v / math.sqrt(2.0 * s)) for s in t[pos]]
    return out


def series_term(v: float, t: float, k: int) -> float:
    """k-th term of the 1/t^(k+1/2) expansion of P_v(T_0 > t)."""
    return ((-1) ** k * v ** (2 * k + 1)
            / (2 ** k * math.factorial(k) * (k + 0.5) * t ** (k + 0.5))
            / math.sqrt(2.0 * math.pi))


def series_p_hit(v: float, t: float, N: int) -> float:
    """Partial sum over k = 0..N of the half-integer power series of P_v(T_0 > t)."""
    if N < 0:
        raise ValueError("N must be >= 0")
    if v == 0:
        return 0.0
    return math.fsum(series_term(v, t, k) for k in range(N + 1))


class ExitTail(NamedTuple):
    value: float
    truncation_bound: float


def exit_tail_symmetric(b: float, t: float, terms: int) -> ExitTail:
    """P_0(Brownian motion stays in (-b, b) up to time t), Fourier series.

    The alternating series is truncated after ``terms`` terms; the bound is the
    magnitude of the first omitted term.
    """
    if b <= 0 or t < 0 or terms < 1:
        raise ValueError("need b > 0, t >= 0, terms >= 1")
    lam = math.pi ** 2 * t / (8.0 * b * b)
    vals = [(-1) ** n * math.exp(-(2 * n + 1) ** 2 * lam) / (2 * n + 1) for n in range(terms)]
    bound = 4.0 / math.pi * math.exp(-(2 * terms + 1) ** 2 * lam) / (2 * terms + 1)
    return ExitTail(4.0 / math.pi * math.fsum(vals), bound)
