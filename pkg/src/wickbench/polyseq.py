"""Exact polynomial-sequence algebra over the rationals.

Polynomials carry ``fractions.Fraction`` coefficients and are stored sparsely.
A polynomial sequence ``P_0, ..., P_N`` is kept as its triangular coefficient
table; umbral composition is then a triangular matrix product.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, factorial
from typing import Callable, Iterable, Sequence

import mpmath

__all__ = [
    "MPoly", "BiPoly", "PolySeq", "IdentityReport", "IDENTITY_TAGS",
    "hermite_coeff", "laguerre_coeff", "hermite_q", "laguerre_lambda",
    "hermite_seq", "laguerre_seq", "monomial_seq", "umbral_compose",
    "umbral_inverse", "verify_identity", "consistency_nullspace",
    "vandermonde_coeffs", "expansion_coefficient", "ExpansionCoefficient",
    "combi_sum", "rising",
]


def _frac(c) -> Fraction:
    return c if isinstance(c, Fraction) else Fraction(c)


class MPoly:
    """Sparse multivariate polynomial, ``{exponent tuple: Fraction}``."""

    __slots__ = ("nvars", "terms")

    def __init__(self, terms: dict | None = None, nvars: int = 2):
        self.nvars = nvars
        self.terms: dict[tuple[int, ...], Fraction] = {}
        if terms:
            for e, c in terms.items():
                if len(e) != nvars:
                    raise ValueError("exponent length does not match nvars")
                c = _frac(c)
                if c:
                    self.terms[tuple(e)] = c

    @classmethod
    def const(cls, c, nvars: int = 2) -> "MPoly":
        return cls({(0,) * nvars: c}, nvars)

    @classmethod
    def var(cls, i: int, nvars: int) -> "MPoly":
        e = [0] * nvars
        e[i] = 1
        return cls({tuple(e): 1}, nvars)

    @classmethod
    def variables(cls, nvars: int) -> tuple["MPoly", ...]:
        return tuple(cls.var(i, nvars) for i in range(nvars))

    def _coerce(self, other) -> "MPoly":
        if isinstance(other, MPoly):
            if other.nvars != self.nvars:
                raise ValueError("mixing polynomials in different variable counts")
            return other
        return MPoly.const(other, self.nvars)

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            s = out.get(e, 0) + c
            if s:
                out[e] = s
            else:
                out.pop(e, None)
        return MPoly(out, self.nvars)

    __radd__ = __add__

    def __neg__(self):
        return MPoly({e: -c for e, c in self.terms.items()}, self.nvars)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, MPoly):
            c = _frac(other)
            return MPoly({e: c * v for e, v in self.terms.items()}, self.nvars)
        other = self._coerce(other)
        out: dict[tuple[int, ...], Fraction] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0) + c1 * c2
        return MPoly(out, self.nvars)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative power")
        out = MPoly.const(1, self.nvars)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __eq__(self, other):
        if not isinstance(other, MPoly):
            other = MPoly.const(other, self.nvars)
        return self.nvars == other.nvars and self.terms == other.terms

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for e, c in sorted(self.terms.items(), reverse=True):
            mono = "*".join(f"v{i}^{k}" if k > 1 else f"v{i}"
                            for i, k in enumerate(e) if k)
            parts.append(f"{c}" + (f"*{mono}" if mono else ""))
        return " + ".join(parts)

    def coeff(self, exps: Sequence[int]) -> Fraction:
        return self.terms.get(tuple(exps), Fraction(0))

    def is_zero(self) -> bool:
        return not self.terms

    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def subs(self, values: Sequence, nvars: int | None = None) -> "MPoly":
        """Substitute polynomial (or scalar) values for every variable."""
        if len(values) != self.nvars:
            raise ValueError("need one value per variable")
        if nvars is None:
            nvars = next((v.nvars for v in values if isinstance(v, MPoly)), self.nvars)
        vals = [v if isinstance(v, MPoly) else MPoly.const(v, nvars) for v in values]
        cache: dict[tuple[int, int], MPoly] = {}

        def power(i, k):
            key = (i, k)
            if key not in cache:
                cache[key] = vals[i] ** k
            return cache[key]

        out = MPoly({}, nvars)
        for e, c in self.terms.items():
            term = MPoly.const(c, nvars)
            for i, k in enumerate(e):
                if k:
                    term = term * power(i, k)
            out = out + term
        return out

    def evaluate(self, *values):
        """Evaluate at numbers; exact if the inputs are Fractions or ints."""
        if len(values) != self.nvars:
            raise ValueError("need one value per variable")
        total = 0
        for e, c in self.terms.items():
            t = c if all(isinstance(v, (int, Fraction)) for v in values) else float(c)
            for v, k in zip(values, e):
                if k:
                    t = t * v ** k
            total = total + t
        return total

    def truncate(self, keep: Callable[[tuple[int, ...]], bool]) -> "MPoly":
        return MPoly({e: c for e, c in self.terms.items() if keep(e)}, self.nvars)


class BiPoly(MPoly):
    """Polynomial in ``(x, u)``; ``u`` plays the role of a variance."""

    def __init__(self, terms: dict | None = None):
        super().__init__(terms, 2)

    def __call__(self, x, u):
        return self.evaluate(x, u)


def hermite_coeff(n: int, k: int) -> Fraction:
    """Coefficient of ``x^(n-2k) u^k`` in ``Q_n(x, u)``."""
    return Fraction((-1) ** k * factorial(n), 2 ** k * factorial(k) * factorial(n - 2 * k))


def laguerre_coeff(n: int, k: int) -> Fraction:
    """Coefficient of ``x^k u^(n-k)`` in ``Lambda_n(x, u)``, for 1 <= k <= n."""
    return Fraction((-1) ** (n - k) * factorial(n) * factorial(n - 1),
                    factorial(n - k) * factorial(k) * factorial(k - 1))


def hermite_q(n: int) -> BiPoly:
    """Two-variable Hermite polynomial ``Q_n(x, u) = u^(n/2) H_n(x / sqrt(u))``.

    >>> hermite_q(4)(Fraction(2), Fraction(1))   # H_4(2) = 16 - 24 + 3
    Fraction(-5, 1)
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    return BiPoly({(n - 2 * k, k): hermite_coeff(n, k) for k in range(n // 2 + 1)})


def laguerre_lambda(n: int) -> BiPoly:
    """Homogenized generalized Laguerre polynomial of order -1, times n!."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return BiPoly({(0, 0): 1})
    return BiPoly({(k, n - k): laguerre_coeff(n, k) for k in range(1, n + 1)})


@dataclass(frozen=True)
class PolySeq:
    """Polynomial sequence ``P_0..P_N``; ``rows[n][k]`` is the x^k coefficient of P_n."""

    rows: tuple[dict, ...]

    def __post_init__(self):
        for n, row in enumerate(self.rows):
            if any(k > n or k < 0 for k in row):
                raise ValueError(f"row {n} is not triangular")
            if not row.get(n):
                raise ValueError(f"zero diagonal coefficient at degree {n}")

    @property
    def cap(self) -> int:
        return len(self.rows) - 1

    def a(self, k: int, n: int) -> Fraction:
        return self.rows[n].get(k, Fraction(0))

    def poly(self, n: int) -> MPoly:
        return MPoly({(k,): c for k, c in self.rows[n].items()}, 1)

    def __eq__(self, other):
        return isinstance(other, PolySeq) and self.rows == other.rows

    def __hash__(self):
        return hash(tuple(frozenset(r.items()) for r in self.rows))

    @classmethod
    def from_rows(cls, rows: Iterable[Iterable]) -> "PolySeq":
        out = []
        for row in rows:
            out.append({k: _frac(c) for k, c in enumerate(row) if c})
        return cls(tuple(out))


def _seq_from_bipoly(family: Callable[[int], BiPoly], u, cap: int) -> PolySeq:
    u = _frac(u)
    rows = []
    for n in range(cap + 1):
        row: dict[int, Fraction] = {}
        for (i, j), c in family(n).terms.items():
            row[i] = row.get(i, 0) + c * u ** j
        rows.append({k: c for k, c in row.items() if c})
    return PolySeq(tuple(rows))


def monomial_seq(cap: int) -> PolySeq:
    return PolySeq(tuple({n: Fraction(1)} for n in range(cap + 1)))


def hermite_seq(u, cap: int) -> PolySeq:
    """The sequence ``Q_n(., u)`` for a fixed rational variance ``u``."""
    return _seq_from_bipoly(hermite_q, u, cap)


def laguerre_seq(u, cap: int) -> PolySeq:
    return _seq_from_bipoly(laguerre_lambda, u, cap)


def umbral_compose(P: PolySeq, R: PolySeq) -> PolySeq:
    """``(P o R)_n = sum_k r[k][n] P_k``."""
    if P.cap != R.cap:
        raise ValueError("degree caps differ")
    rows = []
    for n in range(R.cap + 1):
        row: dict[int, Fraction] = {}
        for k, r in R.rows[n].items():
            for i, p in P.rows[k].items():
                row[i] = row.get(i, 0) + r * p
        rows.append({i: c for i, c in row.items() if c})
    return PolySeq(tuple(rows))


def umbral_inverse(P: PolySeq) -> PolySeq:
    """Right inverse by triangular back-substitution (it is two-sided in a group)."""
    rows = []
    for n in range(P.cap + 1):
        s: dict[int, Fraction] = {}
        for i in range(n, -1, -1):
            acc = Fraction(1 if i == n else 0)
            for k, sk in s.items():
                acc -= sk * P.a(i, k)
            if acc:
                s[i] = acc / P.a(i, i)
        rows.append(s)
    return PolySeq(tuple(rows))


def rising(a: Fraction, j: int) -> Fraction:
    """Rising factorial a (a+1) ... (a+j-1)."""
    out = Fraction(1)
    for l in range(j):
        out *= a + l
    return out


def combi_sum(n: int, j: int) -> Fraction:
    """The alternating sum that must equal 0 for j < n//2 and 1 for j = n//2 (n odd)."""
    m = n // 2
    total = Fraction(0)
    for k in range(m + 1):
        num = (-1) ** (j + k) * factorial(n) * factorial(2 * (n - 1 - k - j))
        den = factorial(n - 2 * k) * factorial(k) * factorial(n - 1 - k - j) * factorial(j)
        total += Fraction(num, den)
    return total / 2 ** (n - 1)


# ---------------------------------------------------------------------------
# identity verification

@dataclass
class IdentityReport:
    identity: str
    n_max: int
    passed: bool
    per_n: dict = field(default_factory=dict)
    first_failure: dict | None = None

    def to_json(self) -> dict:
        return {"identity": self.identity, "n_max": self.n_max, "pass": self.passed,
                "first_failure": self.first_failure,
                "per_n": {str(k): v for k, v in self.per_n.items()}}


def _compare(lhs: MPoly, rhs: MPoly, n: int, report: IdentityReport):
    diff = lhs - rhs
    ok = diff.is_zero()
    report.per_n[n] = ok
    if not ok and report.first_failure is None:
        mono = min(diff.terms)
        report.first_failure = {"n": n, "monomial": list(mono),
                                "lhs": str(lhs.coeff(mono)), "rhs": str(rhs.coeff(mono))}


def _check_change_var(n_max, rep):
    x, u1, u2 = MPoly.variables(3)
    for n in range(n_max + 1):
        lhs = hermite_q(n).subs([x, u1 + u2])
        rhs = MPoly({}, 3)
        for k in range(n // 2 + 1):
            rhs = rhs + hermite_coeff(n, k) * hermite_q(n - 2 * k).subs([x, u1]) * u2 ** k
        _compare(lhs, rhs, n, rep)


def _check_binomial(n_max, rep):
    x, y, u = MPoly.variables(3)
    for n in range(n_max + 1):
        lhs = hermite_q(n).subs([x + y, u])
        rhs = MPoly({}, 3)
        for j in range(n + 1):
            rhs = rhs + comb(n, j) * hermite_q(j).subs([x, u]) * y ** (n - j)
        _compare(lhs, rhs, n, rep)


def _check_exp_gen(n_max, rep):
    g, x, u = MPoly.variables(3)
    low = lambda e: e[0] <= n_max
    expo = g * x - Fraction(1, 2) * g ** 2 * u
    rhs = MPoly({}, 3)
    term = MPoly.const(1, 3)
    for m in range(n_max + 1):
        rhs = rhs + term * Fraction(1, factorial(m))
        term = (term * expo).truncate(low)
    lhs = MPoly({}, 3)
    for n in range(n_max + 1):
        lhs = lhs + hermite_q(n).subs([x, u]) * g ** n * Fraction(1, factorial(n))
    for n in range(n_max + 1):
        pick = lambda e, n=n: e[0] == n
        _compare(lhs.truncate(pick), rhs.truncate(pick), n, rep)


def _check_two_var(n_max, rep):
    x1, x2, u1, u2 = MPoly.variables(4)
    for n in range(n_max + 1):
        lhs = hermite_q(n).subs([x1 + x2, u1 + u2])
        rhs = MPoly({}, 4)
        for j in range(n + 1):
            rhs = rhs + comb(n, j) * hermite_q(n - j).subs([x1, u1]) * hermite_q(j).subs([x2, u2])
        _compare(lhs, rhs, n, rep)


def _check_laguerre_norm(n_max, rep):
    x, u1, u2 = MPoly.variables(3)
    for n in range(1, n_max + 1):
        lhs = laguerre_lambda(n).subs([x, u1 + u2])
        rhs = MPoly({}, 3)
        for k in range(1, n + 1):
            rhs = rhs + laguerre_coeff(n, k) * laguerre_lambda(k).subs([x, u1]) * u2 ** (n - k)
        _compare(lhs, rhs, n, rep)


def _hermite_reexp_sides(coeffs: Sequence, K: int) -> tuple[MPoly, MPoly]:
    """Both sides of the half-integer reexpansion in (w, y, X), X standing for 1/x.

    The common factor x^(-1/2) is dropped. Terms of order > K in X are discarded.
    """
    w, y, X = MPoly.variables(3)
    lhs = MPoly({}, 3)
    rhs = MPoly({}, 3)
    for k in range(K + 1):
        a = _frac(coeffs[k])
        if not a:
            continue
        # (1 - y/x)^-(k+1/2) as a binomial series
        series = MPoly({}, 3)
        for j in range(K - k + 1):
            series = series + rising(Fraction(2 * k + 1, 2), j) / factorial(j) * y ** j * X ** j
        lhs = lhs + a * w ** (2 * k + 1) * X ** k * series
        rhs = rhs + a * hermite_q(2 * k + 1).subs([w, y]) * X ** k
    return lhs, rhs


def _laguerre_reexp_sides(coeffs: dict, K: int) -> tuple[MPoly, MPoly]:
    """Both sides of the integer-power reexpansion in (w, y, X), X = 1/x."""
    w, y, X = MPoly.variables(3)
    lhs = MPoly({}, 3)
    rhs = MPoly({}, 3)
    for n in range(1, K + 1):
        a = _frac(coeffs.get(n, 0))
        if not a:
            continue
        series = MPoly({}, 3)
        for m in range(K - n + 1):
            series = series + comb(m + n - 1, m) * y ** m * X ** m
        lhs = lhs + a * w ** n * X ** n * series
        rhs = rhs + a * laguerre_lambda(n).subs([w, y]) * X ** n
    return lhs, rhs


def _hermite_reexp_coeff(k: int) -> Fraction:
    return Fraction((-1) ** k, 2 ** k * factorial(k)) / Fraction(2 * k + 1, 2)


def _check_reexp_hermite(n_max, rep):
    lhs, rhs = _hermite_reexp_sides([_hermite_reexp_coeff(k) for k in range(n_max + 1)], n_max)
    for n in range(n_max + 1):
        pick = lambda e, n=n: e[2] == n
        _compare(lhs.truncate(pick), rhs.truncate(pick), n, rep)


def _check_reexp_laguerre(n_max, rep):
    coeffs = {n: Fraction((-1) ** (n - 1), factorial(n)) for n in range(1, n_max + 1)}
    lhs, rhs = _laguerre_reexp_sides(coeffs, n_max)
    for n in range(1, n_max + 1):
        pick = lambda e, n=n: e[2] == n
        _compare(lhs.truncate(pick), rhs.truncate(pick), n, rep)


def _check_combi(n_max, rep):
    for n in range(1, n_max + 1, 2):
        m = n // 2
        one = MPoly.const(1, 1)
        for j in range(m + 1):
            target = 1 if j == m else 0
            _compare(one * combi_sum(n, j), one * target, n, rep)


_CHECKS = {
    "change_var": _check_change_var,
    "binomial": _check_binomial,
    "exp_gen": _check_exp_gen,
    "two_var": _check_two_var,
    "laguerre_norm": _check_laguerre_norm,
    "reexp_hermite": _check_reexp_hermite,
    "reexp_laguerre": _check_reexp_laguerre,
    "combi": _check_combi,
}
IDENTITY_TAGS = tuple(_CHECKS)


def verify_identity(tag: str, n_max: int) -> IdentityReport:
    """Check one polynomial or formal-series identity exactly, degree by degree.

    >>> verify_identity("change_var", 6).passed
    True
    """
    if tag not in _CHECKS:
        raise KeyError(f"unknown identity tag {tag!r}; known: {', '.join(IDENTITY_TAGS)}")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    rep = IdentityReport(tag, n_max, True)
    _CHECKS[tag](n_max, rep)
    rep.passed = all(rep.per_n.values())
    return rep


# ---------------------------------------------------------------------------
# consistency nullspaces

def _nullspace(rows: list[list[Fraction]], ncols: int) -> list[list[Fraction]]:
    """Exact nullspace by Gauss-Jordan elimination."""
    m = [list(r) for r in rows]
    pivots = []
    r = 0
    for c in range(ncols):
        p = next((i for i in range(r, len(m)) if m[i][c]), None)
        if p is None:
            continue
        m[r], m[p] = m[p], m[r]
        inv = 1 / m[r][c]
        m[r] = [v * inv for v in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c]:
                f = m[i][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == len(m):
            break
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for f in free:
        vec = [Fraction(0)] * ncols
        vec[f] = Fraction(1)
        for i, pc in enumerate(pivots):
            vec[pc] = -m[i][f]
        basis.append(vec)
    return basis


def consistency_nullspace(kind: str, N: int) -> list[tuple[Fraction, ...]]:
    """Solution space of the truncated reexpansion-consistency system.

    Unknowns are ``a_0..a_N`` (hermite) or ``a_1..a_N`` (laguerre). The system
    is built by matching coefficients of the two sides for every unit vector,
    so the closed-form solution is not used anywhere in the construction.
    Each basis vector is scaled to have first entry 1.
    """
    if N < 2:
        raise ValueError("N must be >= 2")
    if kind == "hermite":
        idx = list(range(N + 1))
        def sides(i):
            e = [0] * (N + 1)
            e[i] = 1
            return _hermite_reexp_sides(e, N)
    elif kind == "laguerre":
        idx = list(range(1, N + 1))
        def sides(i):
            return _laguerre_reexp_sides({i: 1}, N)
    else:
        raise ValueError("kind must be 'hermite' or 'laguerre'")
    diffs = [(lambda s: s[0] - s[1])(sides(i)) for i in idx]
    monos = sorted({e for d in diffs for e in d.terms})
    rows = [[d.coeff(e) for d in diffs] for e in monos]
    basis = _nullspace(rows, len(idx))
    out = []
    for b in basis:
        lead = next(v for v in b if v)
        out.append(tuple(v / lead for v in b))
    return out


# ---------------------------------------------------------------------------
# multi-scale coefficients

def vandermonde_coeffs(alphas: Sequence, n: int, dps: int = 60) -> tuple:
    """Solve ``sum_i c_i alpha_i^-(k+1/2) = [k == n]`` for k = 0..n.

    Returns mpmath numbers. The solve is repeated at a higher precision and the
    two answers must agree to 1e-40, which certifies well over 30 digits.
    """
    alphas = [mpmath.mpf(Fraction(a).numerator) / Fraction(a).denominator
              if not isinstance(a, mpmath.mpf) else a for a in alphas]
    if len(alphas) != n + 1:
        raise ValueError("need exactly n+1 scale factors")
    if alphas[0] != 1:
        raise ValueError("the first scale factor must be 1")
    if any(b <= a for a, b in zip(alphas, alphas[1:])):
        raise ValueError("scale factors must be strictly increasing")

    def solve(prec):
        with mpmath.workdps(prec):
            al = [mpmath.mpf(a) for a in alphas]
            A = mpmath.matrix(n + 1, n + 1)
            for k in range(n + 1):
                for i, a in enumerate(al):
                    A[k, i] = a ** (-(k + mpmath.mpf(1) / 2))
            b = mpmath.matrix(n + 1, 1)
            b[n] = 1
            return [+c for c in mpmath.lu_solve(A, b)]

    coarse = solve(dps)
    fine = solve(dps + 30)
    with mpmath.workdps(dps + 30):
        err = max(abs(a - b) for a, b in zip(coarse, fine))
    if err > mpmath.mpf(10) ** -40:
        raise ArithmeticError(f"vandermonde solve not certified (gap {err})")
    with mpmath.workdps(dps):
        return tuple(+c for c in fine)


@dataclass(frozen=True)
class ExpansionCoefficient:
    """``rational / sqrt(2 pi)``; the irrational prefactor is kept symbolic."""

    k: int
    rational: Fraction
    prefactor: str = "1/sqrt(2*pi)"

    def __float__(self):
        return float(self.rational) / float(mpmath.sqrt(2 * mpmath.pi))


def expansion_coefficient(k: int) -> ExpansionCoefficient:
    """Coefficient of the k-th half-integer power: (-1)^k / (2^k k! (k+1/2))."""
    if k < 0:
        raise ValueError("k must be >= 0")
    return ExpansionCoefficient(k, _hermite_reexp_coeff(k))
