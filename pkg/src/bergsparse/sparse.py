"""Sparse forms over the three shifted dyadic grids, maximal operators, tails.

All box integrals of ``|f|**r`` over a truncated collection come from one
hierarchical table per grid: the integral over ``Q_I`` is the integral over
its top Whitney rectangle plus the integrals over the two child boxes, and the
lowest level is integrated directly (Gauss-Legendre in ``x``, Gauss-Jacobi in
``y`` so the ``y**alpha`` weight is exact). Summation runs in the fixed order
(grid, level descending, left ascending) through ``math.fsum``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.special import roots_jacobi

from .carleson import TestFunction, apex_spec, map_ordered
from .geometry import (GRID_SHIFTS, Interval, ShiftedDyadicGrid, TruncatedBoxCollection,
                       _offset3)
from .quadrature import (Box, IntegralEstimate, QuadratureSpec, as_box, check_alpha,
                         integrate, integrate_halfplane, measure_alpha, pullback_measure)

__all__ = [
    "BoxTables",
    "ExhaustingFamily",
    "ExponentWindow",
    "SparseFormParams",
    "SparseFormResult",
    "SparseEngine",
    "compactness_tail",
    "default_collections",
    "default_corpus",
    "dyadic_maximal",
    "fractional_maximal",
    "fractional_sparse_form",
    "gamma_average",
    "kernel_domination_check",
    "operator_norm_q",
    "operator_vs_sparse",
    "sparse_form",
    "sparse_infimum",
    "unweighted_sparse_form",
    "z_pq",
]

DUMP_COLUMNS = ("grid", "level", "left", "mu_term", "measure_term", "avg1", "avg2", "summand")


@dataclass(frozen=True)
class SparseFormParams:
    N: int
    gamma: float
    p: float
    q: float

    def __post_init__(self):
        if not (self.q >= self.p >= 1):
            raise ValueError("need q >= p >= 1")
        if not (isinstance(self.N, int) and self.N >= 1):
            raise ValueError("N must be a positive integer")
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")

    @property
    def gamma_prime(self) -> float:
        return math.inf if self.gamma == 1 else self.gamma / (self.gamma - 1)

    @property
    def mu_exponent(self) -> float:
        # 1/gamma'; zero at gamma = 1
        return 1.0 - 1.0 / self.gamma

    def check_general(self):
        if self.N > self.p:
            raise ValueError(f"need 1 <= N <= p, got N={self.N}, p={self.p}")
        return self

    def compactness_ok(self) -> bool:
        q, N, g = self.q, self.N, self.gamma
        if N < q:
            return 1 < g < q / (q - N)
        return N == q and g > 1


def z_pq(p: float, q: float) -> list[int]:
    """``{N >= 1 : N < p < q < p + N}`` by enumeration."""
    return [N for N in range(1, math.ceil(q) + 2) if N < p < q < p + N]


@dataclass(frozen=True)
class ExponentWindow:
    p: float
    q: float

    @property
    def admissible(self) -> list[int]:
        return z_pq(self.p, self.q)


@dataclass(frozen=True)
class ExhaustingFamily:
    """``K_n = [-n, n] x [1/n, n]``."""

    def K(self, n: int) -> tuple[float, float, float, float]:
        if n < 1:
            raise ValueError("n must be >= 1")
        return (-float(n), float(n), 1.0 / n, float(n))

    def contains(self, n: int, z: complex) -> bool:
        x0, x1, y0, y1 = self.K(n)
        return x0 <= z.real <= x1 and y0 <= z.imag <= y1

    def up_misses(self, n: int, lefts: np.ndarray, ell: float) -> np.ndarray:
        """Mask of ``Q_I^up = I x [ell/2, ell)`` disjoint from ``K_n``."""
        x0, x1, y0, y1 = self.K(n)
        y_meet = (ell / 2 <= y1) and (ell > y0)
        x_meet = (lefts <= x1) & (lefts + ell > x0)
        return ~(x_meet & y_meet)


def default_collections(level_min: int = -8, level_max: int = 6,
                        window: tuple[float, float] = (-64, 64)) -> list[TruncatedBoxCollection]:
    w = Interval(Fraction(window[0]), Fraction(window[1]) - Fraction(window[0]))
    return [TruncatedBoxCollection(g, level_min, level_max, w) for g in sorted(GRID_SHIFTS)]


def _measure(alpha: float, ell: float) -> float:
    return 2**alpha / math.pi * ell ** (alpha + 2)


class BoxTables:
    """Index ranges and left endpoints per level for one truncated collection.

    Ranges below the top level cover every descendant of a window cell, so the
    hierarchical recursion never reaches outside the table.
    """

    def __init__(self, collection: TruncatedBoxCollection):
        self.collection = c = collection
        g = c.grid
        self.levels = list(range(c.level_max, c.level_min - 1, -1))
        self.first: dict[int, int] = {}
        self.index: dict[int, np.ndarray] = {}
        self.lefts: dict[int, np.ndarray] = {}
        self.in_window: dict[int, np.ndarray] = {}
        if c.level_min > c.level_max:
            return
        top = c.cells_at(c.level_max)
        lo, hi = top[0].index, top[-1].index
        for j in self.levels:
            if j < c.level_max:
                off = _offset3(g, j + 1)
                lo, hi = 2 * lo + off, 2 * hi + off + 1
            idx = np.arange(lo, hi + 1)
            win = c.cells_at(j)
            self.first[j] = lo
            self.index[j] = idx
            self.lefts[j] = 2.0**j * (idx + _offset3(g, j) / 3)
            self.in_window[j] = (idx >= win[0].index) & (idx <= win[-1].index)

    def children(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        c0 = 2 * self.index[j] + _offset3(self.collection.grid, j) - self.first[j - 1]
        return c0, c0 + 1

    def locate(self, j: int, x: float) -> int | None:
        """Row of the window cell at level ``j`` whose base contains ``x``."""
        cell = ShiftedDyadicGrid(self.collection.grid).locate(Fraction(x), j)
        k = cell.index - self.first[j]
        if 0 <= k < len(self.index[j]) and self.in_window[j][k]:
            return k
        return None


def _powers_integrand(f, rs: Sequence[float]):
    """Vectorised ``z -> stack(|f(z)|**r for r in rs)`` along a trailing axis."""
    if f is None:
        return lambda Z: np.ones(Z.shape + (len(rs),))
    if isinstance(f, TestFunction):
        a = f.apex
        ks = [f.exponent * r / 2 for r in rs]
        cs = [a.imag ** ((f.alpha + 2) * r / f.t) for r in rs]

        def g(Z):
            d2 = (Z.real - a.real) ** 2 + (Z.imag + a.imag) ** 2
            ld = np.log(d2)
            return np.stack([c * np.exp(-k * ld) if r else np.ones_like(d2)
                             for c, k, r in zip(cs, ks, rs)], axis=-1)
        return g

    def g(Z):
        m = np.abs(np.broadcast_to(f(Z), Z.shape))
        return np.stack([m**r if r else np.ones_like(m) for r in rs], axis=-1)
    return g


class SparseEngine:
    """Box integrals of ``|f|**r`` over every box of one or more collections.

    ``order`` is the number of Gauss points per direction on each half of an
    upper rectangle (the halves are squares) and on each lowest-level box.
    """

    chunk = 2048

    def __init__(self, f, alpha, collections: Sequence[TruncatedBoxCollection], order: int = 8):
        self.f = f
        self.alpha = check_alpha(alpha)
        self.collections = list(collections)
        self.tables = [BoxTables(c) for c in self.collections]
        self.order = order
        t, w = np.polynomial.legendre.leggauss(order)
        self._t, self._w = t, w
        tj, wj = roots_jacobi(order, 0.0, self.alpha)
        self._tj, self._wj = tj, wj
        self._cache: dict[float, list[dict[int, np.ndarray]]] = {}

    def prepare(self, rs: Sequence[float]):
        todo = sorted({float(r) for r in rs if float(r) not in self._cache})
        if not todo:
            return
        g = _powers_integrand(self.f, todo)
        for k, r in enumerate(todo):
            self._cache[r] = [dict() for _ in self.tables]
        for gi, T in enumerate(self.tables):
            box: dict[int, np.ndarray] = {}
            for j in reversed(T.levels):
                ell = 2.0**j
                if j == T.collection.level_min:
                    vals = self._chunked(self._bottom, g, T.lefts[j], ell)
                else:
                    c0, c1 = T.children(j)
                    vals = self._chunked(self._upper, g, T.lefts[j], ell) + box[j - 1][c0] + box[j - 1][c1]
                box[j] = vals
            for k, r in enumerate(todo):
                self._cache[r][gi] = {j: v[:, k].copy() for j, v in box.items()}

    def _chunked(self, rule, g, lefts, ell):
        out = [rule(g, lefts[s:s + self.chunk], ell) for s in range(0, len(lefts), self.chunk)]
        return np.concatenate(out) if out else np.zeros((0, 1))

    def _upper(self, g, lefts, ell):
        # I x [ell/2, ell) as two squares of side ell/2
        a, t, w = self.alpha, self._t, self._w
        h = ell / 4
        xs = np.concatenate([h + h * t, 3 * h + h * t])
        X = lefts[:, None] + xs[None, :]
        Y = 3 * h + h * t
        wy = w * (a + 1) / math.pi * (2 * Y) ** a
        W = np.outer(np.concatenate([w, w]), wy) * h * h
        Z = X[:, :, None] + 1j * Y[None, None, :]
        return np.einsum("cxyr,xy->cr", g(Z), W)

    def _bottom(self, g, lefts, ell):
        a, t, w = self.alpha, self._t, self._w
        h = ell / 2
        X = lefts[:, None] + (h + h * t)[None, :]
        Y = h * (1 + self._tj)
        W = np.outer(w * h, self._wj) * (a + 1) / math.pi * 2**a * h ** (a + 1)
        Z = X[:, :, None] + 1j * Y[None, None, :]
        return np.einsum("cxyr,xy->cr", g(Z), W)

    def box_integral(self, r: float, grid_index: int, level: int) -> np.ndarray:
        r = float(r)
        if r not in self._cache:
            self.prepare([r])
        return self._cache[r][grid_index][level]


def _mu_function(u, phi, q: float, alpha: float, spec: QuadratureSpec | None):
    """``(level, lefts) -> mu_{u,phi,q,alpha}(Q_I)`` per box, plus a convergence flag holder."""
    const = u.constant() if hasattr(u, "constant") else None
    aff = phi.affine() if hasattr(phi, "affine") else None
    state = {"converged": True}
    if const is not None and aff is not None and aff[0].imag == 0 and aff[0].real > 0:
        k, b = aff[0].real, aff[1]
        uq = abs(const) ** q

        def mu(level, lefts):
            ell = 2.0**level
            y1 = (ell - b.imag) / k
            if y1 <= 0 or uq == 0:
                return np.zeros(len(lefts))
            y0 = max(-b.imag / k, 0.0)
            m = uq * (ell / k) * 2**alpha / math.pi * (y1 ** (alpha + 1) - y0 ** (alpha + 1))
            return np.full(len(lefts), m)
        return mu, state

    def mu(level, lefts):
        ell = 2.0**level
        out = []
        for L in lefts:
            est = pullback_measure(Box(L, L + ell, 0.0, ell), u, phi, q, alpha, spec)
            state["converged"] = state["converged"] and est.converged
            out.append(est.value)
        return np.asarray(out)
    return mu, state


@dataclass
class SparseFormResult:
    value: float
    per_grid: list[float]
    boxes: int
    converged: bool
    N: int
    gamma: float
    rows: list[tuple] | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"value": self.value, "per_grid": self.per_grid, "boxes": self.boxes,
                "converged": self.converged, "N": self.N, "gamma": self.gamma}


def _form(engine: SparseEngine, N: int, q: float, gamma: float, mu_exp: float, meas_exp: float,
          mu_fn=None, mask_fn: Callable | None = None, dump: bool = False) -> SparseFormResult:
    alpha = engine.alpha
    r1, r2 = float(N), float(gamma * (q - N))
    engine.prepare([r1, r2])
    per_grid, rows, count = [], [] if dump else None, 0
    all_terms = []
    for gi, T in enumerate(engine.tables):
        terms = []
        for j in T.levels:
            ell = 2.0**j
            keep = T.in_window[j].copy()
            lefts_all = T.lefts[j]
            if mask_fn is not None:
                keep &= mask_fn(lefts_all, ell)
            if not keep.any():
                continue
            lefts = lefts_all[keep]
            A = _measure(alpha, ell)
            avg1 = engine.box_integral(r1, gi, j)[keep] / A
            if r2 == 0:
                avg2 = np.ones_like(avg1)
            else:
                avg2 = (engine.box_integral(r2, gi, j)[keep] / A) ** (1.0 / gamma)
            if mu_exp == 0 or mu_fn is None:
                mu_term = np.ones_like(avg1)
            else:
                mu_term = mu_fn(j, lefts) ** mu_exp
            meas_term = A**meas_exp
            s = mu_term * meas_term * avg1 * avg2
            terms.append(s)
            count += len(s)
            if dump:
                grid = T.collection.grid
                rows.extend((grid, j, float(L), float(m), meas_term, float(a1), float(a2), float(v))
                            for L, m, a1, a2, v in zip(lefts, mu_term, avg1, avg2, s))
        flat = np.concatenate(terms) if terms else np.zeros(0)
        per_grid.append(math.fsum(flat))
        all_terms.append(flat)
    value = math.fsum(np.concatenate(all_terms)) if all_terms else 0.0
    return SparseFormResult(value, per_grid, count, True, N, gamma, rows)


def sparse_form(f, u, phi, params: SparseFormParams, alpha,
                collections: Sequence[TruncatedBoxCollection] | None = None,
                spec: QuadratureSpec | None = None, engine: SparseEngine | None = None,
                dump: bool = False) -> SparseFormResult:
    """Truncated ``sum mu(Q)**(1/gamma') A(Q)**(q/(p gamma)) <|f|^N>_Q <|f|^(q-N)>_{Q,gamma}``.

    At ``gamma = 1`` the exponent ``1/gamma'`` is zero and the mu factor is 1.
    """
    alpha = check_alpha(alpha)
    params.check_general()
    engine = engine or SparseEngine(f, alpha, collections or default_collections())
    mu_fn, state = _mu_function(u, phi, params.q, alpha, spec)
    res = _form(engine, params.N, params.q, params.gamma, params.mu_exponent,
                params.q / (params.p * params.gamma), mu_fn, dump=dump)
    res.converged = state["converged"]
    return res


def unweighted_sparse_form(f, N: int, q: float, alpha,
                           collections: Sequence[TruncatedBoxCollection] | None = None,
                           engine: SparseEngine | None = None, dump: bool = False) -> SparseFormResult:
    """``sum A(Q) <|f|^N>_Q <|f|^(q-N)>_Q`` for a single ``N``."""
    alpha = check_alpha(alpha)
    if not 1 <= N <= q:
        raise ValueError("need 1 <= N <= q")
    engine = engine or SparseEngine(f, alpha, collections or default_collections())
    return _form(engine, N, q, 1.0, 0.0, 1.0, dump=dump)


def fractional_sparse_form(f, N: int, p: float, q: float, alpha,
                           collections: Sequence[TruncatedBoxCollection] | None = None,
                           engine: SparseEngine | None = None, dump: bool = False) -> SparseFormResult:
    """``sum A(Q)**(q/p) <|f|^N>_Q <|f|^(q-N)>_Q`` for ``N`` in ``Z_{p,q}``."""
    alpha = check_alpha(alpha)
    adm = z_pq(p, q)
    if not adm:
        raise ValueError(f"no admissible N for p={p}, q={q}: need N >= 1, N<p<q<p+N")
    if N not in adm:
        raise ValueError(f"N={N} not admissible for p={p}, q={q}: need N >= 1, N<p<q<p+N")
    engine = engine or SparseEngine(f, alpha, collections or default_collections())
    return _form(engine, N, q, 1.0, 0.0, q / p, dump=dump)


def sparse_infimum(f, u, phi, p: float, q: float, gamma: float, alpha,
                   collections=None, spec=None, engine=None) -> dict:
    """All admissible ``N = 1..floor(p)`` and the minimum over them."""
    alpha = check_alpha(alpha)
    engine = engine or SparseEngine(f, alpha, collections or default_collections())
    per_n = {}
    conv = True
    for N in range(1, int(math.floor(p)) + 1):
        r = sparse_form(f, u, phi, SparseFormParams(N, gamma, p, q), alpha, spec=spec, engine=engine)
        per_n[N] = r.value
        conv = conv and r.converged
    best = min(per_n, key=lambda n: (per_n[n], n))
    return {"per_N": per_n, "N": best, "value": per_n[best], "converged": conv}


def gamma_average(f, E, gamma: float, alpha, spec: QuadratureSpec | None = None) -> float:
    """``((1/A(E)) * integral over E of |f|**gamma)**(1/gamma)``."""
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    alpha = check_alpha(alpha)
    spec = spec or QuadratureSpec()
    b = as_box(E)
    A = measure_alpha(b, alpha)
    if A <= 0:
        raise ValueError("region has zero measure")
    est = integrate(lambda z: np.abs(np.broadcast_to(f(z), np.shape(z))) ** gamma, alpha, b,
                    spec.with_(focus=((b.x0, b.y1 - b.y0),)))
    return (est.value / A) ** (1 / gamma)


def _containing(T: BoxTables, z: complex):
    for j in T.levels:
        k = T.locate(j, z.real)
        if k is not None and z.imag < 2.0**j:
            yield j, k


def operator_norm_q(f, u, phi, q: float, alpha, spec: QuadratureSpec | None = None) -> IntegralEstimate:
    """``||u * (f o phi)||_{q,alpha}**q`` by quadrature."""
    alpha = check_alpha(alpha)
    spec = spec or QuadratureSpec()
    if hasattr(u, "constant") and u.constant() == 0:
        return IntegralEstimate.exact(0.0)
    if isinstance(f, TestFunction):
        integrand = lambda z: np.abs(u(z)) ** q * f.abs_pow(phi(z), q)
        aff = phi.affine() if hasattr(phi, "affine") else None
        decay = f.exponent * q if aff is not None and u.constant() is not None else None
        if spec.tail_model == "power_law" and spec.decay:
            decay = spec.decay
        s = apex_spec(spec, phi, f.apex, decay)
    else:
        integrand = lambda z: np.abs(u(z) * f(phi(z))) ** q
        s = spec
    return integrate_halfplane(integrand, alpha, s)


def default_corpus(p: float, alpha: float = 0.0) -> list[TestFunction]:
    """Twelve test functions ``f_{a,p}`` with ``x_a`` in {-4, 0, 4}, ``y_a`` in {1/8, 1/2, 2, 8}."""
    return [TestFunction(complex(x, y), p, alpha) for y in (0.125, 0.5, 2.0, 8.0) for x in (-4.0, 0.0, 4.0)]


def operator_vs_sparse(corpus: Sequence, u, phi, p: float, q: float, alpha, gamma: float = 1.0,
                       collections=None, spec: QuadratureSpec | None = None,
                       threads: int = 1, cache: dict | None = None) -> dict:
    """``||W f||_q^q``, the infimum over ``N`` of the sparse form, and their ratio per function.

    ``cache`` (any dict) memoises sparse infima between calls. At ``gamma = 1``
    the form does not involve ``(u, phi)``, so scenarios sharing exponents and
    collections share entries.
    """
    alpha = check_alpha(alpha)
    collections = collections or default_collections()
    cache = {} if cache is None else cache

    def rhs_of(f):
        key = (f, tuple(collections), p, q, gamma, alpha)
        if gamma != 1:
            key += (u, phi)
        if key not in cache:
            cache[key] = sparse_infimum(f, u, phi, p, q, gamma, alpha, collections, spec)
        return cache[key]

    def one(f):
        lhs = operator_norm_q(f, u, phi, q, alpha, spec)
        rhs = rhs_of(f)
        ratio = lhs.value / rhs["value"] if rhs["value"] > 0 else (0.0 if lhs.value == 0 else math.inf)
        return {"lhs": lhs.value, "lhs_error": lhs.error_bound, "rhs": rhs["value"], "N": rhs["N"],
                "ratio": ratio, "converged": lhs.converged and rhs["converged"]}

    rows = map_ordered(one, list(corpus), threads)
    ratios = [r["ratio"] for r in rows]
    pos = [r for r in ratios if r > 0]
    return {
        "rows": rows,
        "max_ratio": max(ratios) if ratios else 0.0,
        "spread": (max(pos) / min(pos)) if pos else 1.0,
        "converged": all(r["converged"] for r in rows),
    }


def kernel_domination_check(f, u, phi, q: float, N: int, gamma: float, alpha, zeta: complex,
                            collections=None, spec: QuadratureSpec | None = None,
                            p: float | None = None, engine: SparseEngine | None = None) -> dict:
    """Both sides of the kernel-domination inequality on the same truncation.

    LHS: ``integral |f|**(q-N) / |conj(zeta) - z|**(alpha+2) dmu``, with ``mu``
    the pullback measure restricted to the truncation. RHS: the sparse sum over
    boxes containing ``zeta``. ``f=None`` stands for ``f = 1``.
    """
    alpha = check_alpha(alpha)
    p = q if p is None else p
    spec = spec or QuadratureSpec(rel_tol=1e-6)
    collections = collections or default_collections()
    engine = engine or SparseEngine(f, alpha, collections)
    zeta = complex(zeta)
    # truncation box in the target: window x (0, 2**level_max]
    c0 = collections[0]
    x0, x1 = c0.window.as_float()
    top = 2.0**max(c.level_max for c in collections)
    target = Box(x0, x1, 0.0, top)
    r = gamma * (q - N)

    def lhs_integrand(w):
        v = phi(w)
        inside = (v.real >= target.x0) & (v.real < target.x1) & (v.imag < target.y1)
        fv = 1.0 if f is None or q == N else np.abs(np.broadcast_to(f(v), v.shape)) ** (q - N)
        return np.where(inside, fv * np.abs(u(w)) ** q / np.abs(np.conj(zeta) - v) ** (alpha + 2), 0.0)

    aff = phi.affine() if hasattr(phi, "affine") else None
    if aff is not None and aff[0].imag == 0 and aff[0].real > 0:
        k, b = aff[0].real, aff[1]
        y1 = (target.y1 - b.imag) / k
        region = Box((target.x0 - b.real) / k, (target.x1 - b.real) / k, 0.0, max(y1, 1e-300))
        s = spec.with_(focus=tuple(spec.focus) + (((zeta.real - b.real) / k, max(zeta.imag, 1e-3)),))
    else:
        region = target
        s = spec.with_(focus=tuple(spec.focus) + ((zeta.real, zeta.imag),))
    lhs = integrate(lhs_integrand, alpha, region, s)

    mu_fn, state = _mu_function(u, phi, q, alpha, spec)
    engine.prepare([r])
    terms = []
    for gi, T in enumerate(engine.tables):
        for j, k in _containing(T, zeta):
            ell = 2.0**j
            A = _measure(alpha, ell)
            mu = float(mu_fn(j, T.lefts[j][k:k + 1])[0]) if gamma > 1 else 1.0
            integ = engine.box_integral(r, gi, j)[k] if r else A
            terms.append(A ** ((q / p - 1) / gamma - 1) * mu ** (1 - 1 / gamma) * integ ** (1 / gamma))
    rhs = math.fsum(terms)
    ratio = lhs.value / rhs if rhs > 0 else None
    return {"lhs": lhs.value, "rhs": rhs, "ratio": ratio, "boxes": len(terms),
            "converged": lhs.converged and state["converged"]}


def _maximal(f, grid: int, z: complex, alpha: float, collection: TruncatedBoxCollection,
             weight: Callable[[float, float], float], gamma: float, spec: QuadratureSpec | None):
    spec = spec or QuadratureSpec(rel_tol=1e-7)
    T = BoxTables(collection if collection.grid == grid else
                  TruncatedBoxCollection(grid, collection.level_min, collection.level_max,
                                         collection.window))
    best = 0.0
    for j, k in _containing(T, complex(z)):
        ell = 2.0**j
        L = float(T.lefts[j][k])
        b = Box(L, L + ell, 0.0, ell)
        est = integrate(lambda w: np.abs(np.broadcast_to(f(w), np.shape(w))) ** gamma, alpha, b,
                        spec.with_(focus=((L, ell),)))
        best = max(best, weight(est.value, measure_alpha(b, alpha)))
    return best


def dyadic_maximal(f, grid: int, z: complex, alpha, gamma: float = 1.0,
                   collection: TruncatedBoxCollection | None = None,
                   spec: QuadratureSpec | None = None) -> float:
    """Largest ``<|f|>_{Q,gamma}`` over grid boxes of the collection containing ``z``."""
    alpha = check_alpha(alpha)
    collection = collection or default_collections()[grid - 1]
    return _maximal(f, grid, z, alpha, collection, lambda I, A: (I / A) ** (1 / gamma), gamma, spec)


def fractional_maximal(f, grid: int, z: complex, alpha, order: float,
                       collection: TruncatedBoxCollection | None = None,
                       spec: QuadratureSpec | None = None) -> float:
    """Largest ``A(Q)**(order/2 - 1) * integral over Q of |f|`` over boxes containing ``z``."""
    if not 0 < order < 2:
        raise ValueError("order must lie in (0, 2)")
    alpha = check_alpha(alpha)
    collection = collection or default_collections()[grid - 1]
    return _maximal(f, grid, z, alpha, collection, lambda I, A: A ** (order / 2 - 1) * I, 1.0, spec)


def compactness_tail(f_sequence: Sequence, u, phi, params: SparseFormParams, alpha,
                     family: ExhaustingFamily | None = None, n_values: Sequence[int] = range(1, 9),
                     collections=None, spec: QuadratureSpec | None = None, threads: int = 1) -> dict:
    """``sup_m`` of the sparse sum over boxes with ``Q_I^up`` disjoint from ``K_n``.

    Summands are ``mu(Q)**(1/gamma') A(Q)**(1/gamma) <|f_m|^N>_Q <|f_m|^(q-N)>_{Q,gamma}``.
    The supremum runs over the finite sequence given.
    """
    alpha = check_alpha(alpha)
    if not params.compactness_ok():
        raise ValueError("need 1 <= N < q with 1 < gamma < q/(q-N), or N = q with gamma > 1")
    family = family or ExhaustingFamily()
    collections = collections or default_collections()
    mu_fn, state = _mu_function(u, phi, params.q, alpha, spec)
    n_values = list(n_values)

    def one(f):
        eng = SparseEngine(f, alpha, collections)
        return [_form(eng, params.N, params.q, params.gamma, params.mu_exponent, 1.0 / params.gamma,
                      mu_fn, mask_fn=lambda lefts, ell, n=n: family.up_misses(n, lefts, ell)).value
                for n in n_values]

    table = map_ordered(one, list(f_sequence), threads)
    sup = [max(col) if col else 0.0 for col in zip(*table)] if table else [0.0] * len(n_values)
    return {"n": n_values, "tail": sup, "per_m": table, "converged": state["converged"]}
