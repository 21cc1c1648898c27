"""Adaptive integration against ``dA_alpha`` on regions of the upper half-plane.

``dA_alpha(z) = (alpha + 1) / pi * (2 Im z)**alpha dx dy``.

The engine tiles the region with rectangular cells and applies a tensor
Gauss-Kronrod 7/15 rule on each; ``|K15 - G7|`` is the cell error. Cells with
the largest errors are quartered until the summed error meets the tolerance or
the cell budget runs out. For ``alpha < 0`` the vertical variable is
``s = y**(alpha + 1)``, under which the weight becomes the constant
``2**alpha / pi`` and the integrand stays bounded at ``y = 0``.

Error bounds are heuristic embedded-rule estimates, not enclosures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.special import gamma

from .geometry import CarlesonBox, Rectangle, WhitneyRectangle

__all__ = [
    "Box",
    "HalfDisk",
    "IntegralEstimate",
    "QuadratureSpec",
    "SingularIntegrandError",
    "WeightParameter",
    "as_box",
    "bergman_norm",
    "check_alpha",
    "compensated_sum",
    "halfplane_tail_bound",
    "integrate",
    "integrate_halfplane",
    "measure_alpha",
    "pullback_measure",
]

# Gauss-Kronrod 15-point abscissae (non-negative half) and weights
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

NODES = np.concatenate([-_XGK[:-1], [0.0], _XGK[:-1][::-1]])
W_KRONROD = np.concatenate([_WGK[:-1], [_WGK[-1]], _WGK[:-1][::-1]])
W_GAUSS = np.zeros(15)
W_GAUSS[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], [_WG[-1]], _WG[:-1][::-1]])


class SingularIntegrandError(ValueError):
    """The integrand produced NaN or infinity at a sample inside the region."""


def check_alpha(alpha) -> float:
    a = float(getattr(alpha, "alpha", alpha))
    if not a > -1:
        raise ValueError(f"alpha must exceed -1, got {a}")
    return a


@dataclass(frozen=True)
class WeightParameter:
    alpha: float

    def __post_init__(self):
        check_alpha(self.alpha)


@dataclass(frozen=True)
class Box:
    """Float rectangle ``[x0, x1) x [y0, y1)`` with ``0 <= y0 < y1``."""

    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0 >= 0):
            raise ValueError(f"degenerate or sub-axis box {self}")

    @property
    def width(self) -> float:
        return self.x1 - self.x0


@dataclass(frozen=True)
class HalfDisk:
    """``{|z - center| < radius, Im z > 0}`` for a real ``center``."""

    center: float
    radius: float


def as_box(region) -> Box:
    """Float box for a geometric region, clipped to ``y >= 0``."""
    if isinstance(region, Box):
        return region
    if isinstance(region, CarlesonBox):
        region = region.rect
    elif isinstance(region, WhitneyRectangle):
        region = region.rect
    if isinstance(region, Rectangle):
        x0, x1, y0, y1 = region.as_float()
        return Box(x0, x1, max(y0, 0.0), y1)
    if isinstance(region, tuple) and len(region) == 4:
        return Box(*map(float, region))
    raise TypeError(f"cannot treat {region!r} as a box")


def _angular_factor(alpha: float) -> float:
    # integral of sin(theta)**alpha over (0, pi)
    return math.sqrt(math.pi) * gamma((alpha + 1) / 2) / gamma(alpha / 2 + 1)


def measure_alpha(region, alpha) -> float:
    """Exact ``A_alpha`` of a box, Whitney rectangle, tent or upper half-disk."""
    alpha = check_alpha(alpha)
    if isinstance(region, HalfDisk):
        r = region.radius
        return (alpha + 1) * 2**alpha / math.pi * r ** (alpha + 2) / (alpha + 2) \
            * _angular_factor(alpha)
    b = as_box(region)
    return (b.x1 - b.x0) * 2**alpha / math.pi * (b.y1 ** (alpha + 1) - b.y0 ** (alpha + 1))


def compensated_sum(values) -> float | complex:
    """Correctly rounded sum (``math.fsum``); complex input is summed per component."""
    v = np.asarray(values)
    if np.iscomplexobj(v):
        return complex(math.fsum(v.real.ravel()), math.fsum(v.imag.ravel()))
    return math.fsum(v.ravel())


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances, cell budget, truncation and tail handling.

    ``truncation`` is ``(x_lo, x_hi, y_hi)`` for the region
    ``[x_lo, x_hi] x (0, y_hi]``. ``focus`` lists ``(x, scale)`` pairs around
    which the initial mesh is graded down to cells of size ``scale``; put one at
    every place the integrand varies quickly. With ``tail_model="power_law"``
    the caller declares ``decay``: the integrand is assumed to fall off like
    ``|z|**-decay`` outside the truncation.
    """

    truncation: tuple[float, float, float] = (-64.0, 64.0, 64.0)
    rel_tol: float = 1e-8
    abs_tol: float = 1e-14
    max_cells: int = 40000
    tail_model: str = "none"
    decay: float | None = None
    focus: tuple[tuple[float, float], ...] = ((0.0, 1.0),)
    min_cell: float = 1e-12
    max_extent: float = 1e8
    initial_cells: int = 4000

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_cells < 1:
            raise ValueError("max_cells must be >= 1")
        if self.tail_model not in ("none", "power_law"):
            raise ValueError(f"unknown tail model {self.tail_model!r}")

    def with_(self, **kw) -> "QuadratureSpec":
        return replace(self, **kw)

    def with_focus(self, *points: tuple[float, float]) -> "QuadratureSpec":
        return replace(self, focus=tuple(self.focus) + tuple((float(x), float(s)) for x, s in points))


@dataclass(frozen=True)
class IntegralEstimate:
    value: float | complex
    error_bound: float
    cells_used: int
    converged: bool
    tail_estimate: float = 0.0
    divergent: bool = False
    truncation: tuple[float, ...] | None = field(default=None, compare=False)

    def to_dict(self) -> dict:
        v = self.value
        out = {
            "value": [v.real, v.imag] if isinstance(v, complex) else v,
            "error_bound": self.error_bound,
            "cells_used": self.cells_used,
            "converged": self.converged,
            "tail_estimate": self.tail_estimate,
        }
        if self.divergent:
            out["divergent"] = "divergent (borderline)"
        if self.truncation is not None:
            out["truncation"] = list(self.truncation)
        return out

    @classmethod
    def exact(cls, value) -> "IntegralEstimate":
        return cls(value, 0.0, 0, True)


# --- charts: cell coordinates -> points and weights --------------------------


class _Cartesian:
    """Cells in ``(x, s)`` with ``s = y**(alpha+1)`` when ``alpha < 0``."""

    def __init__(self, alpha: float):
        self.alpha = alpha
        self.transformed = alpha < 0

    def to_cell(self, b: Box) -> tuple[float, float, float, float]:
        if self.transformed:
            p = self.alpha + 1
            return b.x0, b.x1, b.y0**p, b.y1**p
        return b.x0, b.x1, b.y0, b.y1

    def points(self, U, V):
        # U: (n, 15), V: (n, 15) -> Z (n, 15, 15), W (n, 1, 15)
        if self.transformed:
            Y = V ** (1.0 / (self.alpha + 1))
            W = np.full_like(Y, 2**self.alpha / math.pi)
        else:
            Y = V
            W = (self.alpha + 1) / math.pi * (2 * Y) ** self.alpha if self.alpha else \
                np.full_like(Y, 1 / math.pi)
        Z = U[:, :, None] + 1j * Y[:, None, :]
        return Z, W[:, None, :]


class _Polar:
    """Cells in ``(rho, tau)`` around a real centre with ``r = rho**2``.

    The Jacobian ``2 rho**3`` absorbs point singularities up to ``r**-2`` at the centre.
    For ``alpha < 0`` the angle is ``theta = pi tau**k / (tau**k + (1-tau)**k)`` with
    ``k = 1/(alpha+1)``, which makes ``sin(theta)**alpha`` bounded at both ends.
    Otherwise ``tau = theta``.
    """

    def __init__(self, alpha: float, center: float):
        self.alpha = alpha
        self.center = center
        self.transformed = alpha < 0
        self.v_max = 1.0 if self.transformed else math.pi

    def _angle(self, V):
        if not self.transformed:
            return V, 1.0
        k = 1.0 / (self.alpha + 1)
        a, b = V**k, (1 - V) ** k
        T = math.pi * a / (a + b)
        dT = math.pi * k * (V * (1 - V)) ** (k - 1) / (a + b) ** 2
        return T, dT

    def points(self, U, V):
        P = U[:, :, None]
        R = P * P
        T, dT = self._angle(V)
        T = T[:, None, :]
        if not np.isscalar(dT):
            dT = dT[:, None, :]
        Z = self.center + R * np.exp(1j * T)
        Y = R * np.sin(T)
        W = 2 * P * R * ((self.alpha + 1) / math.pi) * (2 * Y) ** self.alpha * dT
        return Z, W


def _eval_cells(f, chart, cells: np.ndarray):
    u0, u1, v0, v1 = cells.T
    hu, hv = (u1 - u0) / 2, (v1 - v0) / 2
    U = ((u0 + u1) / 2)[:, None] + hu[:, None] * NODES
    V = ((v0 + v1) / 2)[:, None] + hv[:, None] * NODES
    Z, W = chart.points(U, V)
    with np.errstate(all="ignore"):
        F = np.broadcast_to(np.asarray(f(Z)), Z.shape) * W
    if not np.all(np.isfinite(F)):
        bad = np.argwhere(~np.isfinite(F))[0]
        raise SingularIntegrandError(
            f"integrand is not finite at z={complex(Z[tuple(bad)])!r}; "
            "declare the pole or shrink the region")
    area = hu * hv
    K = np.einsum("i,j,nij->n", W_KRONROD, W_KRONROD, F) * area
    G = np.einsum("i,j,nij->n", W_GAUSS, W_GAUSS, F) * area
    return K, np.abs(K - G)


def _graded_boxes(b: Box, focus, cap: int) -> list[Box]:
    out: list[Box] = []
    stack = [b]
    while stack:
        c = stack.pop()
        size = max(c.x1 - c.x0, c.y1 - c.y0)
        split = False
        for xf, sf in focus:
            dx = max(c.x0 - xf, 0.0, xf - c.x1)
            d = math.hypot(dx, c.y0)
            if size > d + sf:
                split = True
                break
        if split and len(out) + len(stack) + 4 <= cap:
            xm, ym = (c.x0 + c.x1) / 2, (c.y0 + c.y1) / 2
            stack.extend([Box(xm, c.x1, ym, c.y1), Box(c.x0, xm, ym, c.y1),
                          Box(xm, c.x1, c.y0, ym), Box(c.x0, xm, c.y0, ym)])
        else:
            out.append(c)
    return out


def _adapt(f, chart, cells: np.ndarray, spec: QuadratureSpec, rel_tol: float, abs_tol: float):
    vals, errs = _eval_cells(f, chart, cells)
    min_w = spec.min_cell
    while True:
        total = compensated_sum(vals)
        err = math.fsum(errs)
        tol = max(abs_tol, rel_tol * abs(total))
        n = len(cells)
        if err <= tol:
            return total, float(err), n, True
        budget = (spec.max_cells - n) // 3
        if budget < 1:
            return total, float(err), n, False
        widths = np.minimum(cells[:, 1] - cells[:, 0], cells[:, 3] - cells[:, 2])
        splittable = widths > min_w * np.maximum(1.0, np.abs(cells[:, :2]).max(axis=1))
        cand = np.flatnonzero(splittable)
        if cand.size == 0:
            return total, float(err), n, False
        order = cand[np.argsort(-errs[cand], kind="stable")]
        need = err - 0.5 * tol
        k = int(np.searchsorted(np.cumsum(errs[order]), need)) + 1
        k = max(1, min(k, budget, order.size))
        pick = np.sort(order[:k])
        keep = np.ones(n, dtype=bool)
        keep[pick] = False
        p = cells[pick]
        um, vm = (p[:, 0] + p[:, 1]) / 2, (p[:, 2] + p[:, 3]) / 2
        kids = np.concatenate([
            np.stack([p[:, 0], um, p[:, 2], vm], axis=1),
            np.stack([um, p[:, 1], p[:, 2], vm], axis=1),
            np.stack([p[:, 0], um, vm, p[:, 3]], axis=1),
            np.stack([um, p[:, 1], vm, p[:, 3]], axis=1),
        ])
        kv, ke = _eval_cells(f, chart, kids)
        cells = np.concatenate([cells[keep], kids])
        vals = np.concatenate([vals[keep], kv])
        errs = np.concatenate([errs[keep], ke])


def integrate(f: Callable, alpha, region, spec: QuadratureSpec | None = None,
              rel_tol: float | None = None, abs_tol: float | None = None) -> IntegralEstimate:
    """Integrate ``f`` (vectorised over complex arrays) against ``dA_alpha`` over ``region``.

    ``region`` is a :class:`Box`, :class:`HalfDisk`, or any geometric box type.
    Complex-valued integrands are allowed.
    """
    alpha = check_alpha(alpha)
    spec = spec or QuadratureSpec()
    rel_tol = spec.rel_tol if rel_tol is None else rel_tol
    abs_tol = spec.abs_tol if abs_tol is None else abs_tol
    if isinstance(region, HalfDisk):
        chart = _Polar(alpha, region.center)
        n0 = 4
        r = np.linspace(0, math.sqrt(region.radius), n0 + 1)
        t = np.linspace(0, chart.v_max, n0 + 1)
        cells = np.array([(r[i], r[i + 1], t[j], t[j + 1])
                          for i in range(n0) for j in range(n0)])
        trunc = (region.center, region.radius)
    else:
        b = as_box(region)
        chart = _Cartesian(alpha)
        boxes = _graded_boxes(b, spec.focus, min(spec.initial_cells, spec.max_cells))
        cells = np.array([chart.to_cell(c) for c in boxes])
        trunc = tuple(float(v) for v in (b.x0, b.x1, b.y0, b.y1))
    value, err, n, ok = _adapt(f, chart, cells, spec, rel_tol, abs_tol)
    return IntegralEstimate(value, err, n, ok, truncation=trunc)


def halfplane_tail_bound(f: Callable, alpha: float, box: Box, decay: float) -> float:
    """Power-law bound for the integral of ``|f|`` outside ``box``.

    The constant ``C`` in ``|f(z)| <= C |z - c|**-decay`` is read off samples on
    the three outer sides (``c`` is the box centre on the real axis); outside the
    largest centred half-disk in the box the bound is integrated in closed form.
    Returns ``inf`` when ``decay <= alpha + 2`` (the outer integral diverges).
    """
    excess = decay - alpha - 2
    if excess <= 0:
        return math.inf
    c = (box.x0 + box.x1) / 2
    radius = min(c - box.x0, box.x1 - c, box.y1)
    xs = np.linspace(box.x0, box.x1, 129)
    ys = np.geomspace(box.y1 * 1e-9, box.y1, 65)
    pts = np.concatenate([xs + 1j * box.y1, box.x0 + 1j * ys, box.x1 + 1j * ys])
    with np.errstate(all="ignore"):
        vals = np.abs(np.asarray(f(pts))) * np.abs(pts - c) ** decay
    C = float(np.max(vals[np.isfinite(vals)], initial=0.0))
    return float(C * (alpha + 1) * 2**alpha / math.pi * _angular_factor(alpha) \
        * radius ** (-excess) / excess)


def integrate_halfplane(f: Callable, alpha, spec: QuadratureSpec | None = None) -> IntegralEstimate:
    """Integral of ``f`` over the whole half-plane: truncation plus tail model.

    With a declared power-law decay the truncation is enlarged (about its centre)
    until the tail bound fits in half of the tolerance; the other half goes to
    the quadrature. ``error_bound`` includes the tail; ``value`` does not.
    """
    alpha = check_alpha(alpha)
    spec = spec or QuadratureSpec()
    x_lo, x_hi, y_hi = spec.truncation
    box = Box(x_lo, x_hi, 0.0, y_hi)
    if spec.tail_model != "power_law" or spec.decay is None:
        return integrate(f, alpha, box, spec)
    if spec.decay <= alpha + 2:
        return IntegralEstimate(math.nan, math.inf, 0, False, math.inf, True,
                                (box.x0, box.x1, box.y0, box.y1))
    rel, ab = spec.rel_tol / 2, spec.abs_tol / 2
    est = integrate(f, alpha, box, spec, rel, ab)
    tail = halfplane_tail_bound(f, alpha, box, spec.decay)
    for _ in range(8):
        tol = max(ab, rel * abs(est.value))
        radius = min((box.x1 - box.x0) / 2, box.y1)
        if tail <= tol or radius >= spec.max_extent:
            break
        grow = (tail / (0.5 * tol)) ** (1.0 / (spec.decay - alpha - 2))
        grow = min(max(grow, 2.0), spec.max_extent / radius)
        c = (box.x0 + box.x1) / 2
        half = (box.x1 - box.x0) / 2 * grow
        box = Box(c - half, c + half, 0.0, box.y1 * grow)
        est = integrate(f, alpha, box, spec, rel, ab)
        tail = halfplane_tail_bound(f, alpha, box, spec.decay)
    tol = max(spec.abs_tol, spec.rel_tol * abs(est.value))
    total_err = est.error_bound + tail
    return IntegralEstimate(est.value, float(total_err), est.cells_used,
                            bool(est.converged and total_err <= tol), tail, False,
                            tuple(float(v) for v in (box.x0, box.x1, box.y0, box.y1)))


def bergman_norm(f: Callable, p: float, alpha, spec: QuadratureSpec | None = None) -> IntegralEstimate:
    """``||f||_{p,alpha}``; the error of the p-th power is pushed through the root."""
    if p < 1:
        raise ValueError("p must be >= 1")
    alpha = check_alpha(alpha)
    est = integrate_halfplane(lambda z: np.abs(f(z)) ** p, alpha, spec)
    v = max(est.value, 0.0)
    if v == 0:
        return replace(est, value=0.0, error_bound=est.error_bound ** (1 / p))
    root = v ** (1 / p)
    return replace(est, value=root, error_bound=root / p * est.error_bound / v,
                   tail_estimate=root / p * est.tail_estimate / v)


def _real_positive(a: complex) -> bool:
    return a.imag == 0 and a.real > 0


def pullback_measure(region, u, phi, q: float, alpha, spec: QuadratureSpec | None = None,
                     exact_affine: bool = True) -> IntegralEstimate:
    """``mu_{u,phi,q,alpha}(E) = integral of 1_E(phi(z)) |u(z)|**q dA_alpha(z)``.

    For ``phi(z) = a z + b`` with ``a > 0`` the preimage of a box is a box and is
    used directly. Otherwise the indicator is integrated over the quadrature spec's
    truncation and the adaptive rule bisects along the preimage boundary until
    ``min_cell``.
    """
    alpha = check_alpha(alpha)
    spec = spec or QuadratureSpec()
    E = as_box(region)
    u_const = u.constant() if hasattr(u, "constant") else None
    if u_const is not None and u_const == 0:
        return IntegralEstimate.exact(0.0)
    aff = phi.affine() if (exact_affine and hasattr(phi, "affine")) else None
    if aff is not None and _real_positive(aff[0]):
        a, b = aff[0].real, aff[1]
        y0 = (E.y0 - b.imag) / a
        y1 = (E.y1 - b.imag) / a
        if y1 <= 0:
            return IntegralEstimate.exact(0.0)
        pre = Box((E.x0 - b.real) / a, (E.x1 - b.real) / a, max(y0, 0.0), y1)
        if u_const is not None:
            return IntegralEstimate.exact(abs(u_const) ** q * measure_alpha(pre, alpha))
        return integrate(lambda z: np.abs(u(z)) ** q, alpha, pre, spec)

    def integrand(z):
        w = phi(z)
        inside = (w.real >= E.x0) & (w.real < E.x1) & (w.imag >= E.y0) & (w.imag < E.y1)
        return np.where(inside, np.abs(u(z)) ** q, 0.0)

    x_lo, x_hi, y_hi = spec.truncation
    return integrate(integrand, alpha, Box(x_lo, x_hi, 0.0, y_hi), spec)
