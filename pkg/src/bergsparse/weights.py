"""The kernel weight class and the weighted estimate for ``W_{u,phi}``.

``[w]_B = sup_zeta integral |u|^q w / |conj(zeta) - phi(z)|^(alpha+2) dA_alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .carleson import (ApexLattice, BoundednessCertificate, TestFunction, apex_spec,
                       lattice_certificate, map_ordered, test_function_norm)
from .geometry import HalfPlanePoint, tent
from .quadrature import (Box, HalfDisk, IntegralEstimate, QuadratureSpec, check_alpha,
                         integrate, integrate_halfplane, measure_alpha)
from .symbols import BinOp, Call, Const, SymbolExpression, Var, parse_weight

__all__ = [
    "BWeightParams",
    "REMARK_WEIGHT",
    "b_class_constant",
    "b_class_value",
    "not_carleson_probe",
    "weight_support",
    "weighted_estimate_check",
]

REMARK_WEIGHT = "indisk(z)/abs(z)"


def conjugate(r: float) -> float:
    return math.inf if r == 1 else r / (r - 1)


@dataclass(frozen=True)
class BWeightParams:
    """Exponents and symbols for the weight class; ``s`` defaults to ``(1 + q')/2``."""

    q: float
    u: SymbolExpression
    phi: SymbolExpression
    omega: SymbolExpression
    alpha: float = 0.0
    s: float | None = None

    def __post_init__(self):
        if not self.q > 1:
            raise ValueError("q must exceed 1")
        check_alpha(self.alpha)
        if self.s is None:
            object.__setattr__(self, "s", (1 + self.q_prime) / 2)
        if not 1 < self.s < self.q_prime:
            raise ValueError(f"need 1 < s < q' = {self.q_prime}, got s={self.s}")

    @property
    def q_prime(self) -> float:
        return conjugate(self.q)

    @property
    def s_prime(self) -> float:
        return conjugate(self.s)

    def powered(self, power: float) -> "BWeightParams":
        """The same data with the weight replaced by ``omega**power``."""
        text = f"({self.omega.text})^{power!r}"
        return BWeightParams(self.q, self.u, self.phi, parse_weight(text), self.alpha, self.s)


def weight_support(omega) -> HalfDisk | None:
    """The unit upper half-disk when the weight is ``indisk(z) * g`` or ``indisk(z) / g``."""
    node = getattr(omega, "ast", None)
    while isinstance(node, BinOp) and node.op in "*/":
        if node.left == Call("indisk", Var()):
            return HalfDisk(0.0, 1.0)
        if node.op == "*" and node.right == Call("indisk", Var()):
            return HalfDisk(0.0, 1.0)
        node = node.left
    if node == Call("indisk", Var()):
        return HalfDisk(0.0, 1.0)
    return None


def _weight_constant(omega) -> float | None:
    node = getattr(omega, "ast", None)
    if isinstance(node, Const):
        return float(abs(node.value))
    return None


def _b_integrand(u, phi, omega, q, alpha, zeta: complex, power: float = 1.0):
    zb = zeta.conjugate()

    def f(z):
        w = np.asarray(omega(z), dtype=float)
        if power != 1:
            w = w**power
        return np.abs(u(z)) ** q * w / np.abs(zb - phi(z)) ** (alpha + 2)
    return f


def b_class_value(params: BWeightParams, zeta, spec: QuadratureSpec | None = None,
                  power: float = 1.0) -> IntegralEstimate:
    """The class integral at one ``zeta`` (for the weight ``omega**power``).

    A weight supported in the unit half-disk is integrated there in polar
    coordinates. Otherwise the half-plane engine runs with the declared decay;
    for a constant weight and affine ``phi`` the decay is ``alpha + 2``, which is
    borderline and reported as divergent.
    """
    spec = spec or QuadratureSpec()
    zeta = complex(zeta.z if isinstance(zeta, HalfPlanePoint) else zeta)
    if not zeta.imag > 0:
        raise ValueError("zeta must lie in the upper half-plane")
    p = params
    c = _weight_constant(p.omega)
    if c == 0 or (hasattr(p.u, "constant") and p.u.constant() == 0):
        return IntegralEstimate.exact(0.0)
    f = _b_integrand(p.u, p.phi, p.omega, p.q, p.alpha, zeta, power)
    region = weight_support(p.omega)
    if region is not None:
        return integrate(f, p.alpha, region, spec)
    decay = spec.decay if spec.tail_model == "power_law" else None
    aff = p.phi.affine()
    if decay is None and c is not None and aff is not None and p.u.constant() is not None:
        decay = p.alpha + 2
    return integrate_halfplane(f, p.alpha, apex_spec(spec, p.phi, zeta, decay))


def b_class_constant(params: BWeightParams, lattice: ApexLattice | None = None,
                     spec: QuadratureSpec | None = None, refine: int = 1,
                     stability_tol: float = 0.05, power: float = 1.0,
                     threads: int = 1) -> BoundednessCertificate:
    """Lattice supremum of :func:`b_class_value` with a refinement-stability flag."""
    spec = spec or QuadratureSpec()
    lattice = lattice or ApexLattice()
    cert = lattice_certificate(
        lambda z: b_class_value(params, z, spec, power), lattice, params.q, params.q,
        params.alpha, refine, stability_tol, threads, spec.rel_tol, "weight_class",
        ("in class (numerical evidence)", "not in class (supremum not stable under refinement)",
         "inconclusive"))
    if any(math.isnan(v) for v in cert.values):
        cert.verdict = "not in class (divergent (borderline))"
    cert.extra.update({"weight": params.omega.text, "power": power})
    return cert


def not_carleson_probe(omega, alpha, ys: Sequence[float] = (0.4, 0.2, 0.1, 0.05),
                       spec: QuadratureSpec | None = None) -> dict:
    """``omega(T_{iy}) / A_alpha(T_{iy})`` along ``y -> 0``, plus consecutive ratios."""
    alpha = check_alpha(alpha)
    spec = spec or QuadratureSpec(rel_tol=1e-9)
    vals = []
    for y in ys:
        box = tent(HalfPlanePoint(0.0, y))
        b = Box(*box.rect.as_float())
        s = spec.with_(focus=((0.0, y * 1e-9),))
        est = integrate(lambda z: np.asarray(omega(z), dtype=float), alpha, b, s)
        vals.append(est.value / measure_alpha(b, alpha))
    steps = [vals[i + 1] / vals[i] for i in range(len(vals) - 1)]
    return {"y": list(ys), "ratio": vals, "step_ratio": steps}


def _ratio(lhs: float, rhs: float) -> float:
    if rhs > 0:
        return lhs / rhs
    return 0.0 if lhs == 0 else math.inf


def weighted_estimate_check(corpus: Sequence[TestFunction], params: BWeightParams,
                            spec: QuadratureSpec | None = None,
                            lattice: ApexLattice | None = None, refine: int = 0,
                            threads: int = 1) -> dict:
    """Both sides of the weighted estimate for each function of the corpus.

    RHS is ``[omega**s']_B**(1/s') * ||f||_{q,alpha}**q`` with the class constant
    taken as the lattice supremum.
    """
    spec = spec or QuadratureSpec(rel_tol=1e-7)
    p = params
    sp = p.s_prime
    cert = b_class_constant(p, lattice, spec, refine, power=sp, threads=threads)
    const = cert.supremum ** (1 / sp)
    region = weight_support(p.omega)

    def one(f):
        def integrand(z):
            return np.abs(p.u(z)) ** p.q * f.abs_pow(p.phi(z), p.q) * np.asarray(p.omega(z), dtype=float)
        if region is not None:
            lhs = integrate(integrand, p.alpha, region, spec)
        else:
            lhs = integrate_halfplane(integrand, p.alpha, apex_spec(spec, p.phi, f.apex, None))
        norm = test_function_norm(f, spec)
        rhs = const * norm.value
        return {"apex": [f.apex.real, f.apex.imag], "lhs": lhs.value, "norm_q": norm.value,
                "rhs": rhs, "ratio": _ratio(lhs.value, rhs),
                "converged": lhs.converged and norm.converged}

    rows = map_ordered(one, list(corpus), threads)
    ratios = [r["ratio"] for r in rows]
    pos = [r for r in ratios if r > 0]
    return {
        "q": p.q, "s": p.s, "s_prime": sp,
        "class_constant": cert.supremum, "class_verdict": cert.verdict,
        "rows": rows,
        "max_ratio": max(ratios) if ratios else 0.0,
        "spread": max(pos) / min(pos) if pos else 1.0,
        "converged": all(r["converged"] for r in rows) and cert.verdict != "inconclusive",
    }
