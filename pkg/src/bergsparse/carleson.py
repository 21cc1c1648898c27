"""Test functions, Carleson intensities and the testing conditions.

The pullback measure ``mu`` of the pair ``(u, phi)`` is tested against the
family ``f_{a,t}(z) = y_a**((alpha+2)/t) / (z - conj(a))**((2 alpha + 4)/t)``.
Everything here is numerical evidence on a finite apex lattice: a supremum is
called bounded when it is finite and moves by less than ``stability_tol`` when
the lattice is refined.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import beta as beta_fn, gamma

from .geometry import HalfPlanePoint, WhitneyRectangle, clip_to_halfplane, dilate, tent
from .quadrature import (Box, IntegralEstimate, QuadratureSpec, as_box, check_alpha,
                         integrate, integrate_halfplane, measure_alpha, pullback_measure)

__all__ = [
    "ApexLattice",
    "BoundednessCertificate",
    "TestFunction",
    "VanishingProfile",
    "apex_spec",
    "boundedness_certificate",
    "boundedness_sweep",
    "carleson_intensity",
    "default_escape_sequences",
    "eval_test_function",
    "map_ordered",
    "mean_value_check",
    "reproducing_check",
    "test_function_norm",
    "test_function_norm_closed_form",
    "testing_condition_value",
    "vanishing_probe",
]


def _as_complex(a) -> complex:
    if isinstance(a, HalfPlanePoint):
        return a.z
    a = complex(a)
    if not a.imag > 0:
        raise ValueError(f"apex must lie in the upper half-plane, got {a}")
    return a


def map_ordered(fn: Callable, items: Sequence, threads: int = 1) -> list:
    """``[fn(x) for x in items]``, optionally on a thread pool; order is preserved."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


@dataclass(frozen=True)
class TestFunction:
    """``f_{a,t}``; its ``t``-norm in ``A^t_alpha`` does not depend on ``a``."""

    __test__ = False  # keep pytest from collecting this class

    apex: complex
    t: float
    alpha: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "apex", _as_complex(self.apex))
        if self.t < 1:
            raise ValueError("t must be >= 1")
        check_alpha(self.alpha)

    @property
    def exponent(self) -> float:
        return (2 * self.alpha + 4) / self.t

    def __call__(self, z):
        a = self.apex
        z = np.asarray(z, dtype=complex)
        return a.imag ** ((self.alpha + 2) / self.t) / np.power(z - a.conjugate(), self.exponent)

    def abs_pow(self, z, r: float):
        """``|f(z)|**r`` without forming the complex power."""
        a = self.apex
        return a.imag ** ((self.alpha + 2) * r / self.t) \
            / np.abs(np.asarray(z) - a.conjugate()) ** (self.exponent * r)


def eval_test_function(tf: TestFunction, z) -> complex:
    z = _as_complex(z)
    return complex(tf(z))


def test_function_norm_closed_form(alpha: float) -> float:
    """``||f_{a,t}||_{t,alpha}**t``: x-integral in Gamma functions, then a Beta integral in y."""
    alpha = check_alpha(alpha)
    x_part = math.sqrt(math.pi) * gamma(alpha + 1.5) / gamma(alpha + 2)
    return float((alpha + 1) * 2**alpha / math.pi * x_part * beta_fn(alpha + 1, alpha + 2))


test_function_norm_closed_form.__test__ = False


def apex_spec(spec: QuadratureSpec, phi, a: complex, decay: float | None) -> QuadratureSpec:
    """Recentre the truncation and mesh grading on where the kernel at ``a`` concentrates."""
    aff = phi.affine() if hasattr(phi, "affine") else None
    if aff is not None and aff[0].imag == 0 and aff[0].real > 0:
        k, b = aff[0].real, aff[1]
        center, scale = (a.real - b.real) / k, (a.imag + b.imag) / k
    else:
        center, scale = a.real, a.imag
    x_lo, x_hi, y_hi = spec.truncation
    s = max(scale, 1.0)
    trunc = (center + x_lo * s, center + x_hi * s, y_hi * s)
    focus = tuple(spec.focus) + ((center, min(scale, a.imag)),)
    if decay is None:
        return spec.with_(truncation=trunc, focus=focus)
    return spec.with_(truncation=trunc, focus=focus, tail_model="power_law", decay=decay)


def _default_decay(u, phi, k: float) -> float | None:
    # known only when |u| is constant and phi is affine
    if hasattr(u, "constant") and u.constant() is not None \
            and hasattr(phi, "affine") and phi.affine() is not None \
            and phi.affine()[0] != 0:
        return k
    return None


def test_function_norm(tf: TestFunction, spec: QuadratureSpec | None = None) -> IntegralEstimate:
    """``||f_{a,t}||_{t,alpha}**t`` by quadrature."""
    spec = spec or QuadratureSpec()
    a = tf.apex
    s = apex_spec(spec, _Identity, a, 2 * tf.alpha + 4)
    return integrate_halfplane(lambda z: tf.abs_pow(z, tf.t), tf.alpha, s)


test_function_norm.__test__ = False


class _IdentityMap:
    def __call__(self, z):
        return z

    def affine(self):
        return (1 + 0j, 0j)


_Identity = _IdentityMap()


def testing_integrand(u, phi, p: float, q: float, alpha: float, a: complex):
    lam = q / p
    c = a.imag ** ((alpha + 2) * lam)
    k = (2 * alpha + 4) * lam
    abar = a.conjugate()

    def f(z):
        return c * np.abs(u(z)) ** q / np.abs(phi(z) - abar) ** k
    return f


def testing_condition_value(u, phi, p: float, q: float, alpha, a,
                            spec: QuadratureSpec | None = None) -> IntegralEstimate:
    """Integral of ``y_a**((alpha+2)q/p) |u|**q / |phi - conj(a)|**((2alpha+4)q/p)`` against ``dA_alpha``."""
    if not q >= p >= 1:
        raise ValueError("need q >= p >= 1")
    alpha = check_alpha(alpha)
    a = _as_complex(a)
    spec = spec or QuadratureSpec()
    if hasattr(u, "constant") and u.constant() == 0:
        return IntegralEstimate.exact(0.0)
    k = (2 * alpha + 4) * q / p
    decay = spec.decay if spec.tail_model == "power_law" and spec.decay else _default_decay(u, phi, k)
    return integrate_halfplane(testing_integrand(u, phi, p, q, alpha, a), alpha,
                               apex_spec(spec, phi, a, decay))


def carleson_intensity(u, phi, p: float, q: float, alpha, a,
                       spec: QuadratureSpec | None = None) -> IntegralEstimate:
    """``mu(T_a) / A_alpha(T_a)**(q/p)``."""
    alpha = check_alpha(alpha)
    a = _as_complex(a)
    spec = spec or QuadratureSpec()
    T = tent(HalfPlanePoint(a.real, a.imag))
    mu = pullback_measure(T, u, phi, q, alpha, spec)
    den = measure_alpha(T, alpha) ** (q / p)
    return IntegralEstimate(mu.value / den, mu.error_bound / den, mu.cells_used, mu.converged)


@dataclass(frozen=True)
class ApexLattice:
    """Product lattice of apex real parts and (log-spaced) imaginary parts."""

    xs: tuple[float, ...] = (-10.0, -5.0, 0.0, 5.0, 10.0)
    ys: tuple[float, ...] = tuple(2.0**k for k in range(-10, 11))

    def points(self) -> list[complex]:
        return [complex(x, y) for y in self.ys for x in self.xs]

    def __len__(self):
        return len(self.xs) * len(self.ys)

    def refined(self) -> "ApexLattice":
        """Half the spacing in ``x`` over twice the window; half the log-spacing in ``y``
        with one more octave at each end."""
        xs = np.asarray(self.xs)
        if len(xs) > 1:
            lo, hi = 2 * xs.min(), 2 * xs.max()
            new_x = np.linspace(lo, hi, 4 * (len(xs) - 1) + 1)
        else:
            new_x = xs
        ly = np.log2(self.ys)
        if len(ly) > 1:
            new_ly = np.linspace(ly.min() - 1, ly.max() + 1, 2 * (len(ly) + 1) + 1)
        else:
            new_ly = np.array([ly[0] - 1, ly[0], ly[0] + 1])
        return ApexLattice(tuple(float(x) for x in new_x), tuple(float(2.0**v) for v in new_ly))

    def to_dict(self) -> dict:
        return {"xs": list(self.xs), "ys": list(self.ys)}


@dataclass
class BoundednessCertificate:
    p: float
    q: float
    alpha: float
    lattice: ApexLattice
    values: list[float]
    errors: list[float]
    converged: list[bool]
    supremum: float
    argmax: complex
    refined_supremum: float | None
    stable: bool
    verdict: str
    cells_used: int
    rel_tol: float = 0.0
    quantity: str = "testing"
    extra: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        return [{"x_a": z.real, "y_a": z.imag, "value": v, "error_bound": e, "converged": c}
                for z, v, e, c in zip(self.lattice.points(), self.values, self.errors, self.converged)]

    def to_dict(self) -> dict:
        return {
            "quantity": self.quantity,
            "p": self.p, "q": self.q, "alpha": self.alpha,
            "lattice": self.lattice.to_dict(),
            "supremum": self.supremum,
            "argmax": [self.argmax.real, self.argmax.imag],
            "refined_supremum": self.refined_supremum,
            "stable": self.stable,
            "verdict": self.verdict,
            "cells_used": self.cells_used,
            "rel_tol": self.rel_tol,
            "points": self.rows(),
            **self.extra,
        }


def _sup(values: Sequence[float]) -> tuple[float, int]:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return 0.0, -1
    if np.any(np.isnan(arr)):
        return math.inf, int(np.flatnonzero(np.isnan(arr))[0])
    i = int(np.argmax(arr))
    return float(arr[i]), i


def lattice_certificate(evaluate: Callable[[complex], IntegralEstimate], lattice: ApexLattice,
                        p: float, q: float, alpha: float, refine: int = 1,
                        stability_tol: float = 0.05, threads: int = 1,
                        rel_tol: float = 0.0, quantity: str = "testing",
                        labels: tuple[str, str, str] = ("bounded", "unbounded", "inconclusive"),
                        ) -> BoundednessCertificate:
    """Supremum of ``evaluate`` over a lattice, checked against ``refine`` refinements.

    Every refined lattice is evaluated in full. Stability compares the last two
    suprema.
    """
    ok_label, bad_label, unsure = labels
    ests = map_ordered(evaluate, lattice.points(), threads)
    values = [float(abs(e.value)) if not e.divergent else math.nan for e in ests]
    sup, i = _sup(values)
    history = [sup]
    cells = sum(e.cells_used for e in ests)
    conv_all = all(e.converged for e in ests)
    lat = lattice
    for _ in range(refine):
        lat = lat.refined()
        more = map_ordered(evaluate, lat.points(), threads)
        cells += sum(e.cells_used for e in more)
        conv_all = conv_all and all(e.converged for e in more)
        vals = [float(abs(e.value)) if not e.divergent else math.nan for e in more]
        history.append(_sup(vals)[0])
    refined = history[-1] if refine else None
    if math.isinf(sup) or any(math.isinf(h) for h in history):
        stable = False
    elif refine:
        a, b = history[-2], history[-1]
        stable = abs(b - a) <= stability_tol * max(abs(a), abs(b)) or max(a, b) == 0
    else:
        stable = True
    if not conv_all:
        verdict = unsure
    elif stable:
        verdict = ok_label
    else:
        verdict = bad_label
    return BoundednessCertificate(
        p, q, alpha, lattice, values, [e.error_bound for e in ests], [e.converged for e in ests],
        sup, lattice.points()[i] if i >= 0 else 0j, refined, stable, verdict, cells,
        rel_tol, quantity, {"supremum_history": history})


def boundedness_certificate(u, phi, p: float, q: float, alpha, lattice: ApexLattice | None = None,
                            spec: QuadratureSpec | None = None, refine: int = 1,
                            stability_tol: float = 0.05, threads: int = 1) -> BoundednessCertificate:
    """Testing-condition supremum over an apex lattice.

    Verdict ``bounded (numerical evidence)`` iff every quadrature converged and
    the supremum changes by less than ``stability_tol`` under refinement.
    """
    alpha = check_alpha(alpha)
    spec = spec or QuadratureSpec()
    lattice = lattice or ApexLattice()
    return lattice_certificate(
        lambda a: testing_condition_value(u, phi, p, q, alpha, a, spec),
        lattice, p, q, alpha, refine, stability_tol, threads, spec.rel_tol, "testing",
        ("bounded (numerical evidence)", "unbounded (supremum not stable under refinement)",
         "inconclusive"))


def boundedness_sweep(u, phi, p: float, q: float, alpha, betas: Sequence[float],
                      lattice: ApexLattice | None = None, spec: QuadratureSpec | None = None,
                      refine: int = 1, threads: int = 1) -> dict:
    """One certificate per intermediate exponent ``beta`` in ``[p, q]``."""
    for b in betas:
        if not p <= b <= q:
            raise ValueError(f"beta={b} outside [{p}, {q}]")
    certs = [boundedness_certificate(u, phi, b, q, alpha, lattice, spec, refine, threads=threads)
             for b in betas]
    sups = [c.supremum for c in certs]
    return {
        "betas": list(betas),
        "certificates": certs,
        "suprema": sups,
        "all_bounded": all(c.verdict.startswith("bounded") for c in certs),
        "monotone_in_beta": bool(np.all(np.diff(sups) <= 0) or np.all(np.diff(sups) >= 0)),
    }


def default_escape_sequences(n_max: int = 12) -> dict[str, list[complex]]:
    n = np.arange(1, n_max + 1)
    return {
        "to_boundary": [complex(0, 2.0**-k) for k in n],
        "to_infinity": [complex(0, 2.0**k) for k in n],
        "tangential": [complex(k, 1.0) for k in n],
    }


@dataclass
class VanishingProfile:
    sequences: dict[str, list[complex]]
    values: dict[str, list[float]]
    decay: dict[str, float]
    vanishes: dict[str, bool]
    verdict: str
    converged: bool
    tol: float

    def rows(self) -> list[dict]:
        return [{"sequence": name, "x_a": a.real, "y_a": a.imag, "value": v}
                for name, seq in self.sequences.items()
                for a, v in zip(seq, self.values[name])]

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "converged": self.converged,
            "tol": self.tol,
            "decay": self.decay,
            "vanishes": self.vanishes,
            "points": self.rows(),
        }


def _fit_decay(seq: Sequence[complex], vals: Sequence[float]) -> float:
    """Slope of ``log value`` against ``log |a|`` (or ``log y_a`` when ``x_a`` is fixed)."""
    v = np.asarray(vals, dtype=float)
    pos = v > 0
    if pos.sum() < 2:
        return math.inf if not pos.any() else 0.0
    a = np.asarray(seq)
    s = np.abs(a) if np.ptp(a.real) > 0 else a.imag
    half = np.arange(len(v)) >= len(v) // 2
    m = pos & half if (pos & half).sum() >= 2 else pos
    return float(np.polyfit(np.log(s[m]), np.log(v[m]), 1)[0])


def vanishing_probe(u, phi, p: float, q: float, alpha, sequences: dict | None = None,
                    spec: QuadratureSpec | None = None, tol: float = 1e-3,
                    threads: int = 1) -> VanishingProfile:
    """Testing values along sequences escaping to the boundary.

    A sequence vanishes when its last value is below ``tol`` and below its first.
    The verdict is compact only if every sequence vanishes.
    """
    alpha = check_alpha(alpha)
    spec = spec or QuadratureSpec()
    sequences = sequences or default_escape_sequences()
    values, decay, vanishes, conv = {}, {}, {}, True
    for name, seq in sequences.items():
        ests = map_ordered(lambda a: testing_condition_value(u, phi, p, q, alpha, a, spec),
                           list(seq), threads)
        vals = [float(e.value) for e in ests]
        conv = conv and all(e.converged for e in ests)
        values[name] = vals
        decay[name] = _fit_decay(seq, vals)
        vanishes[name] = bool(vals[-1] <= tol and (vals[-1] < vals[0] or vals[0] == 0))
    if not conv:
        verdict = "inconclusive"
    elif all(vanishes.values()):
        verdict = "compact (numerical evidence)"
    else:
        verdict = "not compact (testing values do not vanish)"
    return VanishingProfile(dict(sequences), values, decay, vanishes, verdict, conv, tol)


def reproducing_check(f: TestFunction, points: Sequence[complex], alpha,
                      spec: QuadratureSpec | None = None) -> dict:
    """Estimate the constant in ``f(z) = C * integral f(w) / (i(conj(w) - z))**(alpha+2) dA_alpha(w)``.

    Returns the per-point ratios, their mean and the relative dispersion
    ``(max - min) / |mean|``.
    """
    alpha = check_alpha(alpha)
    spec = spec or QuadratureSpec()
    ratios, errs = [], []
    for z in points:
        z = _as_complex(z)
        s = apex_spec(spec, _Identity, f.apex, f.exponent + alpha + 2)
        s = s.with_focus((z.real, z.imag))
        est = integrate_halfplane(
            lambda w: f(w) / np.power(1j * (np.conj(w) - z), alpha + 2), alpha, s)
        fz = complex(f(z))
        r = fz / est.value
        ratios.append(r)
        errs.append(abs(r) * est.error_bound / abs(est.value))
    arr = np.asarray(ratios)
    mean = complex(np.mean(arr))
    dispersion = float((np.abs(arr - mean)).max() * 2 / abs(mean))
    return {
        "ratios": ratios,
        "estimate": mean,
        "dispersion": dispersion,
        "ratio_errors": errs,
    }


def mean_value_check(f: Callable, R: WhitneyRectangle, alpha, spec: QuadratureSpec | None = None,
                     factor: float = 1.5, samples: int = 9) -> float:
    """``max_R |f|`` over ``(1/A(R)) * integral over factor*R (clipped) of |f|``."""
    alpha = check_alpha(alpha)
    spec = spec or QuadratureSpec(rel_tol=1e-6)
    big = as_box(clip_to_halfplane(dilate(R.rect, factor)))
    box = as_box(R)
    integ = integrate(lambda z: np.abs(f(z)), alpha, big, spec.with_(focus=()))
    xs = np.linspace(box.x0, box.x1, samples)
    ys = np.linspace(box.y0, box.y1, samples)
    Z = xs[:, None] + 1j * ys[None, :]
    peak = float(np.max(np.abs(np.broadcast_to(f(Z), Z.shape))))
    return peak / (integ.value / measure_alpha(box, alpha))


testing_integrand.__test__ = False
testing_condition_value.__test__ = False
