"""Numerical certificates for weighted composition operators ``f -> u * (f o phi)``
on weighted Bergman spaces of the upper half-plane: dyadic geometry, quadrature
against ``dA_alpha``, Carleson testing conditions, sparse forms and weight classes.
"""

__version__ = "0.1.0"

from .geometry import (CarlesonBox, DyadicInterval, HalfPlanePoint, Interval, ShiftedDyadicGrid,
                       TruncatedBoxCollection, WhitneyRectangle, cover_interval, dilate,
                       enclosing_interval, enumerate_boxes, tent, upper_box, whitney_decompose)
from .quadrature import (Box, HalfDisk, IntegralEstimate, QuadratureSpec, WeightParameter,
                         bergman_norm, integrate, integrate_halfplane, measure_alpha,
                         pullback_measure)
from .symbols import SymbolExpression, parse, parse_weight, verify_self_map

__all__ = [
    "Box", "CarlesonBox", "DyadicInterval", "HalfDisk", "HalfPlanePoint", "IntegralEstimate",
    "Interval", "QuadratureSpec", "ShiftedDyadicGrid", "SymbolExpression", "TruncatedBoxCollection",
    "WeightParameter", "WhitneyRectangle", "bergman_norm", "cover_interval", "dilate",
    "enclosing_interval", "enumerate_boxes", "integrate", "integrate_halfplane", "measure_alpha",
    "parse", "parse_weight", "pullback_measure", "tent", "upper_box", "verify_self_map",
    "whitney_decompose",
]
