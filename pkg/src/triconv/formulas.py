"""Registry of closed-form graph maps phi: U subset R^d -> R^m.

Each entry returns a pair of vectorized callables (phi, dphi) built from a
parameter dict:

    phi(x)  : (..., d) -> (..., m)
    dphi(x) : (..., d) -> (..., m, d)

Shipped families:

* ``plane``      phi(x) = S x + t, affine with slope matrix S (default 0).
* ``paraboloid`` phi(x) = |x|^2, the model hypersurface with curvature.
* ``cone``       phi(xi) = |xi|/N1 + c/N1^2, the rescaled half-wave graph;
                 singular at xi = 0, so domains must stay away from the
                 origin.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

GraphMap = tuple[Callable, Callable]


def _plane(params: dict) -> GraphMap:
    slope_in = params.get("slope")
    offset_in = params.get("offset", 0.0)

    def _mats(d):
        # slope defaults to a 1 x d zero matrix built once d is known
        s = np.zeros((1, d)) if slope_in is None \
            else np.atleast_2d(np.asarray(slope_in, dtype=float))
        t = np.broadcast_to(np.asarray(offset_in, dtype=float),
                            (s.shape[0],))
        return s, t

    def phi(x):
        x = np.asarray(x, dtype=float)
        s, t = _mats(x.shape[-1])
        return x @ s.T + t

    def dphi(x):
        x = np.asarray(x, dtype=float)
        s, _ = _mats(x.shape[-1])
        return np.broadcast_to(s, x.shape[:-1] + s.shape).copy()

    return phi, dphi


def _paraboloid(params: dict) -> GraphMap:
    def phi(x):
        x = np.asarray(x, dtype=float)
        return np.sum(x * x, axis=-1, keepdims=True)

    def dphi(x):
        x = np.asarray(x, dtype=float)
        return (2.0 * x)[..., None, :]

    return phi, dphi


def _cone(params: dict) -> GraphMap:
    n1 = float(params["N1"])
    c = float(params.get("c", 0.0))

    def phi(x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        return r / n1 + c / n1**2

    def dphi(x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        if np.any(r == 0):
            raise ValueError("cone graph map is singular at the origin")
        return (x / (r * n1))[..., None, :]

    return phi, dphi


REGISTRY: dict[str, Callable[[dict], GraphMap]] = {
    "plane": _plane,
    "paraboloid": _paraboloid,
    "cone": _cone,
}


def make(formula: str, params: dict | None = None) -> GraphMap:
    """Look up a registered graph map; unknown names raise KeyError."""
    if formula not in REGISTRY:
        raise KeyError(f"unknown graph formula {formula!r}; "
                       f"known: {sorted(REGISTRY)}")
    return REGISTRY[formula](params or {})
