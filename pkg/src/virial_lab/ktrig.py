"""Curvature-dependent trigonometric functions.

``cos_k``/``sin_k`` interpolate between circular (kappa > 0), linear
(kappa = 0) and hyperbolic (kappa < 0) functions:

    cos_k(kappa, x)**2 + kappa * sin_k(kappa, x)**2 == 1

All functions accept scalars or numpy arrays for ``x`` and return a float for
scalar input.  ``kappa`` is always a scalar.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, PoleError

__all__ = [
    "cos_k",
    "sin_k",
    "tan_k",
    "arcsin_k",
    "arctan_k",
    "SERIES_THRESHOLD",
    "POLE_EPS",
    "identity_residuals",
    "continuity_defect",
]

# |kappa| * x**2 below this switches to the Taylor series in kappa.
SERIES_THRESHOLD = 1e-6
POLE_EPS = 1e-12


def _out(x_in, value):
    return float(value) if np.ndim(x_in) == 0 else value


def _series_mask(kappa, x):
    return np.abs(kappa) * x * x < SERIES_THRESHOLD


def cos_k(kappa: float, x):
    """C_kappa(x): cos(sqrt(k) x), 1, or cosh(sqrt(-k) x)."""
    x_arr = np.asarray(x, dtype=float)
    kappa = float(kappa)
    if kappa == 0.0:
        return _out(x, np.ones_like(x_arr))
    s = np.sqrt(abs(kappa))
    direct = np.cos(s * x_arr) if kappa > 0 else np.cosh(s * x_arr)
    z = kappa * x_arr * x_arr
    series = 1.0 - z / 2.0 + z * z / 24.0 - z**3 / 720.0
    return _out(x, np.where(_series_mask(kappa, x_arr), series, direct))


def sin_k(kappa: float, x):
    """S_kappa(x): sin(sqrt(k) x)/sqrt(k), x, or sinh(sqrt(-k) x)/sqrt(-k)."""
    x_arr = np.asarray(x, dtype=float)
    kappa = float(kappa)
    if kappa == 0.0:
        return _out(x, x_arr.copy())
    s = np.sqrt(abs(kappa))
    direct = np.sin(s * x_arr) / s if kappa > 0 else np.sinh(s * x_arr) / s
    z = kappa * x_arr * x_arr
    series = x_arr * (1.0 - z / 6.0 + z * z / 120.0 - z**3 / 5040.0)
    return _out(x, np.where(_series_mask(kappa, x_arr), series, direct))


def tan_k(kappa: float, x, eps: float = POLE_EPS):
    """T_kappa(x) = S_kappa(x) / C_kappa(x).

    Raises
    ------
    PoleError
        If ``|C_kappa(x)| < eps`` for any element of ``x``.
    """
    c = np.asarray(cos_k(kappa, x))
    if np.any(np.abs(c) < eps):
        raise PoleError(f"tan_k pole: |cos_k({kappa}, x)| < {eps}")
    return _out(x, np.asarray(sin_k(kappa, x)) / c)


def arcsin_k(kappa: float, q):
    """Principal inverse of ``sin_k``.

    For kappa > 0 the result lies in [-pi/(2 sqrt(k)), pi/(2 sqrt(k))] and
    ``|q| <= 1/sqrt(kappa)`` is required; for kappa <= 0 every real q is
    accepted.
    """
    q_arr = np.asarray(q, dtype=float)
    kappa = float(kappa)
    if kappa == 0.0:
        return _out(q, q_arr.copy())
    s = np.sqrt(abs(kappa))
    if kappa > 0:
        arg = s * q_arr
        # tolerate round-off right at the endpoint
        if np.any(np.abs(arg) > 1.0 + 1e-15):
            raise DomainError(f"arcsin_k: |q| > 1/sqrt(kappa) for kappa={kappa}")
        direct = np.arcsin(np.clip(arg, -1.0, 1.0)) / s
    else:
        direct = np.arcsinh(s * q_arr) / s
    z = kappa * q_arr * q_arr
    series = q_arr * (1.0 + z / 6.0 + 3.0 * z * z / 40.0 + 5.0 * z**3 / 112.0)
    return _out(q, np.where(_series_mask(kappa, q_arr), series, direct))


def arctan_k(kappa: float, x):
    """Inverse of ``tan_k``; derivative 1/(1 + kappa x**2).

    kappa > 0 uses arctan (all x); kappa < 0 uses artanh and therefore needs
    ``|x| < 1/sqrt(-kappa)``.
    """
    x_arr = np.asarray(x, dtype=float)
    kappa = float(kappa)
    if kappa == 0.0:
        return _out(x, x_arr.copy())
    s = np.sqrt(abs(kappa))
    if kappa > 0:
        direct = np.arctan(s * x_arr) / s
    else:
        if np.any(np.abs(s * x_arr) >= 1.0):
            raise DomainError(f"arctan_k: |x| >= 1/sqrt(-kappa) for kappa={kappa}")
        direct = np.arctanh(s * x_arr) / s
    z = kappa * x_arr * x_arr
    series = x_arr * (1.0 - z / 3.0 + z * z / 5.0 - z**3 / 7.0)
    return _out(x, np.where(_series_mask(kappa, x_arr), series, direct))


def identity_residuals(kappa: float, x) -> dict:
    """Largest residual of each algebraic identity over the points ``x``.

    The Pythagorean and double-angle residuals are divided by
    ``max(1, size of the terms)`` so that hyperbolic growth at large
    ``|kappa| x^2`` does not masquerade as an error.  Inverse round trips are
    taken where the inverse is defined.
    """
    x = np.asarray(x, dtype=float)
    c, s = cos_k(kappa, x), sin_k(kappa, x)
    c2, ks2 = c * c, kappa * s * s
    scale = np.maximum(1.0, np.abs(c2) + np.abs(ks2))
    out = {
        "pythagorean": np.max(np.abs(c2 + ks2 - 1.0) / scale),
        "double_cos": np.max(np.abs(cos_k(kappa, 2 * x) - (c2 - ks2)) / scale),
        "double_sin": np.max(np.abs(sin_k(kappa, 2 * x) - 2 * s * c) / np.maximum(1.0, np.abs(2 * s * c))),
    }
    if kappa > 0:
        q = np.clip(x, -0.999 / np.sqrt(kappa), 0.999 / np.sqrt(kappa))
    else:
        q = x
    back = sin_k(kappa, arcsin_k(kappa, q))
    out["arcsin_roundtrip"] = np.max(np.abs(back - q) / np.maximum(1.0, np.abs(q)))
    if kappa < 0:
        t = np.clip(x, -0.999 / np.sqrt(-kappa), 0.999 / np.sqrt(-kappa))
    else:
        t = x
    out["arctan_roundtrip"] = np.max(np.abs(tan_k(kappa, arctan_k(kappa, t)) - t) / np.maximum(1.0, np.abs(t)))
    return {k: float(v) for k, v in out.items()}


def continuity_defect(x, eps: float = 1e-8) -> float:
    """``max |f(+-eps, x) - f(0, x)|`` over cos_k, sin_k and arcsin_k."""
    x = np.asarray(x, dtype=float)
    worst = 0.0
    for f in (cos_k, sin_k, arcsin_k):
        ref = np.asarray(f(0.0, x))
        for k in (eps, -eps):
            q = x if f is not arcsin_k else np.clip(x, -0.999 / np.sqrt(eps), 0.999 / np.sqrt(eps))
            worst = max(worst, float(np.max(np.abs(np.asarray(f(k, q)) - ref))))
    return worst
