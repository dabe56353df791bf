"""Time averages along trajectories and the classical virial identities.

Every check returns a :class:`VirialCheck` with ``residual = lhs - rhs``.
Windows are ``(t1, t2)`` pairs in trajectory time; endpoints that fall
between samples are filled in by cubic Hermite interpolation of the flow, so
averages over a detected period do not depend on where the samples lie.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .errors import DegenerateDegree, DomainError
from .integrators import PhaseState, Trajectory
from .systems import GeneratorSpec, SystemSpec, kinetic_energy

FD_REL_STEP = 1e-6
APERIODIC_SKIP = 0.1


@dataclass(frozen=True)
class AverageReport:
    mean: float
    window: tuple
    n_samples: int
    boundary_term: Optional[float] = None
    max_abs: float = 0.0


@dataclass
class VirialCheck:
    identity: str
    lhs: float
    rhs: float
    residual: float
    relative_residual: float
    window: Optional[tuple] = None
    system: str = ""
    params: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def passed(self, tol: float, relative: bool = False) -> bool:
        value = self.relative_residual if relative else abs(self.residual)
        return bool(value < tol)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window) if self.window is not None else None
        return _plain(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def make_check(identity, lhs, rhs, scale=None, window=None, system="", params=None, details=None) -> VirialCheck:
    """Assemble a check; ``relative_residual = |lhs - rhs| / scale``.

    ``scale`` defaults to ``max(|lhs|, |rhs|)``.
    """
    lhs, rhs = float(lhs), float(rhs)
    residual = lhs - rhs
    if scale is None:
        scale = max(abs(lhs), abs(rhs))
    scale = float(scale)
    if scale > 0:
        rel = abs(residual) / scale
    else:
        rel = 0.0 if residual == 0 else math.inf
    return VirialCheck(
        identity,
        lhs,
        rhs,
        residual,
        rel,
        tuple(float(w) for w in window) if window is not None else None,
        system,
        dict(params or {}),
        dict(details or {}),
    )


# ---------------------------------------------------------------------------
# windows and averages
# ---------------------------------------------------------------------------


def resolve_window(traj: Trajectory, window=None, period: Optional[float] = None, aperiodic: bool = False) -> tuple:
    """Window from an explicit pair, a period, or the trajectory extent.

    With ``aperiodic=True`` and nothing else given, the first tenth of the
    run is discarded as transient.
    """
    t0, tend = float(traj.t[0]), float(traj.t[-1])
    if window is not None:
        t1, t2 = float(window[0]), float(window[1])
    elif period is not None:
        t1, t2 = t0, t0 + float(period)
    elif aperiodic:
        t1, t2 = t0 + APERIODIC_SKIP * (tend - t0), tend
    else:
        t1, t2 = t0, tend
    slack = 1e-12 * max(1.0, abs(tend))
    if t2 > tend and t2 - tend < slack:
        t2 = tend
    if t1 < t0 and t0 - t1 < slack:
        t1 = t0
    if not t2 > t1:
        raise ValueError(f"empty averaging window ({t1}, {t2})")
    if t1 < t0 or t2 > tend:
        raise DomainError(f"window ({t1}, {t2}) exceeds trajectory [{t0}, {tend}]")
    return t1, t2


def window_samples(traj: Trajectory, window):
    """Times and phase points covering the window, interpolated at its ends."""
    t1, t2 = window
    t = traj.t
    i1 = int(np.searchsorted(t, t1, side="right"))
    i2 = int(np.searchsorted(t, t2, side="left"))
    a, b = traj.state_at(t1), traj.state_at(t2)
    ts = np.concatenate([[t1], t[i1:i2], [t2]])
    qs = np.vstack([a.q[None, :], traj.q[i1:i2], b.q[None, :]])
    ps = np.vstack([a.p[None, :], traj.p[i1:i2], b.p[None, :]])
    return ts, qs, ps


def time_average(traj: Trajectory, f: Callable, window=None, period: Optional[float] = None) -> AverageReport:
    """Trapezoidal time average of ``f(q, p)`` over a window.

    ``f`` must be vectorised over a leading sample axis.  When ``f`` is a
    :class:`GeneratorSpec` the report carries the boundary term
    ``[G(t2) - G(t1)] / (t2 - t1)`` and ``max_abs`` tracks boundedness of G.
    """
    if len(traj) < 2:
        raise ValueError("time_average needs at least 2 samples")
    win = resolve_window(traj, window, period)
    ts, qs, ps = window_samples(traj, win)
    vals = np.broadcast_to(np.asarray(f(qs, ps), dtype=float), ts.shape)
    span = win[1] - win[0]
    mean = float(trapezoid(vals, ts) / span)
    boundary = float((vals[-1] - vals[0]) / span) if isinstance(f, GeneratorSpec) else None
    return AverageReport(mean, win, len(ts), boundary, float(np.max(np.abs(vals))))


# ---------------------------------------------------------------------------
# Poisson brackets
# ---------------------------------------------------------------------------


def _generator_gradients(G: GeneratorSpec, q, p):
    if G.grad_q is not None and G.grad_p is not None:
        return np.asarray(G.grad_q(q, p), dtype=float), np.asarray(G.grad_p(q, p), dtype=float)
    # central differences, step 1e-6 (1 + |z|) per component
    gq = np.empty_like(q)
    gp = np.empty_like(p)
    for arr, out, is_q in ((q, gq, True), (p, gp, False)):
        for j in range(arr.shape[-1]):
            step = FD_REL_STEP * (1.0 + np.abs(arr[..., j]))
            up, dn = arr.copy(), arr.copy()
            up[..., j] += step
            dn[..., j] -= step
            if is_q:
                out[..., j] = (G(up, p) - G(dn, p)) / (2 * step)
            else:
                out[..., j] = (G(q, up) - G(q, dn)) / (2 * step)
    return gq, gp


def _bracket_parts(G: GeneratorSpec, system: SystemSpec, q, p):
    """``({G, H0}, {G, V})`` at one or many phase points."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    gq, gp = _generator_gradients(G, q, p)
    m = system.mass_at(q)
    dH0_dp = p / np.asarray(m)[..., None] if np.ndim(m) else p / m
    if system.mass.is_constant:
        dH0_dq = np.zeros_like(q)
    else:
        x = q[..., 0]
        dH0_dq = (-np.sum(p * p, axis=-1) * system.mass.m_prime(x) / (2.0 * np.square(system.mass.m(x))))[..., None]
    grad_V = np.asarray(system.potential.grad_V(q), dtype=float)
    part_h0 = np.sum(gq * dH0_dp - gp * dH0_dq, axis=-1)
    part_v = -np.sum(gp * grad_V, axis=-1)
    return part_h0, part_v


def poisson_bracket(G: GeneratorSpec, system: SystemSpec, state: PhaseState) -> float:
    """``{G, H}`` with the sign fixed by ``dG/dt = {G, H}`` along the flow."""
    system.check_domain(state.q)
    h0, v = _bracket_parts(G, system, np.atleast_1d(state.q), np.atleast_1d(state.p))
    return float(h0 + v)


# ---------------------------------------------------------------------------
# identities
# ---------------------------------------------------------------------------


def _energy_in_window(traj: Trajectory, window):
    t = traj.t
    sel = (t >= window[0]) & (t <= window[1])
    e = traj.energies[sel] if np.any(sel) else traj.energies
    return float(traj.energies[0]), float(np.max(np.abs(e - traj.energies[0])))


def hypervirial_check(system: SystemSpec, G: GeneratorSpec, traj: Trajectory, window=None, period=None) -> VirialCheck:
    """``[G(t2) - G(t1)] / (t2 - t1)`` against ``<{G, H}>`` on the same window.

    For the exact flow both sides are equal on any window.  The residual is
    the integrator's defect; the split ``<{G, H0}>`` and ``<{G, V}>`` is
    reported in ``details`` (for G = q.p these are ``<2 H0>`` and
    ``-<q . grad V>``).
    """
    win = resolve_window(traj, window, period)
    ts, qs, ps = window_samples(traj, win)
    span = win[1] - win[0]
    g = np.asarray(G(qs, ps), dtype=float)
    h0, v = _bracket_parts(G, system, qs, ps)
    mean_h0 = float(trapezoid(h0, ts) / span)
    mean_v = float(trapezoid(v, ts) / span)
    lhs = float((g[-1] - g[0]) / span)
    rhs = mean_h0 + mean_v
    return make_check(
        "hypervirial",
        lhs,
        rhs,
        scale=max(abs(mean_h0), abs(mean_v)),
        window=win,
        system=system.name,
        params=dict(system.params, generator=G.name, step=traj.step),
        details={"bracket_H0": mean_h0, "bracket_V": mean_v, "max_abs_G": float(np.max(np.abs(g)))},
    )


def homogeneous_virial_check(system: SystemSpec, k: float, traj: Trajectory, window=None, period=None) -> VirialCheck:
    """``<E_c> = k E / (k + 2)``, with ``<V> = 2 E / (k + 2)`` in ``details``."""
    k = float(k)
    if k == -2.0:
        raise DegenerateDegree("k = -2: the homogeneous averages are undefined")
    declared = system.potential.homogeneity_degree
    if declared is not None and not math.isclose(declared, k):
        raise ValueError(f"potential is homogeneous of degree {declared}, not {k}")
    win = resolve_window(traj, window, period)
    ts, qs, ps = window_samples(traj, win)
    span = win[1] - win[0]
    ec = float(trapezoid(kinetic_energy(system, qs, ps), ts) / span)
    vv = float(trapezoid(system.potential.V(qs), ts) / span)
    E, drift = _energy_in_window(traj, win)
    return make_check(
        "homogeneous-virial",
        ec,
        k * E / (k + 2),
        scale=abs(E),
        window=win,
        system=system.name,
        params=dict(system.params, k=k),
        details={
            "E": E,
            "energy_drift": drift,
            "mean_V": vv,
            "expected_V": 2 * E / (k + 2),
            "residual_V": vv - 2 * E / (k + 2),
        },
    )


def lagrangian_virial_check(system: SystemSpec, G: GeneratorSpec, traj: Trajectory, window=None, period=None) -> VirialCheck:
    """Boundary term of G against ``a <L>`` with ``L = E_c - V``.

    ``G`` must carry its Lagrangian scaling constant ``a`` (``X(L) = a L``).
    The relative residual is scaled by ``|a <L>| + |E|``.
    """
    if G.a is None:
        raise ValueError("generator has no scaling constant a")
    win = resolve_window(traj, window, period)
    ts, qs, ps = window_samples(traj, win)
    span = win[1] - win[0]
    lag = kinetic_energy(system, qs, ps) - system.potential.V(qs)
    mean_L = float(trapezoid(lag, ts) / span)
    g = np.asarray(G(qs, ps), dtype=float)
    lhs = float((g[-1] - g[0]) / span)
    rhs = G.a * mean_L
    E, drift = _energy_in_window(traj, win)
    return make_check(
        "lagrangian-virial",
        lhs,
        rhs,
        scale=abs(rhs) + abs(E),
        window=win,
        system=system.name,
        params=dict(system.params, a=G.a, generator=G.name),
        details={"mean_L": mean_L, "E": E, "energy_drift": drift, "max_abs_G": float(np.max(np.abs(g)))},
    )


def nonstrict_canonical_check(system: SystemSpec, d: float, traj: Trajectory, window=None, period=None) -> VirialCheck:
    """``(d + 2) <H0> = d E`` from the scaling field of valence ``(d+2)/(d-2)``.

    The field ``X = 2/(d-2) q.d/dq + d/(d-2) p.d/dp`` satisfies
    ``X(H) = b H`` with ``b = 2d/(d-2)``; its largest pointwise defect on
    the window is reported as ``scaling_defect``.
    """
    d = float(d)
    if d == 2.0:
        raise DegenerateDegree("d = 2: the valence (d+2)/(d-2) is undefined")
    declared = system.potential.homogeneity_degree
    if declared is not None and not math.isclose(declared, d):
        raise ValueError(f"potential is homogeneous of degree {declared}, not {d}")
    if not system.mass.is_constant:
        raise ValueError("non-strict scaling check needs a constant mass")
    valence = (d + 2) / (d - 2)
    b = 2 * d / (d - 2)
    win = resolve_window(traj, window, period)
    ts, qs, ps = window_samples(traj, win)
    span = win[1] - win[0]
    h0 = kinetic_energy(system, qs, ps)
    vv = system.potential.V(qs)
    q_grad = np.sum(qs * system.potential.grad_V(qs), axis=-1)
    defect = (valence - 1) / 2 * q_grad + (valence + 1) * h0 - b * (h0 + vv)
    mean_h0 = float(trapezoid(h0, ts) / span)
    mean_v = float(trapezoid(vv, ts) / span)
    E, drift = _energy_in_window(traj, win)
    return make_check(
        "nonstrict-canonical",
        (d + 2) * mean_h0,
        d * E,
        scale=abs(E),
        window=win,
        system=system.name,
        params=dict(system.params, d=d, valence=valence, b=b),
        details={
            "E": E,
            "energy_drift": drift,
            "two_H0": 2 * mean_h0,
            "d_V": d * mean_v,
            "scaling_defect": float(np.max(np.abs(defect))),
        },
    )


# ---------------------------------------------------------------------------
# 1/T decay
# ---------------------------------------------------------------------------


def average_envelope(t, c, T: float) -> float:
    """``max_{s in [T/2, T]} |int_0^s c| / T`` for a series starting at t=0.

    Plain running averages oscillate with the motion; the envelope over the
    second half of the window isolates the ``1/T`` trend of a bounded
    integral.
    """
    t = np.asarray(t, dtype=float)
    c = np.asarray(c, dtype=float)
    if T > t[-1] - t[0] + 1e-12:
        raise ValueError("series shorter than T")
    integral = cumulative_trapezoid(c, t, initial=0.0)
    sel = (t - t[0] >= T / 2) & (t - t[0] <= T + 1e-12)
    return float(np.max(np.abs(integral[sel])) / T)


def decay_ratio(t, c, T: float) -> float:
    """Envelope at ``2T`` over envelope at ``T``; about 0.5 for a 1/T decay."""
    return average_envelope(t, c, 2 * T) / average_envelope(t, c, T)


def bracket_series(G: GeneratorSpec, system: SystemSpec, traj: Trajectory) -> np.ndarray:
    """``{G, H}`` at every sample."""
    h0, v = _bracket_parts(G, system, traj.q, traj.p)
    return h0 + v


__all__ = [
    "AverageReport",
    "VirialCheck",
    "make_check",
    "resolve_window",
    "window_samples",
    "time_average",
    "poisson_bracket",
    "hypervirial_check",
    "homogeneous_virial_check",
    "lagrangian_virial_check",
    "nonstrict_canonical_check",
    "average_envelope",
    "decay_ratio",
    "bracket_series",
]
