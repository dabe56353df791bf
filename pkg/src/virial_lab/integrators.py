"""Symplectic one-step integrators, trajectories and period detection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .errors import ConvergenceError, DomainError, EscapeError, MethodMismatch
from .systems import SystemSpec, total_energy

VERLET = "verlet"
MIDPOINT = "midpoint"
METHODS = (VERLET, MIDPOINT)


@dataclass(frozen=True)
class PhaseState:
    q: np.ndarray
    p: np.ndarray
    t: float = 0.0

    @classmethod
    def of(cls, q, p, t: float = 0.0) -> "PhaseState":
        return cls(np.atleast_1d(np.asarray(q, dtype=float)), np.atleast_1d(np.asarray(p, dtype=float)), float(t))


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = MIDPOINT
    step: float = 1e-3
    t_end: float = 10.0
    fixed_point_tol: float = 1e-12
    max_fixed_point_iters: int = 50
    sample_stride: int = 1
    escape_bound: float = 1e6

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not self.fixed_point_tol > 0:
            raise ValueError("fixed_point_tol must be positive")
        if self.sample_stride < 1:
            raise ValueError("sample_stride must be >= 1")


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled solution of Hamilton's equations.

    Arrays: ``t`` (N,), ``q`` and ``p`` (N, dim), ``energies`` (N,).
    """

    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    energies: np.ndarray
    system: SystemSpec = field(repr=False)
    step: float = 0.0
    method: str = MIDPOINT

    def __len__(self) -> int:
        return len(self.t)

    @property
    def samples(self) -> list:
        return [PhaseState(self.q[i], self.p[i], float(self.t[i])) for i in range(len(self.t))]

    @property
    def spacing(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    def velocity_field(self):
        """Hamiltonian vector field (dq/dt, dp/dt) at every sample."""
        return _rhs_arrays(self.system, self.q, self.p)

    def state_at(self, t: float) -> PhaseState:
        """Cubic Hermite interpolation of the phase point at time ``t``."""
        t = float(t)
        if not self.t[0] <= t <= self.t[-1]:
            raise DomainError(f"t={t} outside trajectory [{self.t[0]}, {self.t[-1]}]")
        i = int(np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, len(self.t) - 2))
        z = _hermite(self.system, self.t[i], self.t[i + 1], self.q[i], self.p[i], self.q[i + 1], self.p[i + 1], t)
        n = self.q.shape[1]
        return PhaseState(z[:n], z[n:], t)

    def extended(self, other: "Trajectory") -> "Trajectory":
        """Concatenate a continuation that starts at this trajectory's last sample."""
        if not np.isclose(other.t[0], self.t[-1], rtol=0, atol=1e-12 * max(1.0, abs(self.t[-1]))):
            raise ValueError("continuation must start where this trajectory ends")
        return Trajectory(
            np.concatenate([self.t, other.t[1:]]),
            np.concatenate([self.q, other.q[1:]]),
            np.concatenate([self.p, other.p[1:]]),
            np.concatenate([self.energies, other.energies[1:]]),
            self.system,
            self.step,
            self.method,
        )


# ---------------------------------------------------------------------------
# vector field
# ---------------------------------------------------------------------------


def _rhs_arrays(system: SystemSpec, q, p):
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    grad = np.asarray(system.potential.grad_V(q), dtype=float)
    if system.mass.is_constant:
        return p / system.mass.m0, -grad
    x = q[..., 0]
    m = system.mass.m(x)
    mp = system.mass.m_prime(x)
    dq = p / np.asarray(m)[..., None]
    dp = -grad + (np.sum(p * p, axis=-1) * mp / (2.0 * m * m))[..., None]
    return dq, dp


def hamilton_rhs(system: SystemSpec, state: PhaseState):
    """Return ``(dq/dt, dp/dt)``; for 1-D PDM, ``dp/dt = -V' + p^2 m' / (2 m^2)``."""
    system.check_domain(state.q)
    return _rhs_arrays(system, state.q, state.p)


def _hermite(system, t0, t1, q0, p0, q1, p1, t):
    h = t1 - t0
    s = (t - t0) / h
    z0 = np.concatenate([q0, p0])
    z1 = np.concatenate([q1, p1])
    f0 = np.concatenate(_rhs_arrays(system, q0, p0))
    f1 = np.concatenate(_rhs_arrays(system, q1, p1))
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return h00 * z0 + h10 * h * f0 + h01 * z1 + h11 * h * f1


# ---------------------------------------------------------------------------
# steppers
# ---------------------------------------------------------------------------


def _verlet_kernel(system: SystemSpec):
    if not system.mass.is_constant:
        raise MethodMismatch("Stormer-Verlet requires a constant mass; use implicit midpoint")
    m0 = system.mass.m0
    grad_V = system.potential.grad_V

    def step(q, p, h):
        p_half = p - 0.5 * h * grad_V(q)
        q_new = q + h * p_half / m0
        return q_new, p_half - 0.5 * h * grad_V(q_new)

    return step


def _midpoint_kernel(system: SystemSpec, tol: float, max_iter: int):
    n = system.dim
    rhs = lambda z: np.concatenate(_rhs_arrays(system, z[:n], z[n:]))  # noqa: E731

    def step(q, p, h):
        z0 = np.concatenate([q, p])
        f0 = rhs(z0)
        z1 = z0 + h * f0
        for _ in range(max_iter):
            z_new = z0 + h * rhs(0.5 * (z0 + z1))
            delta = np.max(np.abs(z_new - z1))
            z1 = z_new
            if not np.isfinite(delta):
                break
            if delta <= tol * max(1.0, np.max(np.abs(z1))):
                return z1[:n], z1[n:]
        raise ConvergenceError(f"implicit midpoint: no convergence in {max_iter} iterations (h={h})")

    return step


def step_verlet(system: SystemSpec, state: PhaseState, h: float) -> PhaseState:
    """One kick-drift-kick step."""
    q, p = _verlet_kernel(system)(np.asarray(state.q, float), np.asarray(state.p, float), h)
    return PhaseState(q, p, state.t + h)


def step_implicit_midpoint(
    system: SystemSpec, state: PhaseState, h: float, tol: float = 1e-12, max_iter: int = 50
) -> PhaseState:
    """Solve ``z1 = z0 + h f((z0 + z1)/2)`` by fixed-point iteration."""
    system.check_domain(state.q)
    q, p = _midpoint_kernel(system, tol, max_iter)(np.asarray(state.q, float), np.asarray(state.p, float), h)
    return PhaseState(q, p, state.t + h)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


def integrate(system: SystemSpec, state0: PhaseState, config: IntegratorConfig) -> Trajectory:
    """Integrate from ``state0.t`` to ``config.t_end``.

    The requested step is shortened so that a whole number of strided steps
    lands exactly on ``t_end``.
    """
    t0 = float(state0.t)
    span = config.t_end - t0
    if span < 0:
        raise ValueError("t_end must not precede the initial time")
    q = np.array(state0.q, dtype=float)
    p = np.array(state0.p, dtype=float)
    system.check_domain(q)
    stride = config.sample_stride
    n_samples = math.ceil(span / (config.step * stride) - 1e-9) if span > 0 else 0
    n_steps = n_samples * stride
    h = span / n_steps if n_steps else config.step

    if config.method == VERLET:
        kernel = _verlet_kernel(system)
    else:
        kernel = _midpoint_kernel(system, config.fixed_point_tol, config.max_fixed_point_iters)

    qs = np.empty((n_samples + 1, system.dim))
    ps = np.empty((n_samples + 1, system.dim))
    qs[0], ps[0] = q, p
    bound = config.escape_bound
    for k in range(1, n_samples + 1):
        for _ in range(stride):
            q, p = kernel(q, p, h)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ConvergenceError(f"non-finite state at t={t0 + k * stride * h}")
        if np.linalg.norm(q) > bound:
            raise EscapeError(f"|q| exceeded {bound:g} at t={t0 + k * stride * h:.6g}")
        system.check_domain(q)
        qs[k], ps[k] = q, p

    times = t0 + h * stride * np.arange(n_samples + 1)
    if n_samples:
        times[-1] = config.t_end
    energies = np.asarray(total_energy(system, qs, ps), dtype=float)
    return Trajectory(times, qs, ps, energies, system, h, config.method)


def _return_distance_roots(traj: Trajectory):
    """Yield (i, g_i, g_{i+1}) for cells where d/dt |z - z0|^2 turns from - to +."""
    z = np.hstack([traj.q, traj.p])
    f = np.hstack(traj.velocity_field())
    g = np.sum((z - z[0]) * f, axis=1)
    idx = np.nonzero((g[1:-1] < 0) & (g[2:] >= 0))[0] + 1
    return idx


def detect_period(traj: Trajectory, tol: Optional[float] = None) -> Optional[float]:
    """Smallest T > 0 with ``|z(t0 + T) - z(t0)| < tol``, or None.

    Candidate returns are bracketed by sign changes of ``(z - z0) . dz/dt``
    (the half-derivative of the squared return distance) between samples and
    refined by root finding on the cubic Hermite interpolant.  ``tol``
    defaults to ``1e-6`` times the largest phase-space norm on the trajectory.
    """
    if len(traj) < 3:
        raise ValueError("detect_period needs at least 3 samples")
    z_all = np.hstack([traj.q, traj.p])
    if tol is None:
        tol = 1e-6 * max(1.0, float(np.max(np.linalg.norm(z_all, axis=1))))
    z0 = z_all[0]
    n = traj.q.shape[1]
    system = traj.system

    for i in _return_distance_roots(traj):
        ta, tb = traj.t[i], traj.t[i + 1]

        def interp(t):
            return _hermite(system, ta, tb, traj.q[i], traj.p[i], traj.q[i + 1], traj.p[i + 1], t)

        def g(t):
            z = interp(t)
            return float(np.dot(z - z0, np.concatenate(_rhs_arrays(system, z[:n], z[n:]))))

        ga, gb = g(ta), g(tb)
        if ga == 0.0:
            t_star = ta
        elif gb == 0.0:
            t_star = tb
        elif ga * gb < 0:
            t_star = brentq(g, ta, tb, xtol=1e-15, rtol=1e-15)
        else:
            # the interpolant disagrees with the samples: take the closer node
            t_star = ta if abs(ga) < abs(gb) else tb
        if np.linalg.norm(interp(t_star) - z0) < tol:
            return float(t_star - traj.t[0])
    return None


def integrate_one_period(
    system: SystemSpec,
    state0: PhaseState,
    config: IntegratorConfig,
    tol: Optional[float] = None,
    max_time: Optional[float] = None,
):
    """Integrate in chunks of ``config.t_end - t0`` until the orbit returns.

    Returns ``(trajectory, period)``; the trajectory covers at least one period.
    """
    t0 = float(state0.t)
    chunk = config.t_end - t0
    if chunk <= 0:
        raise ValueError("t_end must exceed the initial time")
    if max_time is None:
        max_time = 100.0 * chunk
    traj = integrate(system, state0, config)
    while True:
        T = detect_period(traj, tol)
        if T is not None:
            return traj, T
        if traj.t[-1] - t0 >= max_time:
            raise ConvergenceError(f"no return to the initial state within t={max_time:g}")
        last = PhaseState(traj.q[-1], traj.p[-1], float(traj.t[-1]))
        more = integrate(system, last, _with_t_end(config, float(traj.t[-1]) + chunk))
        traj = traj.extended(more)


def _with_t_end(config: IntegratorConfig, t_end: float) -> IntegratorConfig:
    from dataclasses import replace

    return replace(config, t_end=t_end)


__all__ = [
    "PhaseState",
    "IntegratorConfig",
    "Trajectory",
    "hamilton_rhs",
    "step_verlet",
    "step_implicit_midpoint",
    "integrate",
    "detect_period",
    "integrate_one_period",
    "VERLET",
    "MIDPOINT",
]
