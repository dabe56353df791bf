"""Experiment pipelines driven by validated configuration dictionaries.

Each pipeline returns a list of :class:`Record` objects, one per checked
relation, carrying its declared tolerance and pass flag.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import ktrig, quantum
from .errors import ConfigError, DegenerateDegree
from .integrators import IntegratorConfig, PhaseState, integrate, integrate_one_period
from .systems import (
    MassProfile,
    build_pdm_generator,
    build_pdm_potential,
    build_xi,
    clausius_generator,
    get_system,
    harmonic,
    kepler_state,
    ml_system,
    pdm_custom,
)
from .virial import (
    VirialCheck,
    homogeneous_virial_check,
    hypervirial_check,
    lagrangian_virial_check,
    make_check,
    nonstrict_canonical_check,
)

THREADS_ENV = "VIRIAL_LAB_THREADS"


@dataclass
class Record:
    check: VirialCheck
    tolerance: float
    relative: bool = False

    @property
    def value(self) -> float:
        return self.check.relative_residual if self.relative else abs(self.check.residual)

    @property
    def passed(self) -> bool:
        return bool(self.value < self.tolerance)

    def to_dict(self) -> dict:
        d = self.check.to_dict()
        d.update(tolerance=self.tolerance, mode="relative" if self.relative else "absolute", passed=self.passed)
        return d


def max_workers() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc


# ---------------------------------------------------------------------------
# defaults (the acceptance settings)
# ---------------------------------------------------------------------------

DEFAULTS = {
    "classical-virial": {
        "system": {"name": "harmonic", "params": {}},
        "state": {"q": [1.0], "p": [0.0]},
        "integrator": {"method": "midpoint", "step": 1e-3, "t_end": 7.0},
        "window": {"mode": "period"},
        "tolerances": {"homogeneous-kinetic": 1e-6, "homogeneous-potential": 1e-6, "hypervirial": 1e-6},
    },
    "pdm": {
        "system": {"name": "pdm-custom", "params": {"lam": 1.0, "a": 2.0, "C1": 1.0, "C2": 1.0}},
        "state": {"energy": 1.5},
        "integrator": {"method": "midpoint", "step": 1e-3, "t_end": 5.0},
        "window": {"mode": "period"},
        "options": {"harmonic_reference": True},
        "tolerances": {"lagrangian-virial": 1e-3, "pdm-period": 1e-4, "hypervirial": 1e-6, "harmonic-mean-L": 1e-6},
    },
    "ml-oscillator": {
        "integrator": {"method": "midpoint", "step": 2e-3, "t_end": 6.0},
        "options": {"lambdas": [0.5, 1.0, 2.0], "alpha": 1.0, "amplitude": 1.0},
        "tolerances": {"ml-period": 1e-4},
    },
    "nonstrict": {
        "system": {"name": "quartic", "params": {}},
        "state": {"q": [1.0], "p": [0.0]},
        "integrator": {"method": "midpoint", "step": 1e-3, "t_end": 4.0},
        "window": {"mode": "period"},
        "tolerances": {"nonstrict-canonical": 1e-3, "reject-d2": 0.5, "nonstrict-vs-homogeneous": 1e-12},
    },
    "quantum-virial": {
        "system": {"name": "harmonic", "params": {}},
        "grid": {"x_min": -12.0, "x_max": 12.0, "n": 2001, "n_states": 6},
        "tolerances": {"eigenvalue": 1e-3, "quantum-virial": 1e-4},
    },
    "pdm-quantum": {
        "system": {"name": "pdm-custom", "params": {"lam": 1.0, "a": 2.0, "C1": 1.0, "C2": 1.0}},
        "grid": {"x_min": -400.0, "x_max": 100.0, "n": 25000, "n_states": 3, "spacing": 0.01},
        "tolerances": {"pdm-quantum": 1e-3, "u-spectrum": 1e-6},
    },
    "fock-scan": {
        "system": {"name": "harmonic", "params": {}},
        "grid": {"x_min": -12.0, "x_max": 12.0, "n": 2001, "n_states": 4},
        "options": {"delta": 1e-3, "sigma": 2.0, "scale_factors": [0.25, 4.0]},
        "tolerances": {"fock-slope": 1e-4, "fock-stationarity": 1e-6, "fock-lambda-star": 1e-9},
    },
    "ehrenfest": {
        "system": {"name": "harmonic", "params": {}},
        "grid": {"x_min": -12.0, "x_max": 12.0, "n": 2001},
        "options": {"x0": 1.0, "sigma": 1.0, "dt": 1e-3, "T": 50.0},
        "tolerances": {"ehrenfest": 5e-5, "hypervirial-decay": 0.2, "norm": 1e-9},
    },
    "ktrig-check": {
        "options": {"kappas": [-2.0, -1.0, 0.0, 1.0, 2.0], "n_points": 500, "x_range": 3.0, "seed": 0},
        "tolerances": {"ktrig-identity": 1e-12, "ktrig-continuity": 1e-7},
    },
}


# sections whose fields only make sense together
_REPLACED = ("state", "window")


def merged(config: dict) -> dict:
    """Config with the experiment's defaults filled in section by section."""
    base = DEFAULTS[config["experiment"]]
    out = {"experiment": config["experiment"]}
    for key in set(base) | set(config):
        if key == "experiment":
            continue
        a, b = base.get(key), config.get(key)
        if isinstance(a, dict) and isinstance(b, dict) and key not in _REPLACED:
            c = dict(a)
            if key == "system" and b.get("name", a.get("name")) != a.get("name"):
                c = {}
            c.update(b)
            if key == "system":
                c.setdefault("params", {})
            out[key] = c
        else:
            out[key] = b if b is not None else a
    return out


class _Tol:
    def __init__(self, cfg: dict):
        self.table = cfg.get("tolerances", {})

    def __call__(self, name: str) -> float:
        if name not in self.table:
            raise ConfigError(f"tolerances: missing entry {name!r}")
        return float(self.table[name])


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _system(cfg: dict):
    sys_cfg = cfg.get("system")
    if sys_cfg is None:
        raise ConfigError("system: required for this experiment")
    try:
        return get_system(sys_cfg["name"], **sys_cfg.get("params", {}))
    except TypeError as exc:
        raise ConfigError(f"system.params: {exc}") from exc


def _integrator(cfg: dict) -> IntegratorConfig:
    try:
        return IntegratorConfig(**cfg.get("integrator", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"integrator: {exc}") from exc


def _initial_state(system, cfg: dict) -> PhaseState:
    st = cfg.get("state", {})
    if "q" in st or "p" in st:
        if not ("q" in st and "p" in st):
            raise ConfigError("state: q and p must be given together")
        q, p = np.atleast_1d(np.asarray(st["q"], float)), np.atleast_1d(np.asarray(st["p"], float))
        if q.shape != (system.dim,) or p.shape != (system.dim,):
            raise ConfigError(f"state: q and p need {system.dim} components")
        return PhaseState(q, p)
    if "eccentricity" in st:
        if system.name != "kepler":
            raise ConfigError("state.eccentricity: only for the kepler system")
        q, p = kepler_state(st["eccentricity"], st.get("energy", -0.5), system.params.get("mu", 1.0), system.params.get("m", 1.0))
        return PhaseState(q, p)
    if "amplitude" in st:
        q = np.zeros(system.dim)
        q[0] = st["amplitude"]
        return PhaseState(q, np.zeros(system.dim))
    if "energy" in st:
        # start at the origin with all energy kinetic (1-D)
        if system.dim != 1:
            raise ConfigError("state.energy alone needs a 1-D system")
        q = np.zeros(1)
        v0 = float(system.potential.V(q))
        if st["energy"] <= v0:
            raise ConfigError(f"state.energy must exceed V(0) = {v0}")
        m0 = float(system.mass_at(q))
        return PhaseState(q, np.array([math.sqrt(2 * m0 * (st["energy"] - v0))]))
    raise ConfigError("state: give q and p, amplitude, eccentricity or energy")


def _trajectory(system, state, integ: IntegratorConfig, cfg: dict):
    """Integrate and resolve the averaging window; returns (traj, window, period)."""
    win = cfg.get("window", {"mode": "period"})
    mode = win.get("mode", "period")
    if mode == "period":
        traj, T = integrate_one_period(system, state, integ, tol=win.get("period_tol"), max_time=win.get("max_time"))
        return traj, (float(traj.t[0]), float(traj.t[0]) + T), T
    traj = integrate(system, state, integ)
    t0, tend = float(traj.t[0]), float(traj.t[-1])
    if mode == "fixed":
        if "t1" not in win or "t2" not in win:
            raise ConfigError("window: fixed mode needs t1 and t2")
        return traj, (win["t1"], win["t2"]), None
    if mode == "aperiodic":
        return traj, (t0 + 0.1 * (tend - t0), tend), None
    return traj, (t0, tend), None


def _grid(cfg: dict) -> quantum.Grid:
    g = cfg.get("grid", {})
    try:
        return quantum.Grid(g["x_min"], g["x_max"], g["n"])
    except KeyError as exc:
        raise ConfigError(f"grid: missing {exc.args[0]!r}") from exc
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from exc


# ---------------------------------------------------------------------------
# pipelines
# ---------------------------------------------------------------------------


def run_classical_virial(cfg: dict) -> list:
    tol = _Tol(cfg)
    system = _system(cfg)
    k = system.potential.homogeneity_degree
    if k is None:
        raise ConfigError(f"system {system.name!r} has no homogeneity degree")
    state = _initial_state(system, cfg)
    traj, window, T = _trajectory(system, state, _integrator(cfg), cfg)
    hom = homogeneous_virial_check(system, k, traj, window=window)
    hom.details["period"] = T
    pot = make_check(
        "homogeneous-potential",
        hom.details["mean_V"],
        hom.details["expected_V"],
        scale=abs(hom.details["E"]),
        window=window,
        system=system.name,
        params=hom.params,
    )
    hom.identity = "homogeneous-kinetic"
    hv = hypervirial_check(system, clausius_generator(system.dim), traj, window=window)
    return [
        Record(hom, tol("homogeneous-kinetic")),
        Record(pot, tol("homogeneous-potential")),
        Record(hv, tol("hypervirial")),
    ]


def run_pdm(cfg: dict) -> list:
    tol = _Tol(cfg)
    sys_cfg = cfg["system"]
    if sys_cfg["name"] != "pdm-custom":
        raise ConfigError("system.name: the pdm experiment needs 'pdm-custom'")
    try:
        system, gen, xi = pdm_custom(**sys_cfg.get("params", {}))
    except TypeError as exc:
        raise ConfigError(f"system.params: {exc}") from exc
    state = _initial_state(system, cfg)
    integ = _integrator(cfg)
    traj, window, T = _trajectory(system, state, integ, cfg)
    lag = lagrangian_virial_check(system, gen, traj, window=window)
    out = [Record(lag, tol("lagrangian-virial"), relative=True)]
    out.append(Record(hypervirial_check(system, gen, traj, window=window), tol("hypervirial")))
    if T is not None:
        p = system.params
        # in u = int sqrt(m) the motion is harmonic with this frequency
        omega = abs(p["a"]) * math.sqrt(p["C2"] / 2.0) / abs(p["C1"])
        out.append(Record(make_check("pdm-period", T, 2 * math.pi / omega, system=system.name, params=p), tol("pdm-period"), relative=True))
    if cfg.get("options", {}).get("harmonic_reference", False):
        osc = harmonic()
        lift = build_pdm_generator(osc.mass, build_xi(osc.mass, 2.0, 0.0))
        h_traj, T_h = integrate_one_period(osc, PhaseState.of(1.0, 0.0), IntegratorConfig(integ.method, integ.step, 7.0))
        ref = lagrangian_virial_check(osc, lift, h_traj, period=T_h)
        mean_L = make_check("harmonic-mean-L", ref.details["mean_L"], 0.0, scale=abs(ref.details["E"]), window=ref.window, system="harmonic", details={"boundary": ref.lhs})
        out.append(Record(mean_L, tol("harmonic-mean-L")))
    return out


def _ml_period(lam, alpha, amplitude, integ, tol_name, tol):
    system = ml_system(lam, alpha)
    t_cap = 2 * (2 * math.pi * math.sqrt(1 + lam * amplitude**2) / alpha)
    _, T = integrate_one_period(system, PhaseState.of(amplitude, 0.0), integ, max_time=max(t_cap, integ.t_end))
    expected = 2 * math.pi * math.sqrt(1 + lam * amplitude**2) / alpha
    check = make_check("ml-period", T, expected, system="ml", params={"lam": lam, "alpha": alpha, "amplitude": amplitude})
    return Record(check, tol(tol_name), relative=True)


def run_ml_oscillator(cfg: dict) -> list:
    tol = _Tol(cfg)
    opt = cfg.get("options", {})
    integ = _integrator(cfg)
    lambdas = opt.get("lambdas", [1.0])
    alpha, amplitude = opt.get("alpha", 1.0), opt.get("amplitude", 1.0)
    for lam in lambdas:
        if lam < 0 and amplitude >= 1 / math.sqrt(-lam):
            raise ConfigError(f"options.amplitude: outside the domain |q| < {1 / math.sqrt(-lam):g} for lam={lam}")
    with ThreadPoolExecutor(max_workers=max_workers()) as pool:
        return list(pool.map(lambda lam: _ml_period(lam, alpha, amplitude, integ, "ml-period", tol), lambdas))


def run_nonstrict(cfg: dict) -> list:
    tol = _Tol(cfg)
    system = _system(cfg)
    d = cfg.get("options", {}).get("d", system.potential.homogeneity_degree)
    if d is None:
        raise ConfigError("options.d: the system has no homogeneity degree")
    state = _initial_state(system, cfg)
    traj, window, _ = _trajectory(system, state, _integrator(cfg), cfg)
    ns = nonstrict_canonical_check(system, d, traj, window=window)
    out = [Record(ns, tol("nonstrict-canonical"), relative=True)]
    try:
        nonstrict_canonical_check(system, 2.0, traj, window=window)
        rejected = 0.0
    except DegenerateDegree:
        rejected = 1.0
    except ValueError:
        # degree mismatch is raised after the d = 2 guard, so this is a failure
        rejected = 0.0
    out.append(Record(make_check("reject-d2", rejected, 1.0, system=system.name), tol("reject-d2")))
    hom = homogeneous_virial_check(system, d, traj, window=window)
    cross = make_check("nonstrict-vs-homogeneous", ns.residual, (d + 2) * hom.residual, scale=abs(ns.details["E"]), system=system.name)
    out.append(Record(cross, tol("nonstrict-vs-homogeneous")))
    return out


def _harmonic_params(cfg: dict):
    system = _system(cfg)
    if system.name != "harmonic" or system.dim != 1:
        raise ConfigError("system: this quantum experiment needs the 1-D harmonic oscillator")
    omega = float(system.params.get("omega", 1.0))
    return system, omega


def _write_csv(cfg: dict, spectrum) -> None:
    path = cfg.get("output", {}).get("eigenfunctions")
    if path:
        quantum.write_eigenfunctions_csv(spectrum, path)


def run_quantum_virial(cfg: dict) -> list:
    tol = _Tol(cfg)
    system, omega = _harmonic_params(cfg)
    grid = _grid(cfg)
    H = quantum.build_hamiltonian(grid, system.mass, system.potential)
    spectrum = quantum.eigensolve(H, cfg["grid"].get("n_states", 6))
    _write_csv(cfg, spectrum)
    out = []
    for n, E in enumerate(spectrum.eigenvalues):
        out.append(Record(make_check("eigenvalue", E, omega * (n + 0.5), system="harmonic", params={"state": n}), tol("eigenvalue")))
    for c in quantum.quantum_virial_check(spectrum, H.kinetic, H.potential, 2.0):
        c.system = "harmonic"
        out.append(Record(c, tol("quantum-virial")))
    return out


def run_pdm_quantum(cfg: dict) -> list:
    tol = _Tol(cfg)
    sys_cfg = cfg["system"]
    if sys_cfg["name"] != "pdm-custom":
        raise ConfigError("system.name: the pdm-quantum experiment needs 'pdm-custom'")
    params = dict(lam=1.0, a=2.0, C1=1.0, C2=1.0)
    unknown = set(sys_cfg.get("params", {})) - set(params)
    if unknown:
        raise ConfigError(f"system.params: unknown keys {sorted(unknown)}")
    params.update(sys_cfg.get("params", {}))
    grid = _grid(cfg)
    g = cfg["grid"]
    a = float(params["a"])
    b = float(cfg.get("options", {}).get("b", -a))
    mass = MassProfile.ml(params["lam"])
    box = (grid.x_min, grid.x_max)
    spacing = g.get("spacing", 0.01)
    xi = build_xi(mass, a, params["C1"], domain=box, spacing=spacing)
    # V = C2 exp(-int b / xi)
    pot = build_pdm_potential(xi, b, params["C2"], sign=-1, across_zero=True, domain=box, spacing=spacing)
    H = quantum.build_hamiltonian(grid, mass, pot)
    spectrum = quantum.eigensolve(H, g.get("n_states", 3))
    _write_csv(cfg, spectrum)
    out = []
    for c in quantum.pdm_quantum_check(spectrum, H.kinetic, H.potential, a, b):
        c.system = "pdm-custom"
        c.params.update(params)
        out.append(Record(c, tol("pdm-quantum"), relative=True))
    if b == -a:
        omega = abs(a) * math.sqrt(params["C2"] / 2.0) / abs(params["C1"])
        for n, E in enumerate(spectrum.eigenvalues):
            out.append(Record(make_check("u-spectrum", E, omega * (n + 0.5), system="pdm-custom", params={"state": n}), tol("u-spectrum"), relative=True))
    return out


def run_fock_scan(cfg: dict) -> list:
    tol = _Tol(cfg)
    system, _ = _harmonic_params(cfg)
    opt = cfg.get("options", {})
    grid = _grid(cfg)
    H = quantum.build_hamiltonian(grid, system.mass, system.potential)
    spectrum = quantum.eigensolve(H, cfg["grid"].get("n_states", 4))
    lo, hi = opt.get("scale_factors", [0.25, 4.0])[:2]
    lambdas = np.geomspace(lo, hi, 41)
    delta = opt.get("delta", 1e-3)
    out = []
    for n, psi in enumerate(spectrum.eigenvectors):
        h0, v = quantum.expectation(psi, H.kinetic), quantum.expectation(psi, H.potential)
        scan = quantum.fock_scan(psi, h0, v, 2.0, lambdas, delta=delta)
        out.append(Record(make_check("fock-slope", scan.dE_at_1, 0.0, system="harmonic", params={"state": n}, details={"lambda_star": scan.lambda_star}), tol("fock-slope")))
    sigma = opt.get("sigma", 2.0)
    trial = quantum.gaussian(grid, 0.0, sigma)
    h0, v = quantum.expectation(trial, H.kinetic), quantum.expectation(trial, H.potential)
    scan = quantum.fock_scan(trial, h0, v, 2.0, lambdas, delta=delta)
    if scan.lambda_star is None:
        raise ConfigError("options.scale_factors: no stationary point inside the scanned range")
    out.append(Record(make_check("fock-stationarity", scan.stationarity_residual, 0.0, system="harmonic", params={"sigma": sigma}, details={"lambda_star": scan.lambda_star}), tol("fock-stationarity")))
    closed = (2 * h0 / (2.0 * v)) ** 0.25
    out.append(Record(make_check("fock-lambda-star", scan.lambda_star, closed, system="harmonic", params={"sigma": sigma}), tol("fock-lambda-star"), relative=True))
    return out


def run_ehrenfest(cfg: dict) -> list:
    tol = _Tol(cfg)
    system, _ = _harmonic_params(cfg)
    opt = cfg.get("options", {})
    grid = _grid(cfg)
    H = quantum.build_hamiltonian(grid, system.mass, system.potential)
    A = quantum.dilation_observable(grid, system.mass)
    psi0 = quantum.gaussian(grid, opt.get("x0", 1.0), opt.get("sigma", 1.0))
    dt, T = opt.get("dt", 1e-3), opt.get("T", 50.0)
    steps = int(round(T / dt))
    series = quantum.ehrenfest_series(H, A, psi0, dt, steps)
    T_run = float(series.t[-1])
    ratio = series.average_envelope(T_run) / series.average_envelope(T_run / 2)
    return [
        Record(make_check("ehrenfest", series.residual(), 0.0, system="harmonic", params={"dt": dt, "T": T_run}), tol("ehrenfest")),
        Record(make_check("hypervirial-decay", ratio, 0.5, system="harmonic", params={"T": T_run}), tol("hypervirial-decay"), relative=True),
        Record(make_check("norm", float(np.max(np.abs(series.norm - 1.0))), 0.0, system="harmonic"), tol("norm")),
    ]


def run_ktrig_check(cfg: dict) -> list:
    tol = _Tol(cfg)
    opt = cfg.get("options", {})
    rng = np.random.default_rng(opt.get("seed", 0))
    r = opt.get("x_range", 3.0)
    x = rng.uniform(-r, r, opt.get("n_points", 500))
    worst: dict = {}
    for kappa in opt.get("kappas", [-2.0, -1.0, 0.0, 1.0, 2.0]):
        for name, value in ktrig.identity_residuals(kappa, x).items():
            worst[name] = max(worst.get(name, 0.0), value)
    out = [Record(make_check(f"ktrig-{name}", value, 0.0, system="ktrig"), tol("ktrig-identity")) for name, value in sorted(worst.items())]
    out.append(Record(make_check("ktrig-continuity", ktrig.continuity_defect(x), 0.0, system="ktrig"), tol("ktrig-continuity")))
    return out


PIPELINES = {
    "classical-virial": run_classical_virial,
    "pdm": run_pdm,
    "ml-oscillator": run_ml_oscillator,
    "nonstrict": run_nonstrict,
    "quantum-virial": run_quantum_virial,
    "pdm-quantum": run_pdm_quantum,
    "fock-scan": run_fock_scan,
    "ehrenfest": run_ehrenfest,
    "ktrig-check": run_ktrig_check,
}


def run_pipeline(config: dict) -> tuple:
    """Return ``(effective_config, records)``."""
    cfg = merged(config)
    records = PIPELINES[cfg["experiment"]](cfg)
    return cfg, records


__all__ = ["Record", "DEFAULTS", "PIPELINES", "merged", "run_pipeline", "max_workers"]
