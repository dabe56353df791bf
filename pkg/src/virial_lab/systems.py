"""Classical systems, virial generators and the position-dependent-mass builders.

Conventions
-----------
* Positions and momenta carry a trailing axis of length ``dim``; every field
  below is vectorised over any leading axes, so ``V(q)`` with ``q`` of shape
  ``(N, dim)`` returns shape ``(N,)``.
* One-dimensional scalar fields (mass, xi, u) take plain coordinates ``x``.
* Generators are written in momentum coordinates, ``G(q, p)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad_vec
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from . import ktrig
from .errors import DomainError, QuadratureError, SingularGeneratorError

QUAD_TOL = 1e-10
DEFAULT_DOMAIN = (-10.0, 10.0)
DEFAULT_SPACING = 2e-3
# ML domains for lambda < 0 are open; tabulate up to this fraction of the edge.
EDGE_FRACTION = 0.995


# ---------------------------------------------------------------------------
# basic field containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalarField:
    """A scalar function of one coordinate with its derivative."""

    eval: Callable
    deriv: Callable
    name: str = ""
    domain: Optional[tuple] = None

    def __call__(self, x):
        return self.eval(x)


@dataclass(frozen=True)
class XiField(ScalarField):
    """The field xi(x) solving ``2 xi' + xi m'/m = a`` plus the data it came from."""

    a: float = 0.0
    C1: float = 0.0
    u: Optional[ScalarField] = None
    mass: Optional["MassProfile"] = None


@dataclass(frozen=True)
class MassProfile:
    kind: str  # "constant" | "position-dependent"
    m: Callable
    m_prime: Callable
    m0: Optional[float] = None
    domain: Optional[tuple] = None
    name: str = ""
    # closed form of u(x) = int_0^x sqrt(m), when known
    u: Optional[Callable] = None

    @classmethod
    def constant(cls, m0: float = 1.0) -> "MassProfile":
        if m0 <= 0:
            raise DomainError(f"mass must be positive, got {m0}")
        m0 = float(m0)
        return cls(
            kind="constant",
            m=lambda x: np.full(np.shape(x), m0) if np.ndim(x) else m0,
            m_prime=lambda x: np.zeros(np.shape(x)) if np.ndim(x) else 0.0,
            m0=m0,
            name=f"constant({m0:g})",
        )

    @classmethod
    def position_dependent(cls, m, m_prime, domain=None, name="pdm", u=None) -> "MassProfile":
        return cls(kind="position-dependent", m=m, m_prime=m_prime, domain=domain, name=name, u=u)

    @classmethod
    def ml(cls, lam: float) -> "MassProfile":
        """Mathews-Lakshmanan mass 1/(1 + lam x^2)."""
        lam = float(lam)
        if lam == 0.0:
            return cls.constant(1.0)
        domain = None
        if lam < 0:
            edge = 1.0 / np.sqrt(-lam)
            domain = (-edge, edge)
        return cls.position_dependent(
            m=lambda x: 1.0 / (1.0 + lam * np.square(x)),
            m_prime=lambda x: -2.0 * lam * x / np.square(1.0 + lam * np.square(x)),
            domain=domain,
            name=f"ml({lam:g})",
            u=lambda x: ktrig.arcsin_k(-lam, x),
        )

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"


@dataclass(frozen=True)
class PotentialSpec:
    V: Callable
    grad_V: Callable
    homogeneity_degree: Optional[float] = None
    name: str = ""
    domain: Optional[tuple] = None


@dataclass(frozen=True)
class SystemSpec:
    """Natural mechanical system ``H = p^2 / (2 m(q)) + V(q)``."""

    dim: int
    mass: MassProfile
    potential: PotentialSpec
    domain: Optional[tuple] = None
    name: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")
        if not self.mass.is_constant and self.dim != 1:
            raise ValueError("position-dependent mass requires dim = 1")

    def check_domain(self, q) -> None:
        q = np.asarray(q, dtype=float)
        if not np.all(np.isfinite(q)):
            raise DomainError(f"{self.name}: non-finite position")
        if self.domain is None:
            return
        lo, hi = self.domain
        x = q[..., 0]
        if np.any(x <= lo) or np.any(x >= hi):
            raise DomainError(f"{self.name}: position outside domain ({lo}, {hi})")

    def mass_at(self, q):
        q = np.asarray(q, dtype=float)
        if self.mass.is_constant:
            return self.mass.m0
        return self.mass.m(q[..., 0])


@dataclass(frozen=True)
class GeneratorSpec:
    """Virial generator G(q, p).

    ``a`` is the scaling constant attached to the generator (for lifts of
    configuration-space fields, ``X(L) = a L``).  ``valence`` is kept apart and
    only set for fields generating non-strictly canonical maps.
    """

    G: Callable
    grad_q: Optional[Callable] = None
    grad_p: Optional[Callable] = None
    a: Optional[float] = None
    h: Optional[Callable] = None
    valence: Optional[float] = None
    name: str = ""

    def __call__(self, q, p):
        return self.G(np.asarray(q, dtype=float), np.asarray(p, dtype=float))


# ---------------------------------------------------------------------------
# tabulated quadrature
# ---------------------------------------------------------------------------


def _make_nodes(lo, hi, spacing, extra=()):
    n = max(int(np.ceil((hi - lo) / spacing)), 8)
    nodes = np.linspace(lo, hi, n + 1)
    if extra:
        nodes = np.union1d(nodes, np.asarray(extra, dtype=float))
        # drop nodes that nearly coincide with an inserted one
        keep = np.concatenate([[True], np.diff(nodes) > 1e-9 * spacing])
        forced = np.isin(nodes, np.asarray(extra, dtype=float))
        nodes = nodes[keep | forced]
        nodes = np.unique(nodes)
    return nodes


class _CumulativeTable:
    """Node values of ``x -> int_origin^x f`` with cubic Hermite interpolation.

    Cell integrals come from adaptive Gauss-Kronrod quadrature (all cells at
    once); the Hermite slopes are the exact integrand values, so interpolation
    error is O(spacing^4).
    """

    def __init__(self, f, nodes, origin, label="integral"):
        nodes = np.asarray(nodes, dtype=float)
        if origin not in nodes:
            raise ValueError("origin must be one of the nodes")
        lo, width = nodes[:-1], np.diff(nodes)
        cells, err = quad_vec(
            lambda t: width * f(lo + width * t), 0.0, 1.0, epsabs=1e-13, epsrel=1e-13, norm="max", limit=200
        )
        if not np.isfinite(err) or err > QUAD_TOL:
            raise QuadratureError(f"{label}: quadrature error {err:.3g} > {QUAD_TOL:g}")
        values = np.concatenate([[0.0], np.cumsum(cells)])
        values -= values[np.searchsorted(nodes, origin)]
        self.nodes = nodes
        self.domain = (float(nodes[0]), float(nodes[-1]))
        self._f = f
        self._spline = CubicHermiteSpline(nodes, values, f(nodes))

    def __call__(self, x):
        x_arr = np.asarray(x, dtype=float)
        lo, hi = self.domain
        if np.any(x_arr < lo) or np.any(x_arr > hi):
            raise DomainError(f"point outside tabulated interval [{lo:g}, {hi:g}]")
        out = self._spline(x_arr)
        return float(out) if np.ndim(x) == 0 else out


def _bounded(f: Callable, lo: float, hi: float) -> Callable:
    def wrapped(x):
        x_arr = np.asarray(x, dtype=float)
        if np.any(x_arr < lo) or np.any(x_arr > hi):
            raise DomainError(f"point outside interval [{lo:g}, {hi:g}]")
        return f(x)

    return wrapped


def _quadrature_domain(mass: MassProfile, domain):
    if domain is not None:
        return tuple(float(v) for v in domain)
    if mass.domain is not None:
        lo, hi = mass.domain
        return (EDGE_FRACTION * lo, EDGE_FRACTION * hi)
    return DEFAULT_DOMAIN


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def build_xi(
    mass: MassProfile,
    a: float,
    C1: float,
    domain: Optional[tuple] = None,
    spacing: float = DEFAULT_SPACING,
) -> XiField:
    """Solve ``2 xi' + xi m'/m = a`` with ``xi(0) sqrt(m(0)) = C1``.

    The solution is ``xi = (C1 + a u / 2) / sqrt(m)`` with ``u = int_0^x sqrt(m)``.
    u is taken in closed form when the mass profile supplies it (constant and
    Mathews-Lakshmanan masses, where ``u = arcsin_k(-lam, x)``); otherwise it
    is tabulated over ``domain``, which must contain 0.
    """
    a, C1 = float(a), float(C1)
    if mass.is_constant:
        sm = np.sqrt(mass.m0)
        u = ScalarField(
            eval=lambda x: sm * np.asarray(x, dtype=float) if np.ndim(x) else sm * float(x),
            deriv=lambda x: np.full(np.shape(x), sm) if np.ndim(x) else sm,
            name="u",
        )
        lo_hi = None
    else:
        lo, hi = _quadrature_domain(mass, domain)
        if not lo < 0.0 < hi:
            raise DomainError("quadrature domain for xi must contain 0")
        sqrt_m = lambda x: np.sqrt(mass.m(x))  # noqa: E731
        if mass.u is not None:
            u_eval = _bounded(mass.u, lo, hi)
        else:
            u_eval = _CumulativeTable(sqrt_m, _make_nodes(lo, hi, spacing, extra=(0.0,)), 0.0, "u(x)")
        lo_hi = (lo, hi)
        u = ScalarField(eval=u_eval, deriv=sqrt_m, name="u", domain=lo_hi)

    def xi(x):
        return (C1 + 0.5 * a * u(x)) / np.sqrt(mass.m(x))

    def dxi(x):
        # from the defining ODE: xi' = a/2 - xi m' / (2 m)
        return 0.5 * a - 0.5 * mass.m_prime(x) / mass.m(x) * xi(x)

    return XiField(
        eval=xi, deriv=dxi, name=f"xi(a={a:g},C1={C1:g})", domain=lo_hi, a=a, C1=C1, u=u, mass=mass
    )


def _find_zeros(xi: ScalarField, nodes):
    values = np.asarray(xi(nodes))
    zeros = list(nodes[values == 0.0])
    idx = np.nonzero(np.sign(values[:-1]) * np.sign(values[1:]) < 0)[0]
    for i in idx:
        zeros.append(brentq(xi.eval, nodes[i], nodes[i + 1], xtol=1e-15, rtol=1e-15))
    return sorted(float(z) for z in zeros)


def build_pdm_potential(
    xi: ScalarField,
    a: float,
    C2: float,
    x_ref: float = 0.0,
    sign: int = 1,
    across_zero: bool = False,
    domain: Optional[tuple] = None,
    spacing: float = DEFAULT_SPACING,
) -> PotentialSpec:
    """Potential ``V = C2 exp(sign * int_{x_ref}^x a / xi)``.

    With ``sign=+1`` this solves ``xi V' = a V`` (classical scaling); the
    quantum convention ``V = C2 exp(-int b / xi)`` is ``a=b, sign=-1``.

    By default the potential is only defined on the interval around ``x_ref``
    where xi does not vanish; evaluating past a zero of xi raises
    ``SingularGeneratorError``.  With ``across_zero=True`` a single simple zero
    x* is crossed by splitting off the exact singular part of the integrand,
    ``p / (x - x*)`` with ``p = sign a / xi'(x*)``, so that

        V = C2 |x - x*|^p / |x_ref - x*|^p exp(int_{x_ref}^x [sign a / xi - p / (z - x*)] dz)

    which continues V through the zero.
    """
    a, C2, x_ref = float(a), float(C2), float(x_ref)
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if domain is None:
        domain = getattr(xi, "domain", None) or DEFAULT_DOMAIN
    lo, hi = (float(v) for v in domain)
    if not lo <= x_ref <= hi:
        raise DomainError("x_ref outside the potential domain")
    label = f"pdm(a={sign * a:g},C2={C2:g})"

    if a == 0.0:
        return PotentialSpec(
            V=lambda q: np.full(np.shape(q)[:-1], C2) if np.ndim(q) > 1 else C2,
            grad_V=lambda q: np.zeros(np.shape(q)),
            name=label,
            domain=(lo, hi),
        )

    if xi(x_ref) == 0.0:
        raise SingularGeneratorError(f"xi vanishes at x_ref={x_ref}")
    probe = _make_nodes(lo, hi, spacing)
    zeros = _find_zeros(xi, probe)
    coef = sign * a

    if not across_zero:
        below = [z for z in zeros if z < x_ref]
        above = [z for z in zeros if z > x_ref]
        z_lo = below[-1] if below else None
        z_hi = above[0] if above else None
        # keep a cell's width away from the zeros so the integrand stays bounded
        left = z_lo + spacing if z_lo is not None else -np.inf
        right = z_hi - spacing if z_hi is not None else np.inf
        nodes = probe[(probe > left) & (probe < right)]
        nodes = _make_nodes(nodes[0], nodes[-1], spacing, extra=(x_ref,))
        f = lambda x: coef / xi(x)  # noqa: E731
        table = _CumulativeTable(f, nodes, x_ref, "int a/xi")
        t_lo, t_hi = table.domain

        def v_x(x):
            x = np.asarray(x, dtype=float)
            if (z_lo is not None and np.any(x <= t_lo)) or (z_hi is not None and np.any(x >= t_hi)):
                raise SingularGeneratorError("potential evaluated across a zero of xi")
            return C2 * np.exp(table(x))

        def dv_x(x):
            return coef * v_x(x) / xi(x)

        v_domain = (t_lo, t_hi)
    else:
        if len(zeros) > 1:
            raise SingularGeneratorError("across_zero supports a single zero of xi")
        if not zeros:
            return build_pdm_potential(xi, a, C2, x_ref, sign, False, (lo, hi), spacing)
        xs = zeros[0]
        slope = float(xi.deriv(xs))
        if slope == 0.0:
            raise SingularGeneratorError("xi has a non-simple zero")
        power = coef / slope

        def f_direct(x):
            d = x - xs
            return coef / xi(x) - power / d

        # xi is only known to absolute round-off near its zero, so the direct
        # difference degrades like eps/d^2; bridge |d| < patch with a cubic.
        patch = 1e-3 * (1.0 + abs(xs))
        offsets = np.array([-2.0, -1.0, 1.0, 2.0]) * patch
        bridge = np.polynomial.Polynomial.fit(offsets, f_direct(xs + offsets), 3)

        def f_reg(x):
            x = np.asarray(x, dtype=float)
            d = x - xs
            near = np.abs(d) < patch
            safe = np.where(near, xs + 2.0 * patch, x)
            return np.where(near, bridge(d), f_direct(safe))

        nodes = _make_nodes(lo, hi, spacing, extra=(x_ref, xs))
        table = _CumulativeTable(f_reg, nodes, x_ref, "regularised int a/xi")
        scale = C2 / abs(x_ref - xs) ** power

        def v_x(x):
            x = np.asarray(x, dtype=float)
            return scale * np.abs(x - xs) ** power * np.exp(table(x))

        def dv_x(x):
            x = np.asarray(x, dtype=float)
            d = x - xs
            ad = np.abs(d)
            lead = power * np.sign(d) * ad ** (power - 1.0) if power != 1.0 else np.sign(d)
            return scale * np.exp(table(x)) * (lead + ad**power * f_reg(x))

        v_domain = table.domain

    def V(q):
        out = v_x(np.asarray(q, dtype=float)[..., 0])
        return float(out) if np.ndim(out) == 0 else out

    def grad_V(q):
        return np.asarray(dv_x(np.asarray(q, dtype=float)[..., 0]))[..., None]

    return PotentialSpec(V=V, grad_V=grad_V, name=label, domain=v_domain)


def build_pdm_generator(mass: MassProfile, xi: ScalarField) -> GeneratorSpec:
    """``G(x, p) = xi(x) p``, i.e. ``m(x) xi(x) v`` in velocity coordinates."""

    def G(q, p):
        return xi(q[..., 0]) * p[..., 0]

    def grad_q(q, p):
        return (np.asarray(xi.deriv(q[..., 0])) * p[..., 0])[..., None]

    def grad_p(q, p):
        return np.asarray(xi(q[..., 0]) * np.ones_like(p[..., 0]))[..., None]

    return GeneratorSpec(G=G, grad_q=grad_q, grad_p=grad_p, a=getattr(xi, "a", None), name=f"pdm-G[{xi.name}]")


def clausius_generator(dim: int) -> GeneratorSpec:
    """``G = q . p``.

    ``a = -2`` records that its Hamiltonian field scales the kinetic term,
    ``X_G(H0) = -2 H0``; it is not a Lagrangian scaling constant.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    return GeneratorSpec(
        G=lambda q, p: np.sum(q * p, axis=-1),
        grad_q=lambda q, p: np.array(p, dtype=float, copy=True),
        grad_p=lambda q, p: np.array(q, dtype=float, copy=True),
        a=-2.0,
        name=f"clausius({dim})",
    )


# ---------------------------------------------------------------------------
# catalogue
# ---------------------------------------------------------------------------


def harmonic(omega: float = 1.0, m: float = 1.0, dim: int = 1) -> SystemSpec:
    k = m * omega**2
    pot = PotentialSpec(
        V=lambda q: 0.5 * k * np.sum(np.square(q), axis=-1),
        grad_V=lambda q: k * np.asarray(q, dtype=float),
        homogeneity_degree=2.0,
        name="harmonic",
    )
    return SystemSpec(dim, MassProfile.constant(m), pot, name="harmonic", params=dict(omega=omega, m=m, dim=dim))


def anisotropic_oscillator(omegas=(1.0, np.sqrt(2.0))) -> SystemSpec:
    w2 = np.square(np.asarray(omegas, dtype=float))
    pot = PotentialSpec(
        V=lambda q: 0.5 * np.sum(w2 * np.square(q), axis=-1),
        grad_V=lambda q: w2 * np.asarray(q, dtype=float),
        homogeneity_degree=2.0,
        name="anisotropic",
    )
    return SystemSpec(len(w2), MassProfile.constant(1.0), pot, name="anisotropic", params=dict(omegas=list(map(float, omegas))))


def kepler(mu: float = 1.0, m: float = 1.0, dim: int = 2) -> SystemSpec:
    def V(q):
        return -mu / np.linalg.norm(q, axis=-1)

    def grad_V(q):
        q = np.asarray(q, dtype=float)
        r = np.linalg.norm(q, axis=-1, keepdims=True)
        return mu * q / r**3

    pot = PotentialSpec(V=V, grad_V=grad_V, homogeneity_degree=-1.0, name="kepler")
    return SystemSpec(dim, MassProfile.constant(m), pot, name="kepler", params=dict(mu=mu, m=m, dim=dim))


def kepler_state(e: float, energy: float, mu: float = 1.0, m: float = 1.0):
    """Periapsis state ``(q, p)`` of a planar bound orbit with eccentricity e."""
    if energy >= 0 or not 0 <= e < 1:
        raise DomainError("need a bound orbit: energy < 0 and 0 <= e < 1")
    semi = -mu / (2.0 * energy)
    r_p = semi * (1.0 - e)
    # vis-viva at periapsis
    v_p = np.sqrt(mu / m * (2.0 / r_p - 1.0 / semi))
    return np.array([r_p, 0.0]), np.array([0.0, m * v_p])


def quartic(c: float = 1.0, dim: int = 1) -> SystemSpec:
    pot = PotentialSpec(
        V=lambda q: c * np.sum(np.asarray(q, dtype=float) ** 4, axis=-1),
        grad_V=lambda q: 4.0 * c * np.asarray(q, dtype=float) ** 3,
        homogeneity_degree=4.0,
        name="quartic",
    )
    return SystemSpec(dim, MassProfile.constant(1.0), pot, name="quartic", params=dict(c=c, dim=dim))


def free_particle(dim: int = 1, m: float = 1.0) -> SystemSpec:
    pot = PotentialSpec(
        V=lambda q: np.zeros(np.shape(q)[:-1]) if np.ndim(q) > 1 else 0.0,
        grad_V=lambda q: np.zeros(np.shape(q)),
        name="free",
    )
    return SystemSpec(dim, MassProfile.constant(m), pot, name="free", params=dict(dim=dim, m=m))


def ml_system(lam: float, alpha: float) -> SystemSpec:
    """Mathews-Lakshmanan oscillator, ``L = (v^2 - alpha^2 q^2) / (2 (1 + lam q^2))``."""
    lam, alpha = float(lam), float(alpha)
    a2 = alpha * alpha
    pot = PotentialSpec(
        V=lambda q: 0.5 * a2 * np.square(q[..., 0]) / (1.0 + lam * np.square(q[..., 0])),
        grad_V=lambda q: (a2 * q[..., 0] / np.square(1.0 + lam * np.square(q[..., 0])))[..., None],
        homogeneity_degree=2.0 if lam == 0.0 else None,
        name="ml",
    )
    mass = MassProfile.ml(lam)
    return SystemSpec(1, mass, pot, domain=mass.domain, name="ml", params=dict(lam=lam, alpha=alpha))


def pdm_custom(
    lam: float = 1.0,
    a: float = 2.0,
    C1: float = 1.0,
    C2: float = 1.0,
    x_ref: float = 0.0,
    domain: Optional[tuple] = None,
    across_zero: bool = True,
    spacing: float = DEFAULT_SPACING,
):
    """PDM system with ML-type mass and the potential built from xi.

    Returns ``(system, generator, xi)``.
    """
    mass = MassProfile.ml(lam)
    xi = build_xi(mass, a, C1, domain=domain, spacing=spacing)
    pot = build_pdm_potential(xi, a, C2, x_ref=x_ref, across_zero=across_zero, domain=domain, spacing=spacing)
    gen = build_pdm_generator(mass, xi)
    lo, hi = pot.domain
    system = SystemSpec(
        1,
        mass,
        pot,
        domain=(lo, hi),
        name="pdm-custom",
        params=dict(lam=lam, a=a, C1=C1, C2=C2, x_ref=x_ref),
    )
    return system, gen, xi


CATALOG = ("harmonic", "kepler", "quartic", "ml", "pdm-custom", "anisotropic", "free")


def get_system(name: str, **params) -> SystemSpec:
    """Build a catalogue system by name (``pdm-custom`` returns only the system)."""
    if name == "harmonic":
        return harmonic(**params)
    if name == "kepler":
        return kepler(**params)
    if name == "quartic":
        return quartic(**params)
    if name == "ml":
        return ml_system(params.get("lam", 1.0), params.get("alpha", 1.0))
    if name == "pdm-custom":
        return pdm_custom(**params)[0]
    if name == "anisotropic":
        return anisotropic_oscillator(**params)
    if name == "free":
        return free_particle(**params)
    raise KeyError(f"unknown system {name!r}; choose from {', '.join(CATALOG)}")


# ---------------------------------------------------------------------------
# energy split
# ---------------------------------------------------------------------------


def kinetic_energy(system: SystemSpec, q, p):
    q, p = np.asarray(q, dtype=float), np.asarray(p, dtype=float)
    return np.sum(p * p, axis=-1) / (2.0 * system.mass_at(q))


def hamiltonian_split(system: SystemSpec, state) -> tuple:
    """Return ``(H0, V)`` at a phase-space state (anything with ``.q``/``.p``)."""
    q = np.asarray(state.q, dtype=float)
    p = np.asarray(state.p, dtype=float)
    system.check_domain(q)
    return float(kinetic_energy(system, q, p)), float(system.potential.V(q))


def total_energy(system: SystemSpec, q, p):
    return kinetic_energy(system, q, p) + system.potential.V(np.asarray(q, dtype=float))


__all__ = [
    "ScalarField",
    "XiField",
    "MassProfile",
    "PotentialSpec",
    "SystemSpec",
    "GeneratorSpec",
    "build_xi",
    "build_pdm_potential",
    "build_pdm_generator",
    "clausius_generator",
    "harmonic",
    "anisotropic_oscillator",
    "kepler",
    "kepler_state",
    "quartic",
    "free_particle",
    "ml_system",
    "pdm_custom",
    "get_system",
    "hamiltonian_split",
    "kinetic_energy",
    "total_energy",
    "ktrig",
]
