"""One-dimensional quantum counterparts on a uniform Dirichlet grid.

States live in the weighted product ``<phi, psi> = sum conj(phi) psi w`` with
``w_i = sqrt(m(x_i)) dx``.  The kinetic term is assembled from its quadratic
form ``1/2 int |psi'|^2 m^(-1/2) dx`` using a fourth-order staggered
derivative, and the similarity ``phi = sqrt(w) psi`` turns the weighted
eigenproblem into a standard symmetric seven-diagonal one.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, eigsh, splu

from .errors import AsymmetryError, ConvergenceError, DomainError, LinearSolveError
from .systems import MassProfile, PotentialSpec, ScalarField
from .virial import average_envelope, make_check

IMAG_TOL = 1e-12
EDGE_DECAY = 1e-10


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError("x_min must be below x_max")
        if self.n < 16:
            raise ValueError("a grid needs at least 16 interior points")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n + 1)

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(1, self.n + 1)

    @property
    def x_half(self) -> np.ndarray:
        """Cell midpoints, including the two cells next to the walls."""
        return self.x_min + self.dx * (np.arange(self.n + 1) + 0.5)


def _mass_values(mass: MassProfile, x) -> np.ndarray:
    m = np.broadcast_to(np.asarray(mass.m(x), dtype=float), np.shape(x)).copy()
    if np.any(~np.isfinite(m)) or np.any(m <= 0):
        raise DomainError("mass must be positive and finite on the grid")
    return m


def weights(grid: Grid, mass: MassProfile) -> np.ndarray:
    return np.sqrt(_mass_values(mass, grid.x)) * grid.dx


@dataclass
class WaveFunction:
    values: np.ndarray
    grid: Grid
    mass: MassProfile = field(default_factory=MassProfile.constant)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} values, got {self.values.shape}")

    @property
    def weights(self) -> np.ndarray:
        return weights(self.grid, self.mass)

    def inner(self, other: "WaveFunction") -> complex:
        return complex(np.sum(np.conj(self.values) * other.values * self.weights))

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2 * self.weights)))

    def normalized(self) -> "WaveFunction":
        return WaveFunction(self.values / self.norm(), self.grid, self.mass)


def gaussian(grid: Grid, x0: float = 0.0, sigma: float = 1.0, p0: float = 0.0, mass: Optional[MassProfile] = None) -> WaveFunction:
    """Normalized ``exp(-(x - x0)^2 / (2 sigma^2) + i p0 x)``."""
    x = grid.x
    psi = np.exp(-0.5 * ((x - x0) / sigma) ** 2 + 1j * p0 * x)
    return WaveFunction(psi, grid, mass or MassProfile.constant()).normalized()


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------


def central_difference(grid: Grid) -> sp.csr_matrix:
    """Second-order central first derivative with Dirichlet walls."""
    n = grid.n
    off = np.full(n - 1, 0.5 / grid.dx)
    return sp.diags([-off, off], [-1, 1], format="csr")


def staggered_difference(grid: Grid) -> sp.csr_matrix:
    """Fourth-order derivative from nodes to the n + 1 cell midpoints.

    ``f'(x_{j+1/2}) ~ [27 (f_{j+1} - f_j) - (f_{j+2} - f_{j-1})] / (24 dx)``;
    wall values are zero and the ghost nodes beyond them are odd reflections.
    """
    n = grid.n
    rows, cols, vals = [], [], []
    for offset, coef in ((1, 27.0), (0, -27.0), (2, -1.0), (-1, 1.0)):
        j = np.arange(n + 1)
        node = j + offset
        sign = np.ones(n + 1)
        sign[node == -1] = -1.0
        node = np.where(node == -1, 1, node)
        sign[node == n + 2] = -1.0
        node = np.where(node == n + 2, n, node)
        keep = (node >= 1) & (node <= n)
        rows.append(j[keep])
        cols.append(node[keep] - 1)
        vals.append(coef * sign[keep])
    D = sp.coo_matrix(
        (np.concatenate(vals) / (24.0 * grid.dx), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n + 1, n),
    )
    return D.tocsr()


def build_momentum(grid: Grid, mass: MassProfile) -> sp.csr_matrix:
    """``P = -i m^(-1/2) D`` with D the central difference.

    Since ``w m^(-1/2) = dx`` and D is antisymmetric, P is exactly
    self-adjoint in the weighted product.
    """
    m = _mass_values(mass, grid.x)
    return (sp.diags(-1j / np.sqrt(m)) @ central_difference(grid)).tocsr()


@dataclass
class HamiltonianMatrix:
    """``H = H0 + V`` in the standard (similarity-transformed) representation.

    ``matrix`` is the real symmetric ``W^(-1/2) K W^(-1/2) + diag(V)``;
    ``kinetic`` and ``potential`` act on physical (weighted) wavefunctions.
    """

    matrix: sp.csr_matrix
    weights: np.ndarray
    kinetic: sp.csr_matrix
    potential: np.ndarray
    grid: Grid
    mass: MassProfile

    @property
    def transform(self) -> np.ndarray:
        """``sqrt(w)``: physical to standard representation."""
        return np.sqrt(self.weights)

    def to_std(self, psi) -> np.ndarray:
        values = psi.values if isinstance(psi, WaveFunction) else np.asarray(psi)
        return values * self.transform

    def from_std(self, phi) -> WaveFunction:
        return WaveFunction(np.asarray(phi) / self.transform, self.grid, self.mass)

    @property
    def physical(self) -> sp.csr_matrix:
        """H acting on physical wavefunctions."""
        return (self.kinetic + sp.diags(self.potential)).tocsr()

    def std_operator(self, op) -> sp.csr_matrix:
        """Conjugate a physical operator into the standard representation."""
        s = self.transform
        return (sp.diags(s) @ sp.csr_matrix(op) @ sp.diags(1.0 / s)).tocsr()


def build_hamiltonian(grid: Grid, mass: MassProfile, potential: PotentialSpec) -> HamiltonianMatrix:
    """Assemble ``H = 1/2 P^dagger P + V`` (adjoint taken in the weighted product)."""
    x = grid.x
    V = np.asarray(potential.V(x[:, None]), dtype=float).reshape(-1)
    if not np.all(np.isfinite(V)):
        raise DomainError("potential is not finite on the grid")
    w = weights(grid, mass)
    m_half = _mass_values(mass, grid.x_half)
    Ds = staggered_difference(grid)
    K = 0.5 * (Ds.T @ sp.diags(grid.dx / np.sqrt(m_half)) @ Ds)
    s = 1.0 / np.sqrt(w)
    H_std = sp.diags(s) @ K @ sp.diags(s)
    H_std = (0.5 * (H_std + H_std.T) + sp.diags(V)).tocsr()
    kinetic = (sp.diags(1.0 / w) @ K).tocsr()
    return HamiltonianMatrix(H_std, w, kinetic, V, grid, mass)


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    eigenvectors: list
    n_states: int

    def gram(self) -> np.ndarray:
        k = self.n_states
        return np.array([[self.eigenvectors[i].inner(self.eigenvectors[j]) for j in range(k)] for i in range(k)])


def eigensolve(H: HamiltonianMatrix, n_states: int, check_edges: bool = True) -> SpectrumResult:
    """Lowest eigenpairs of the symmetric standard-form matrix.

    Eigenvectors are mapped back to the weighted representation, normalized
    there, and signed so that their largest component is positive.  With
    ``check_edges`` a warning is issued for states that have not decayed to
    ``1e-10`` of their peak at the walls (pass False for genuine box problems).
    """
    n = H.grid.n
    if not 1 <= n_states <= n:
        raise ValueError(f"n_states must lie in [1, {n}]")
    # shift-invert below the spectrum: H0 >= 0 so every eigenvalue exceeds min V
    sigma = float(np.min(H.potential)) - 1.0
    v0 = np.ones(n)
    try:
        if n_states >= n - 1:
            vals, vecs = np.linalg.eigh(H.matrix.toarray())
            vals, vecs = vals[:n_states], vecs[:, :n_states]
        else:
            vals, vecs = eigsh(H.matrix.tocsc(), k=n_states, sigma=sigma, which="LM", v0=v0, tol=0)
    except (ArpackNoConvergence, ArpackError, np.linalg.LinAlgError) as exc:
        raise ConvergenceError(f"eigensolver failed: {exc}") from exc
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    states = []
    for k in range(n_states):
        phi = vecs[:, k]
        phi = phi * np.sign(phi[np.argmax(np.abs(phi))])
        psi = H.from_std(phi).normalized()
        edge = max(abs(psi.values[0]), abs(psi.values[-1])) / np.max(np.abs(psi.values))
        if check_edges and edge > EDGE_DECAY:
            warnings.warn(f"state {k} is {edge:.1e} of its peak at the wall; widen the grid", RuntimeWarning, stacklevel=2)
        states.append(psi)
    return SpectrumResult(np.asarray(vals, dtype=float), states, n_states)


def _apply(op, values):
    if sp.issparse(op) or isinstance(op, np.ndarray) and op.ndim == 2:
        return op @ values
    return np.asarray(op) * values  # diagonal given as a vector


def expectation(psi: WaveFunction, op, hermitian: bool = True):
    """``<psi, op psi>`` in the weighted product.

    ``op`` is a matrix acting on physical wavefunctions, or a vector for a
    diagonal operator.  For ``hermitian=True`` the imaginary part must be
    below ``1e-12`` (relative to the size of the value) and a float is
    returned; otherwise the complex value is returned.
    """
    values = psi.values
    value = complex(np.sum(np.conj(values) * _apply(op, values) * psi.weights))
    if not hermitian:
        return value
    if abs(value.imag) > IMAG_TOL * max(1.0, abs(value.real)):
        raise AsymmetryError(f"expectation has imaginary part {value.imag:.3e}")
    return value.real


def quantum_virial_check(spectrum: SpectrumResult, H0, V, k: float) -> list:
    """Per eigenstate ``2 <H0>`` against ``k <V>``."""
    out = []
    for i, psi in enumerate(spectrum.eigenvectors):
        h0, v = expectation(psi, H0), expectation(psi, V)
        out.append(
            make_check(
                "quantum-virial",
                2 * h0,
                k * v,
                scale=abs(2 * h0) + abs(k * v),
                system="grid",
                params={"state": i, "k": k},
                details={"E": float(spectrum.eigenvalues[i]), "H0": h0, "V": v},
            )
        )
    return out


def pdm_quantum_check(spectrum: SpectrumResult, H0, V, a: float, b: float) -> list:
    """Per eigenstate ``a <H0> + b <V>`` against 0.

    ``V`` must come from the position-dependent-mass builder with the same
    ``(a, b)`` pair (``V = C2 exp(-int b/xi)``).
    """
    out = []
    for i, psi in enumerate(spectrum.eigenvectors):
        h0, v = expectation(psi, H0), expectation(psi, V)
        out.append(
            make_check(
                "pdm-quantum",
                a * h0 + b * v,
                0.0,
                scale=abs(a * h0) + abs(b * v),
                system="grid",
                params={"state": i, "a": a, "b": b},
                details={"E": float(spectrum.eigenvalues[i]), "H0": h0, "V": v},
            )
        )
    return out


# ---------------------------------------------------------------------------
# Fock scaling
# ---------------------------------------------------------------------------


@dataclass
class FockScan:
    lambdas: np.ndarray
    energies: np.ndarray
    H0: float
    V: float
    k: float
    dE_at_1: float
    lambda_star: Optional[float]
    stationarity_residual: Optional[float]

    def to_dict(self) -> dict:
        return {
            "lambdas": self.lambdas.tolist(),
            "energies": self.energies.tolist(),
            "H0": self.H0,
            "V": self.V,
            "k": self.k,
            "dE_at_1": self.dE_at_1,
            "lambda_star": self.lambda_star,
            "stationarity_residual": self.stationarity_residual,
        }


def fock_energy(lam, H0_exp: float, V_exp: float, k: float):
    lam = np.asarray(lam, dtype=float)
    return lam**-2 * H0_exp + lam**k * V_exp


def fock_slope(lam, H0_exp: float, V_exp: float, k: float):
    lam = np.asarray(lam, dtype=float)
    return -2.0 * lam**-3 * H0_exp + k * lam ** (k - 1) * V_exp


def fock_scan(
    psi: Optional[WaveFunction],
    H0_exp: float,
    V_exp: float,
    k: float,
    lambdas: Sequence[float],
    delta: float = 1e-3,
) -> FockScan:
    """``E(lam) = lam^-2 <H0> + lam^k <V>`` over ``lambdas``.

    The slope at 1 is a central difference with step ``delta``.  The
    stationary point is bracketed on the scanned range and refined with
    Brent's method; it is None if the slope does not change sign there.
    """
    if k == 0:
        raise ValueError("k must be nonzero")
    if psi is not None and not psi.mass.is_constant:
        raise ValueError("the dilation scan assumes a constant mass")
    lam = np.asarray(lambdas, dtype=float)
    if np.any(lam <= 0):
        raise DomainError("scaling factors must be positive")
    energies = fock_energy(lam, H0_exp, V_exp, k)
    dE1 = float((fock_energy(1 + delta, H0_exp, V_exp, k) - fock_energy(1 - delta, H0_exp, V_exp, k)) / (2 * delta))
    slope = fock_slope(lam, H0_exp, V_exp, k)
    star = res = None
    idx = np.nonzero(np.sign(slope[:-1]) * np.sign(slope[1:]) <= 0)[0]
    if len(idx):
        i = idx[0]
        f = lambda t: float(fock_slope(t, H0_exp, V_exp, k))  # noqa: E731
        star = lam[i] if f(lam[i]) == 0 else brentq(f, lam[i], lam[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps)
        star = float(star)
        res = f(star)
    return FockScan(lam, energies, float(H0_exp), float(V_exp), float(k), dE1, star, res)


# ---------------------------------------------------------------------------
# dilations and time evolution
# ---------------------------------------------------------------------------


def dilation_generator(grid: Grid, mass: MassProfile, xi: Optional[ScalarField] = None) -> sp.csr_matrix:
    """Weighted anti-self-adjoint part of ``xi(x) d/dx`` (``xi = x`` by default).

    For a constant mass this is ``(x D + D x) / 2``.
    """
    x = grid.x
    xi_vals = x if xi is None else np.asarray(xi(x), dtype=float)
    B = sp.diags(xi_vals) @ central_difference(grid)
    w = weights(grid, mass)
    B_adj = sp.diags(1.0 / w) @ B.T @ sp.diags(w)
    return (0.5 * (B - B_adj)).tocsr()


def dilation_observable(grid: Grid, mass: MassProfile, xi: Optional[ScalarField] = None) -> sp.csr_matrix:
    """Self-adjoint ``-i A`` (``(xp + px)/2`` for a constant mass)."""
    return (-1j * dilation_generator(grid, mass, xi)).tocsr()


def commutator(A, B) -> sp.csr_matrix:
    return (A @ B - B @ A).tocsr()


def interior_defect(op, values, grid: Grid, margin: float) -> float:
    """Largest ``|op values|`` at least ``margin`` away from the walls."""
    out = np.abs(_apply(op, values))
    x = grid.x
    sel = (x > grid.x_min + margin) & (x < grid.x_max - margin)
    return float(np.max(out[sel]))


def _cn_factor(H: HamiltonianMatrix, dt: float):
    n = H.grid.n
    eye = sp.identity(n, dtype=complex, format="csc")
    half = 0.5j * dt * H.matrix.astype(complex)
    try:
        lu = splu((eye + half).tocsc())
    except RuntimeError as exc:
        raise LinearSolveError(f"Crank-Nicolson factorisation failed: {exc}") from exc
    return lu, (eye - half).tocsr()


def _cn_steps(H: HamiltonianMatrix, psi0: WaveFunction, dt: float, steps: int):
    if not dt > 0:
        raise ValueError("dt must be positive")
    lu, rhs = _cn_factor(H, dt)
    phi = H.to_std(psi0).astype(complex)
    yield 0, phi
    for k in range(1, steps + 1):
        phi = lu.solve(rhs @ phi)
        if not np.all(np.isfinite(phi)):
            raise LinearSolveError(f"non-finite state after step {k}")
        yield k, phi


def evolve_cn(H: HamiltonianMatrix, psi0: WaveFunction, dt: float, steps: int, stride: int = 1) -> list:
    """Crank-Nicolson ``(1 + i dt H/2) psi_{n+1} = (1 - i dt H/2) psi_n``.

    Returns every ``stride``-th state, starting with ``psi0``.
    """
    return [H.from_std(phi) for k, phi in _cn_steps(H, psi0, dt, steps) if k % stride == 0]


@dataclass
class EhrenfestSeries:
    t: np.ndarray
    mean_A: np.ndarray
    commutator: np.ndarray  # -i <[A, H]>, the predicted d<A>/dt
    norm: np.ndarray

    def residual(self) -> float:
        """Max over interior times of ``|central d<A>/dt + i <[A, H]>|``."""
        dt = self.t[1] - self.t[0]
        deriv = (self.mean_A[2:] - self.mean_A[:-2]) / (2 * dt)
        return float(np.max(np.abs(deriv - self.commutator[1:-1])))

    def average_envelope(self, T: float) -> float:
        return average_envelope(self.t, self.commutator, T)


def ehrenfest_series(H: HamiltonianMatrix, A, psi0: WaveFunction, dt: float, steps: int) -> EhrenfestSeries:
    """Stream ``<A>`` and ``-i <[A, H]>`` along a Crank-Nicolson run.

    ``A`` acts on physical wavefunctions and must be self-adjoint in the
    weighted product.  No states are stored.
    """
    A_std = H.std_operator(A)
    Hs = H.matrix
    mean_A = np.empty(steps + 1)
    comm = np.empty(steps + 1)
    norm = np.empty(steps + 1)
    for k, phi in _cn_steps(H, psi0, dt, steps):
        a_phi = A_std @ phi
        mean_A[k] = np.vdot(phi, a_phi).real
        # -i <[A, H]> = 2 Im <A phi, H phi>
        comm[k] = 2.0 * np.vdot(a_phi, Hs @ phi).imag
        norm[k] = np.sqrt(np.vdot(phi, phi).real)
    return EhrenfestSeries(dt * np.arange(steps + 1), mean_A, comm, norm)


def ehrenfest_residual(H: HamiltonianMatrix, A, traj: list, dt: float) -> float:
    """Ehrenfest defect over a stored trajectory from :func:`evolve_cn`."""
    mean_A = np.array([expectation(psi, A) for psi in traj])
    HA = commutator(sp.csr_matrix(A), H.physical)
    comm = np.array([(-1j * expectation(psi, HA, hermitian=False)).real for psi in traj])
    series = EhrenfestSeries(dt * np.arange(len(traj)), mean_A, comm, np.array([psi.norm() for psi in traj]))
    return series.residual()


def hypervirial_defect(psi: WaveFunction, H: HamiltonianMatrix, A) -> float:
    """``|<psi, [A, H] psi>|`` for a stationary-state check."""
    return abs(expectation(psi, commutator(sp.csr_matrix(A), H.physical), hermitian=False))


def write_eigenfunctions_csv(spectrum: SpectrumResult, path) -> None:
    """Columns ``x, sqrt_m, re_k, im_k`` for every state ``k``."""
    psi0 = spectrum.eigenvectors[0]
    x = psi0.grid.x
    sqrt_m = np.sqrt(_mass_values(psi0.mass, x))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["x", "sqrt_m"]
        for k in range(spectrum.n_states):
            header += [f"re_{k}", f"im_{k}"]
        writer.writerow(header)
        for i in range(len(x)):
            row = [repr(float(x[i])), repr(float(sqrt_m[i]))]
            for psi in spectrum.eigenvectors:
                row += [repr(float(psi.values[i].real)), repr(float(psi.values[i].imag))]
            writer.writerow(row)


__all__ = [
    "Grid",
    "WaveFunction",
    "HamiltonianMatrix",
    "SpectrumResult",
    "FockScan",
    "EhrenfestSeries",
    "gaussian",
    "weights",
    "central_difference",
    "staggered_difference",
    "build_momentum",
    "build_hamiltonian",
    "eigensolve",
    "expectation",
    "quantum_virial_check",
    "pdm_quantum_check",
    "fock_energy",
    "fock_slope",
    "fock_scan",
    "dilation_generator",
    "dilation_observable",
    "commutator",
    "interior_defect",
    "evolve_cn",
    "ehrenfest_series",
    "ehrenfest_residual",
    "hypervirial_defect",
    "write_eigenfunctions_csv",
]
