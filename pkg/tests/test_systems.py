import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from virial_lab.errors import DomainError, SingularGeneratorError
from virial_lab.integrators import PhaseState
from virial_lab.ktrig import arcsin_k
from virial_lab.systems import (
    MassProfile,
    anisotropic_oscillator,
    build_pdm_generator,
    build_pdm_potential,
    build_xi,
    clausius_generator,
    get_system,
    hamiltonian_split,
    harmonic,
    kepler,
    kepler_state,
    ml_system,
    pdm_custom,
    quartic,
    total_energy,
)

col = lambda x: np.asarray(x, dtype=float)[:, None]  # noqa: E731


def fd(f, x, h=1e-6):
    return (f(x + h) - f(x - h)) / (2 * h)


def fd4(f, x, h=1e-3):
    return (8 * (f(x + h) - f(x - h)) - (f(x + 2 * h) - f(x - 2 * h))) / (12 * h)


# --- xi -------------------------------------------------------------------


def test_xi_unit_mass_is_dilation():
    xi = build_xi(MassProfile.constant(1.0), a=2.0, C1=0.0)
    x = np.linspace(-3, 3, 13)
    assert np.allclose(xi(x), x, rtol=0, atol=1e-15)
    assert np.allclose(xi.deriv(x), 1.0)


def test_xi_killing_field_for_constant_mass():
    xi = build_xi(MassProfile.constant(4.0), a=0.0, C1=1.0)
    assert np.allclose(xi(np.linspace(-2, 2, 5)), 0.5)


@pytest.mark.parametrize("a,C1", [(2.0, 1.0), (1.0, -0.5), (-3.0, 2.0)])
def test_xi_ml_mass_matches_closed_form(a, C1):
    xi = build_xi(MassProfile.ml(1.0), a=a, C1=C1)
    q = np.linspace(-9, 9, 41)
    expected = np.sqrt(1 + q * q) * (C1 + 0.5 * a * arcsin_k(-1.0, q))
    assert np.max(np.abs(xi(q) - expected) / (1 + np.abs(expected))) < 1e-11


def test_xi_ode_residual_random_parameters():
    rng = np.random.default_rng(7)
    bump = MassProfile.position_dependent(
        lambda x: np.exp(-x * x) + 0.5, lambda x: -2 * x * np.exp(-x * x), domain=(-6, 6)
    )
    masses = [MassProfile.constant(1.0), MassProfile.constant(2.5), MassProfile.ml(0.5), MassProfile.ml(-0.5), bump]
    for _ in range(50):
        mass = masses[rng.integers(len(masses))]
        a, C1 = rng.uniform(-3, 3), rng.uniform(-2, 2)
        xi = build_xi(mass, a, C1)
        edge = 1.3 if mass.domain else 5.0
        x = np.linspace(-edge, edge, 57)
        drift = xi(x) * mass.m_prime(x) / mass.m(x)
        res = 2 * fd4(xi, x) + drift - a
        assert np.max(np.abs(res) / (1 + np.abs(drift))) < 1e-8


def test_xi_outside_table_raises():
    xi = build_xi(MassProfile.ml(1.0), 1.0, 1.0, domain=(-2, 2))
    with pytest.raises(DomainError):
        xi(3.0)
    with pytest.raises(DomainError):
        build_xi(MassProfile.ml(1.0), 1.0, 1.0, domain=(1, 2))


# --- potentials -------------------------------------------------------------


def test_potential_constant_mass_is_shifted_parabola():
    xi = build_xi(MassProfile.constant(1.0), 2.0, 1.0)  # xi = x + 1
    pot = build_pdm_potential(xi, 2.0, 1.0)
    x = np.linspace(-0.9, 5, 30)
    assert np.max(np.abs(pot.V(col(x)) - (x + 1) ** 2)) < 1e-10
    with pytest.raises(SingularGeneratorError):
        pot.V(col([-1.5]))


def test_potential_across_zero_continues_parabola():
    xi = build_xi(MassProfile.constant(1.0), 2.0, 1.0)
    pot = build_pdm_potential(xi, 2.0, 1.0, across_zero=True)
    x = np.linspace(-6, 6, 101)
    assert np.max(np.abs(pot.V(col(x)) - (x + 1) ** 2)) < 1e-9
    assert np.max(np.abs(pot.grad_V(col(x))[:, 0] - 2 * (x + 1))) < 1e-9


def test_potential_ml_closed_form():
    C1, a, C = 1.0, 2.0, 3.0
    xi = build_xi(MassProfile.ml(1.0), a, C1)
    pot = build_pdm_potential(xi, a, C, across_zero=True)
    q = np.linspace(-9, 9, 61)
    expected = C * (1 + a / (2 * C1) * arcsin_k(-1.0, q)) ** 2
    assert np.max(np.abs(pot.V(col(q)) - expected) / (1 + expected)) < 1e-10


def test_potential_reference_value_and_zero_a():
    xi = build_xi(MassProfile.ml(1.0), 1.0, 2.0)
    pot = build_pdm_potential(xi, 1.0, 0.7, x_ref=0.5)
    assert pot.V(col([0.5]))[0] == pytest.approx(0.7, rel=1e-14)
    flat = build_pdm_potential(build_xi(MassProfile.ml(1.0), 0.0, 1.0), 0.0, 2.5)
    assert np.all(flat.V(col(np.linspace(-1, 1, 5))) == 2.5)


def test_quantum_sign_convention_gives_same_potential():
    xi = build_xi(MassProfile.ml(1.0), 2.0, 1.0)
    classical = build_pdm_potential(xi, 2.0, 1.0, across_zero=True)
    quantum = build_pdm_potential(xi, -2.0, 1.0, sign=-1, across_zero=True)
    q = col(np.linspace(-8, 8, 33))
    assert np.allclose(classical.V(q), quantum.V(q), rtol=1e-14, atol=0)


@pytest.mark.parametrize("lam,a,C1", [(1.0, 2.0, 1.0), (0.5, 1.0, 2.0), (-0.5, 2.0, 1.0)])
def test_scaling_relation_xi_dV_equals_aV(lam, a, C1):
    mass = MassProfile.ml(lam)
    xi = build_xi(mass, a, C1)
    pot = build_pdm_potential(xi, a, 1.0, across_zero=True)
    lo, hi = pot.domain
    x = np.linspace(0.9 * lo, 0.9 * hi, 80)
    V = pot.V(col(x))
    res = xi(x) * pot.grad_V(col(x))[:, 0] - a * V
    assert np.max(np.abs(res) / (1 + np.abs(V))) < 1e-8


def test_potential_is_quadratic_in_u():
    mass = MassProfile.ml(1.0)
    xi = build_xi(mass, 2.0, 1.0)
    pot = build_pdm_potential(xi, 2.0, 1.0, across_zero=True)
    x = np.linspace(-9, 9, 300)
    u = xi.u(x)
    coef = np.polyfit(u, pot.V(col(x)), 2)
    assert np.max(np.abs(np.polyval(coef, u) - pot.V(col(x)))) < 1e-9
    assert coef == pytest.approx([1.0, 2.0, 1.0], abs=1e-10)


def test_grad_V_matches_finite_difference():
    S, _, _ = pdm_custom()
    for system in (S, kepler(), quartic(2.0), harmonic(1.3, 2.0), ml_system(0.5, 2.0)):
        rng = np.random.default_rng(11)
        for _ in range(10):
            q = rng.uniform(0.3, 1.5, system.dim)
            g = system.potential.grad_V(q)
            for j in range(system.dim):
                e = np.zeros(system.dim)
                e[j] = 1e-6
                num = (system.potential.V(q + e) - system.potential.V(q - e)) / 2e-6
                assert abs(num - g[j]) < 1e-6 * (1 + abs(g[j]))


@pytest.mark.parametrize("system", [harmonic(), harmonic(2.0, 3.0, 3), kepler(), quartic(), anisotropic_oscillator()], ids=lambda s: s.name)
def test_euler_homogeneity(system):
    k = system.potential.homogeneity_degree
    q = np.random.default_rng(5).uniform(0.2, 2.0, (20, system.dim))
    V = system.potential.V(q)
    lhs = np.sum(q * system.potential.grad_V(q), axis=-1)
    assert np.max(np.abs(lhs - k * V) / (1 + np.abs(V))) < 1e-9


# --- generators -----------------------------------------------------------------


def test_clausius_values():
    g1, g2, g3 = clausius_generator(1), clausius_generator(2), clausius_generator(3)
    assert g1(np.array([2.0]), np.array([3.0])) == 6.0
    assert g3(np.array([1.0, 0, 0]), np.array([0, 1.0, 0])) == 0.0
    assert g2(np.array([1.0, 2.0]), np.array([3.0, 4.0])) == 11.0
    assert g1.a == -2.0
    with pytest.raises(ValueError):
        clausius_generator(0)


def test_pdm_generator_special_cases():
    one = MassProfile.constant(1.0)
    dil = build_pdm_generator(one, build_xi(one, 2.0, 0.0))
    assert dil(np.array([1.5]), np.array([2.0])) == pytest.approx(3.0)
    trans = build_pdm_generator(one, build_xi(one, 0.0, 1.0))
    assert trans(np.array([7.0]), np.array([2.0])) == pytest.approx(2.0)


def test_pdm_generator_ml_velocity_form():
    a, C1 = 2.0, 1.0
    mass = MassProfile.ml(1.0)
    gen = build_pdm_generator(mass, build_xi(mass, a, C1))
    q, v = 0.8, 1.3
    p = v / (1 + q * q)
    expected = v / math.sqrt(1 + q * q) * (C1 + a / 2 * math.asinh(q))
    assert gen(np.array([q]), np.array([p])) == pytest.approx(expected, rel=1e-12)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_generator_gradients_match_finite_differences(x, p):
    mass = MassProfile.ml(1.0)
    gen = build_pdm_generator(mass, build_xi(mass, 1.5, 0.5))
    q_arr, p_arr, h = np.array([x]), np.array([p]), 1e-6
    gq = (gen(q_arr + h, p_arr) - gen(q_arr - h, p_arr)) / (2 * h)
    gp = (gen(q_arr, p_arr + h) - gen(q_arr, p_arr - h)) / (2 * h)
    assert abs(gq - gen.grad_q(q_arr, p_arr)[0]) < 1e-6 * (1 + abs(gq))
    assert abs(gp - gen.grad_p(q_arr, p_arr)[0]) < 1e-6 * (1 + abs(gp))


# --- mass and systems ----------------------------------------------------------


def test_mass_derivative_matches_finite_difference():
    for lam in (1.0, 0.5, -0.5):
        m = MassProfile.ml(lam)
        x = np.linspace(-1.2, 1.2, 25)
        assert np.max(np.abs(fd(m.m, x) - m.m_prime(x)) / np.abs(m.m(x))) < 1e-6


def test_mass_must_be_positive():
    with pytest.raises(DomainError):
        MassProfile.constant(0.0)


def test_ml_system_values():
    s = ml_system(1.0, 1.0)
    assert s.mass.m(1.0) == 0.5
    assert s.potential.V(np.array([1.0])) == pytest.approx(0.25)
    assert ml_system(-0.25, 2.0).domain == pytest.approx((-2.0, 2.0))
    assert ml_system(0.0, 1.0).mass.is_constant


def test_ml_lambda_to_zero_is_harmonic():
    q = np.linspace(-2, 2, 9)[:, None]
    h = harmonic()
    s = ml_system(1e-10, 1.0)
    assert np.max(np.abs(s.potential.V(q) - h.potential.V(q))) < 1e-8
    assert np.max(np.abs(s.mass.m(q[:, 0]) - 1.0)) < 1e-8


def test_hamiltonian_split_examples():
    assert hamiltonian_split(harmonic(), PhaseState.of(0.0, 1.0)) == (0.5, 0.0)
    assert hamiltonian_split(ml_system(1.0, 1.0), PhaseState.of(1.0, 1.0)) == pytest.approx((1.0, 0.25))
    assert hamiltonian_split(kepler(), PhaseState.of([1.0, 0.0], [0.0, 1.0])) == pytest.approx((0.5, -1.0))
    with pytest.raises(DomainError):
        hamiltonian_split(ml_system(-1.0, 1.0), PhaseState.of(1.2, 0.0))


def test_kepler_state_has_requested_energy_and_periapsis():
    for e in (0.0, 0.3, 0.6):
        q, p = kepler_state(e, -0.5)
        assert total_energy(kepler(), q, p) == pytest.approx(-0.5, rel=1e-14)
        assert np.linalg.norm(q) == pytest.approx(1.0 - e)


def test_pdm_requires_one_dimension():
    from virial_lab.systems import PotentialSpec, SystemSpec

    pot = PotentialSpec(V=lambda q: 0.0, grad_V=lambda q: q * 0)
    with pytest.raises(ValueError):
        SystemSpec(2, MassProfile.ml(1.0), pot)


def test_catalog_lookup():
    assert get_system("ml", lam=0.5, alpha=2.0).params == {"lam": 0.5, "alpha": 2.0}
    assert get_system("quartic").potential.homogeneity_degree == 4
    with pytest.raises(KeyError):
        get_system("toda")
