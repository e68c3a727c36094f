import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonlocalfb.swarm import (ParticleEnsemble, PotentialSpec, discrete_energy,
                              euler_lagrange_check, flock_speed_deviation, pairwise_forces,
                              potential_eval, radial_profile, relax_to_equilibrium,
                              step_first_order, step_second_order)

SPEC = PotentialSpec(2.0, 0.0)


def test_potential_values():
    W, dW = potential_eval(SPEC, 1.0)
    assert (W, dW) == (0.5, 0.0)
    W, dW = potential_eval(PotentialSpec(2.0, 1.0), 2.0)
    assert W == pytest.approx(0.0) and dW == pytest.approx(1.0)
    W, _ = potential_eval(SPEC, np.e)
    assert W == pytest.approx(np.e ** 2 / 2 - 1)
    with pytest.raises(ValueError):
        potential_eval(SPEC, 0.0)
    with pytest.raises(ValueError):
        PotentialSpec(1.0, 2.0)


def test_derivative_matches_difference():
    spec = PotentialSpec(3.0, -0.5)
    r = np.linspace(0.2, 3, 30)
    W = lambda q: potential_eval(spec, q)[0]
    fd = (W(r + 1e-6) - W(r - 1e-6)) / 2e-6
    assert np.allclose(potential_eval(spec, r)[1], fd, rtol=1e-7)


def test_coincident_particles_rejected():
    with pytest.raises(ValueError):
        ParticleEnsemble(np.zeros((2, 2)))


def test_two_particles():
    # repelled inside r = 1, attracted outside
    near = ParticleEnsemble(np.array([[0.0, 0.0], [0.5, 0.0]]))
    far = ParticleEnsemble(np.array([[0.0, 0.0], [2.0, 0.0]]))
    assert pairwise_forces(near, SPEC)[0, 0] < 0
    assert pairwise_forces(far, SPEC)[0, 0] > 0
    f = pairwise_forces(far, SPEC)
    assert f[0, 0] == pytest.approx(2.0 - 0.5)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2 ** 31))
def test_forces_sum_to_zero(M, seed):
    e = ParticleEnsemble.random(M, 2, seed)
    F = pairwise_forces(e, SPEC)
    assert np.abs(F.sum(axis=0)).max() <= 1e-10 * max(1.0, np.abs(F).max()) * M


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2 ** 31),
       st.floats(-5, 5), st.floats(-5, 5))
def test_energy_translation_invariant(M, seed, dx, dy):
    e = ParticleEnsemble.random(M, 2, seed)
    E0 = discrete_energy(e, SPEC)
    assert discrete_energy(e.translated([dx, dy]), SPEC) == pytest.approx(E0, rel=1e-9, abs=1e-9)


def test_forces_are_energy_gradient():
    e = ParticleEnsemble.random(6, 2, 3)
    F = pairwise_forces(e, SPEC)
    X = e.positions.copy()
    i, k, eps = 2, 1, 1e-6
    Xp, Xm = X.copy(), X.copy()
    Xp[i, k] += eps
    Xm[i, k] -= eps
    dE = (discrete_energy(ParticleEnsemble(Xp), SPEC) - discrete_energy(ParticleEnsemble(Xm), SPEC)) / (2 * eps)
    assert -dE == pytest.approx(F[i, k], rel=1e-6)


def test_single_particle_reaches_target_speed():
    e = ParticleEnsemble(np.zeros((1, 2)), np.array([[0.1, 0.0]]))
    for _ in range(5000):
        e = step_second_order(e, 1.0, 4.0, SPEC, 0.01)
    assert flock_speed_deviation(e, 1.0, 4.0) < 1e-8


def test_second_order_needs_velocities():
    with pytest.raises(ValueError):
        step_second_order(ParticleEnsemble.random(3, 2, 0), 1.0, 1.0, SPEC, 0.01)


def test_first_order_decreases_energy():
    e = ParticleEnsemble.random(40, 2, 5)
    E = discrete_energy(e, SPEC, True)
    for _ in range(20):
        e = step_first_order(e, SPEC, 0.1, continuum=True)
        E_new = discrete_energy(e, SPEC, True)
        assert E_new <= E
        E = E_new


@pytest.fixture(scope="module")
def relaxed():
    e, rep = relax_to_equilibrium(ParticleEnsemble.random(200, 2, 0), SPEC, tol=1e-9)
    return e, rep


def test_relaxation_converges(relaxed):
    e, rep = relaxed
    assert rep.converged and rep.scaled_residual <= 1e-9
    assert rep.energy < discrete_energy(ParticleEnsemble.random(200, 2, 0), SPEC, True)


def test_relaxed_state_passes_euler_lagrange(relaxed):
    e, _ = relaxed
    c = e.positions.mean(axis=0)
    th = np.linspace(0, 2 * np.pi, 32, endpoint=False)
    probes = c + 1.5 * np.c_[np.cos(th), np.sin(th)]
    rep = euler_lagrange_check(e, SPEC, probes)
    assert rep.psi_spread < 0.02
    assert rep.probe_margin > 0


def test_random_scatter_fails_euler_lagrange():
    e = ParticleEnsemble.random(200, 2, 0, spread=0.2)
    rep = euler_lagrange_check(e, SPEC, np.array([[2.0, 0.0]]))
    assert rep.psi_spread > 0.05


def test_descent_method_agrees(relaxed):
    e0 = ParticleEnsemble.random(30, 2, 1)
    a, ra = relax_to_equilibrium(e0, SPEC, tol=1e-6)
    b, rb = relax_to_equilibrium(e0, SPEC, tol=1e-6, method="descent")
    assert ra.energy == pytest.approx(rb.energy, rel=1e-6)
    with pytest.raises(ValueError):
        relax_to_equilibrium(e0, SPEC, method="anneal")


def test_radial_profile_normalised(relaxed):
    e, _ = relaxed
    edges, dens = radial_profile(e, 8)
    vol = np.pi * np.diff(edges ** 2)
    assert np.sum(dens * vol) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        radial_profile(e, 2)


def test_relaxation_is_deterministic():
    e0 = ParticleEnsemble.random(50, 2, 9)
    a, _ = relax_to_equilibrium(e0, SPEC, tol=1e-8)
    b, _ = relax_to_equilibrium(e0, SPEC, tol=1e-8)
    assert np.array_equal(a.positions, b.positions)
