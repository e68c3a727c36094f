import numpy as np
import pytest

from nonlocalfb.errors import CFLError
from nonlocalfb.grid import FracOrder, GridField, GridSpec
from nonlocalfb.porousflow import (EvolutionState, admissible_dt, entropy, face_velocity,
                                   finite_propagation_check, model1_admissible_dt, run,
                                   smoothing_exponent_fit, step_model1, step_model2,
                                   support_bounds)

G = GridSpec(8.0, 512)
HALF = FracOrder(0.5)


def bump(g=G, width=1.0, height=1.0):
    x = g.x
    return GridField(g, height * np.clip(1 - (x / width) ** 2, 0, None) ** 2)


def test_zero_state_is_stationary():
    st = EvolutionState.initial(GridField(G, np.zeros(G.points)), HALF)
    assert admissible_dt(st) == np.inf
    traj = run(st.density, HALF, T=0.5)
    assert not np.any(traj.final.density.values)
    assert traj.final.time == pytest.approx(0.5)


def test_negative_input_rejected():
    u = bump().values.copy()
    u[10] = -1e-6
    with pytest.raises(ValueError):
        EvolutionState.initial(GridField(G, u), HALF)


def test_zero_horizon():
    traj = run(bump(), HALF, T=0.0)
    assert traj.steps == 0 and len(traj.snapshots) == 1
    with pytest.raises(ValueError):
        run(bump(), HALF, T=-1.0)


def test_cfl_violation_reports_admissible_dt():
    st = EvolutionState.initial(bump(), HALF)
    dt_ok = admissible_dt(st)
    with pytest.raises(CFLError) as info:
        step_model2(st, 3 * dt_ok)
    assert info.value.admissible_dt == pytest.approx(dt_ok)
    step_model2(st, dt_ok)


def test_velocity_is_odd_for_even_data():
    # face j sits between nodes j, j+1; its mirror image is face n-1-j
    v = face_velocity(EvolutionState.initial(bump(), HALF))[1:]
    assert np.allclose(v, -v[::-1], atol=1e-12)


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_mass_and_positivity(s):
    st = EvolutionState.initial(bump(), FracOrder(s))
    m0 = st.mass
    for _ in range(50):
        st = step_model2(st, 0.8 * admissible_dt(st))
        assert st.density.values.min() >= -1e-13
    assert abs(st.mass - m0) / m0 <= 1e-12


def test_support_expands():
    traj = run(bump(), HALF, T=0.5, snap_times=[0.1, 0.2, 0.3, 0.4])
    widths = np.array(traj.support_right) - np.array(traj.support_left)
    assert np.all(np.diff(widths) >= 0) and widths[-1] > widths[0]
    assert np.all(np.diff(traj.max_u) < 0)


def test_snapshots_hit_requested_times():
    traj = run(bump(), HALF, T=0.3, snap_times=[0.1, 0.2])
    assert traj.times == pytest.approx([0.0, 0.1, 0.2, 0.3])


def test_support_bounds():
    lo, hi = support_bounds(bump())
    assert lo == pytest.approx(-1, abs=G.spacing) and hi == pytest.approx(1, abs=G.spacing)
    assert support_bounds(GridField(G, np.zeros(G.points))) == (0.0, 0.0)


def test_entropy_translation_invariant_without_confinement():
    g = GridSpec(8.0, 512)
    u = bump(g)
    shifted = GridField(g, np.roll(u.values, 40))
    assert entropy(u, HALF, 0.0) == pytest.approx(entropy(shifted, HALF, 0.0), rel=1e-10)
    assert entropy(u, HALF, 0.5) < entropy(shifted, HALF, 0.5)


def test_entropy_decreases_along_rescaled_flow():
    traj = run(bump(), HALF, rescaled=True, T=1.0, snap_every=5)
    assert np.all(np.diff(traj.entropy) <= 1e-8)


def test_envelope_report():
    u0 = bump(height=0.3)
    traj = run(u0, FracOrder(0.25), T=0.2, snap_times=[0.05, 0.1, 0.15])
    rep = finite_propagation_check(traj, A=1.0, a=1.0)
    assert rep.satisfied and np.isfinite(rep.C)
    with pytest.raises(ValueError):
        finite_propagation_check(traj, A=0.1, a=1.0)
    assert finite_propagation_check(run(u0, HALF, T=0.1), 1.0, 1.0).satisfied is None


def test_smoothing_fit_needs_range():
    from nonlocalfb.errors import FitError

    traj = run(bump(), HALF, T=0.1, snap_every=2)
    with pytest.raises(FitError):
        smoothing_exponent_fit(traj)


def test_model1_fills_space_in_one_step():
    st = EvolutionState.initial(bump(), HALF)
    dt = model1_admissible_dt(st, 2.0)
    new = step_model1(st, 2.0, dt)
    assert new.density.values.min() > 0
    assert new.mass == pytest.approx(st.mass, rel=1e-12)
    with pytest.raises(CFLError):
        step_model1(st, 2.0, 2 * dt)
    with pytest.raises(ValueError):
        step_model1(st, 1.0, dt)


def test_ordered_barenblatt_pair_stays_ordered():
    from nonlocalfb.selfsim import BarenblattSpec, barenblatt_cell_average

    g = GridSpec(8.0, 1024)
    lo = barenblatt_cell_average(BarenblattSpec(0.8, 0.5), g, 1.0)
    hi = barenblatt_cell_average(BarenblattSpec(1.0, 0.5), g, 1.0)
    assert np.all(hi.values >= lo.values)
    times = [1.25, 1.5, 1.75, 2.0]
    a = run(lo, HALF, T=1.0, t0=1.0, snap_times=times)
    b = run(hi, HALF, T=1.0, t0=1.0, snap_times=times)
    dist = []
    for sa, sb in zip(a.snapshots, b.snapshots):
        assert np.all(sb.density.values >= sa.density.values - 1e-10)
        dist.append(np.sum(sb.density.values - sa.density.values) * g.spacing)
    assert np.all(np.diff(dist) <= 1e-12)
