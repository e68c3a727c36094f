"""Model II evolution u_t = div(u grad K u) and its rescaled form.

The pressure ``K u`` is the whole-space Riesz potential of the cell averages,
so there is no periodic image of the density.  Transport uses a conservative
upwind finite-volume update with zero flux through both domain ends, which
keeps the mass exactly and the density nonnegative under the CFL bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CFLError, ConvergenceError, FitError
from .fracops import frac_laplacian_spectral, riesz_potential_direct
from .grid import FracOrder, GridField, GridSpec
from .io import write_columns
from .selfsim import exponents

__all__ = [
    "EvolutionState",
    "Trajectory",
    "EnvelopeReport",
    "SmoothingFit",
    "face_velocity",
    "admissible_dt",
    "step_model2",
    "run",
    "entropy",
    "support_bounds",
    "finite_propagation_check",
    "support_growth_exponent",
    "smoothing_exponent_fit",
    "model1_admissible_dt",
    "step_model1",
]

NEG_TOL = 1e-13
CFL = 0.5
SAFETY = 0.4
DT_FLOOR = 1e-9


@dataclass(frozen=True, eq=False)
class EvolutionState:
    density: GridField
    time: float
    order: FracOrder
    rescaled: bool = False
    beta: float = 0.0
    mass: float = field(init=False)

    def __post_init__(self):
        if self.density.values.min() < -NEG_TOL:
            raise ValueError(f"negative density {self.density.values.min():.3g}")
        object.__setattr__(self, "mass", self.density.mass)

    @classmethod
    def initial(cls, u0: GridField, order: FracOrder, rescaled: bool = False,
                time: float = 0.0) -> "EvolutionState":
        beta = exponents(1, order.s).beta if rescaled else 0.0
        return cls(u0, time, order, rescaled, beta)

    @property
    def grid(self) -> GridSpec:
        return self.density.grid


def face_velocity(st: EvolutionState) -> np.ndarray:
    """Velocity at the n-1 interior faces: -dp/dx (- beta y when rescaled)."""
    g = st.grid
    u = st.density.values
    p = riesz_potential_direct(u, st.order, g)
    vel = -(p[1:] - p[:-1]) / g.spacing
    if st.rescaled:
        x = g.x
        vel = vel - st.beta * 0.5 * (x[1:] + x[:-1])
    return vel


def _max_active_speed(u, vel) -> float:
    act = (u[1:] > 0) | (u[:-1] > 0)
    return float(np.abs(vel[act]).max()) if act.any() else 0.0


def admissible_dt(st: EvolutionState) -> float:
    """Largest dt with dt * max|velocity| <= 0.5 h on faces touching mass."""
    vmax = _max_active_speed(st.density.values, face_velocity(st))
    return np.inf if vmax == 0 else CFL * st.grid.spacing / vmax


def _upwind_update(u, vel, dt, h):
    flux = vel * np.where(vel > 0, u[:-1], u[1:])
    du = np.zeros_like(u)
    du[:-1] -= flux
    du[1:] += flux
    return u + (dt / h) * du


def step_model2(st: EvolutionState, dt: float, _vel=None) -> EvolutionState:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    u = st.density.values
    vel = face_velocity(st) if _vel is None else _vel
    vmax = _max_active_speed(u, vel)
    h = st.grid.spacing
    if dt * vmax > CFL * h * (1 + 1e-12):
        raise CFLError(f"dt={dt:.3g} violates the CFL bound", admissible_dt=CFL * h / vmax)
    new = _upwind_update(u, vel, dt, h)
    return EvolutionState(GridField(st.grid, new), st.time + dt, st.order, st.rescaled, st.beta)


def entropy(v: GridField, order: FracOrder, beta: float) -> float:
    """h * sum(v K v + beta y^2 v) with K the whole-space Riesz operator."""
    vals = v.values
    if vals.min() < -NEG_TOL:
        raise ValueError("entropy needs a nonnegative density")
    if not np.any(vals):
        return 0.0
    Kv = riesz_potential_direct(vals, order, v.grid)
    x = v.grid.x
    return float(v.grid.spacing * np.sum(vals * Kv + beta * x * x * vals))


def support_bounds(u: GridField, rel: float = 1e-10):
    """Outer edges of the cells where u exceeds ``rel`` times its maximum."""
    vals = u.values
    peak = vals.max()
    if peak <= 0:
        return 0.0, 0.0
    idx = np.flatnonzero(vals > rel * peak)
    h = u.grid.spacing
    return float(u.x[idx[0]] - h / 2), float(u.x[idx[-1]] + h / 2)


@dataclass(eq=False)
class Trajectory:
    snapshots: list
    times: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    max_u: list = field(default_factory=list)
    entropy: list = field(default_factory=list)
    support_left: list = field(default_factory=list)
    support_right: list = field(default_factory=list)
    steps: int = 0

    @classmethod
    def start(cls, st: EvolutionState) -> "Trajectory":
        tr = cls([])
        tr.record(st)
        return tr

    def record(self, st: EvolutionState):
        if self.times and not st.time > self.times[-1]:
            raise ValueError("snapshot times must increase strictly")
        self.snapshots.append(st)
        self.times.append(st.time)
        self.mass.append(st.density.mass)
        self.max_u.append(float(st.density.values.max()))
        self.entropy.append(entropy(st.density, st.order, st.beta))
        lo, hi = support_bounds(st.density)
        self.support_left.append(lo)
        self.support_right.append(hi)

    @property
    def final(self) -> EvolutionState:
        return self.snapshots[-1]

    def table(self) -> dict:
        return {"time": self.times, "mass": self.mass, "max_u": self.max_u,
                "entropy": self.entropy, "support_left": self.support_left,
                "support_right": self.support_right}

    def to_csv(self, path):
        return write_columns(path, self.table())

    def dump_fields(self, directory, stem: str, every: int = 1):
        """One (x, u) CSV per stored snapshot; returns the written paths."""
        from pathlib import Path

        out = []
        for k, st in enumerate(self.snapshots[::every]):
            p = Path(directory) / f"{stem}_snap{k:04d}.csv"
            out.append(write_columns(p, {"x": st.density.x, "u": st.density.values}))
        return out


def run(u0: GridField, order: FracOrder, rescaled: bool = False, T: float = 1.0,
        snap_every: int = 1, snap_times=None, t0: float = 0.0,
        max_steps: int = 10_000_000, callback=None) -> Trajectory:
    """Advance from ``t0`` to ``t0 + T`` with dt = 0.4 h / max|velocity|.

    Snapshots are stored every ``snap_every`` steps, or exactly at the given
    ``snap_times`` (absolute times) when those are supplied; the final state is
    always stored.  ``callback(state)`` is invoked after every step.
    """
    if T < 0:
        raise ValueError("horizon must be nonnegative")
    st = EvolutionState.initial(u0, order, rescaled, t0)
    traj = Trajectory.start(st)
    t_end = t0 + T
    targets = sorted(t for t in (snap_times or []) if t0 < t <= t_end)
    targets.append(t_end)
    k = 0
    h = u0.grid.spacing
    while st.time < t_end * (1 - 1e-15) - 1e-300 and traj.steps < max_steps:
        vel = face_velocity(st)
        vmax = _max_active_speed(st.density.values, vel)
        dt_cfl = np.inf if vmax == 0 else SAFETY * h / vmax
        if dt_cfl < DT_FLOOR:
            raise ConvergenceError(f"time step {dt_cfl:.3g} below floor", payload=traj)
        dt = min(dt_cfl, targets[k] - st.time)
        st = step_model2(st, dt, _vel=vel)
        traj.steps += 1
        if st.time >= targets[k] * (1 - 1e-14):
            st = EvolutionState(st.density, targets[k], st.order, st.rescaled, st.beta)
            k += 1
            traj.record(st)
        elif snap_times is None and traj.steps % snap_every == 0:
            traj.record(st)
        if callback is not None:
            callback(st)
    if traj.steps >= max_steps:
        raise ConvergenceError("step budget exhausted", payload=traj)
    return traj


# ---------------------------------------------------------------- diagnostics


@dataclass(frozen=True)
class EnvelopeReport:
    C: float
    satisfied: bool | None
    times: np.ndarray
    C_of_t: np.ndarray


def finite_propagation_check(traj: Trajectory, A: float, a: float) -> EnvelopeReport:
    """Smallest C with u(x, t) <= A exp(C t - a|x|) on every stored snapshot.

    ``satisfied`` is a verdict only for s < 1/2; for larger s the growth of
    C(t) is reported without a bound.
    """
    first = traj.snapshots[0]
    x = first.density.x
    env0 = A * np.exp(-a * np.abs(x))
    u0 = first.density.values
    if np.any(u0 >= env0):
        raise ValueError("initial data must lie strictly below A exp(-a|x|)")
    t0 = first.time
    times, cs = [], []
    for st in traj.snapshots[1:]:
        u = st.density.values
        pos = u > 0
        dt = st.time - t0
        c = 0.0
        if pos.any():
            c = max(0.0, float(np.max(np.log(u[pos] / env0[pos]))) / dt)
        times.append(st.time)
        cs.append(c)
    cs = np.array(cs)
    C = float(cs.max()) if len(cs) else 0.0
    satisfied = bool(np.isfinite(C)) if first.order.s < 0.5 else None
    return EnvelopeReport(C, satisfied, np.array(times), cs)


def support_growth_exponent(traj: Trajectory, t_min: float | None = None) -> float:
    """Log-log slope of the support width against time."""
    t = np.array(traj.times)
    w = np.array(traj.support_right) - np.array(traj.support_left)
    sel = (t > 0) & (w > 0)
    if t_min is not None:
        sel &= t >= t_min
    if sel.sum() < 4 or t[sel].max() / t[sel].min() < 3:
        raise FitError("not enough time range to fit the support growth")
    return float(np.polyfit(np.log(t[sel]), np.log(w[sel]), 1)[0])


@dataclass(frozen=True)
class SmoothingFit:
    alpha_hat: float
    ratio: float | None = None
    gamma_hat: float | None = None


def smoothing_exponent_fit(traj: Trajectory, doubled: Trajectory | None = None,
                           decades: float = 1.5) -> SmoothingFit:
    """Fit max u ~ t^-alpha over the last ``decades`` of the run.

    With ``doubled`` (same data, twice the mass, same snapshot times) also
    returns the ratio of the final maxima and gamma_hat = log2(ratio).
    """
    t = np.array(traj.times)
    m = np.array(traj.max_u)
    T = t[-1]
    pos = t > 0
    if not pos.any() or T / t[pos].min() < 10 ** decades:
        raise FitError("trajectory spans too short a time range")
    sel = t >= T / 10 ** decades
    if sel.sum() < 4:
        raise FitError("too few snapshots in the fitting window")
    alpha_hat = -float(np.polyfit(np.log(t[sel]), np.log(m[sel]), 1)[0])
    if doubled is None:
        return SmoothingFit(alpha_hat)
    if not np.isclose(doubled.times[-1], T):
        raise ValueError("the doubled-mass run must end at the same time")
    ratio = doubled.max_u[-1] / traj.max_u[-1]
    return SmoothingFit(alpha_hat, float(ratio), float(np.log2(ratio)))


# ---------------------------------------------------------------- Model I


def model1_admissible_dt(st: EvolutionState, m: float) -> float:
    u = st.density.values
    rate = float(np.max(m * np.clip(u, 0, None) ** (m - 1)))
    h = st.grid.spacing
    return np.inf if rate == 0 else h ** st.order.sigma / (np.pi ** st.order.sigma * rate)


def step_model1(st: EvolutionState, m: float, dt: float) -> EvolutionState:
    """Explicit step u <- u - dt (-Delta)^s (u^m), spectral and periodic."""
    if not m > 1:
        raise ValueError(f"exponent must exceed 1, got {m}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    bound = model1_admissible_dt(st, m)
    if dt > bound * (1 + 1e-12):
        raise CFLError(f"dt={dt:.3g} exceeds the explicit stability bound", admissible_dt=bound)
    u = st.density
    um = u.with_values(np.clip(u.values, 0, None) ** m)
    new = u.values - dt * frac_laplacian_spectral(um, st.order).values
    return EvolutionState(u.with_values(new), st.time + dt, st.order, st.rescaled, st.beta)
