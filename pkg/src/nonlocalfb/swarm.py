"""Interacting particles with the power-law potential W = r^a/a - r^b/b.

Sums over pairs are evaluated with elementwise products and ``ndarray.sum``
rather than BLAS products, so results do not depend on thread scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special
from scipy.optimize import minimize

MIN_SEPARATION = 1e-12

__all__ = [
    "PotentialSpec",
    "potential_eval",
    "ParticleEnsemble",
    "EquilibriumReport",
    "pairwise_forces",
    "discrete_energy",
    "step_first_order",
    "step_second_order",
    "flock_speed_deviation",
    "relax_to_equilibrium",
    "euler_lagrange_check",
    "radial_profile",
]


@dataclass(frozen=True)
class PotentialSpec:
    a: float
    b: float
    N: int = 2

    def __post_init__(self):
        if not (self.a > self.b > -self.N):
            raise ValueError(f"need a > b > -N, got a={self.a}, b={self.b}, N={self.N}")


def _power_term(r, p):
    # r^p / p with the logarithm at p = 0
    return np.log(r) if p == 0 else r ** p / p


def potential_eval(spec: PotentialSpec, r):
    """Return (W(r), W'(r)); accepts scalars or arrays of positive distances."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0):
        raise ValueError("distances must be positive")
    W = _power_term(r_arr, spec.a) - _power_term(r_arr, spec.b)
    dW = r_arr ** (spec.a - 1) - r_arr ** (spec.b - 1)
    if r_arr.ndim == 0:
        return float(W), float(dW)
    return W, dW


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    positions: np.ndarray
    velocities: np.ndarray | None = None

    def __post_init__(self):
        X = np.array(self.positions, dtype=float)
        if X.ndim != 2:
            raise ValueError("positions must be an M x N array")
        if not np.all(np.isfinite(X)):
            raise ValueError("positions must be finite")
        X.setflags(write=False)
        object.__setattr__(self, "positions", X)
        if self.velocities is not None:
            V = np.array(self.velocities, dtype=float)
            if V.shape != X.shape or not np.all(np.isfinite(V)):
                raise ValueError("velocities must be finite and match positions")
            V.setflags(write=False)
            object.__setattr__(self, "velocities", V)
        if len(X) > 1 and np.sqrt(_sq_distances(X)[~np.eye(len(X), dtype=bool)].min()) <= MIN_SEPARATION:
            raise ValueError("coincident particles")

    @classmethod
    def _unchecked(cls, positions, velocities=None) -> "ParticleEnsemble":
        # stepping already rejects coincident pairs while computing forces
        e = object.__new__(cls)
        object.__setattr__(e, "positions", positions)
        object.__setattr__(e, "velocities", velocities)
        return e

    @property
    def M(self) -> int:
        return self.positions.shape[0]

    @property
    def N(self) -> int:
        return self.positions.shape[1]

    @classmethod
    def random(cls, M: int, N: int, seed: int, spread: float = 0.5,
               with_velocities: bool = False) -> "ParticleEnsemble":
        """Gaussian cloud; duplicates (if any) are jittered apart."""
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(M, N)) * spread
        while M > 1:
            d2 = _sq_distances(X)
            np.fill_diagonal(d2, np.inf)
            close = np.flatnonzero(d2.min(axis=1) <= MIN_SEPARATION ** 2)
            if len(close) == 0:
                break
            X[close] += 1e-9 * rng.normal(size=(len(close), N))
        V = rng.normal(size=(M, N)) if with_velocities else None
        return cls(X, V)

    def translated(self, shift) -> "ParticleEnsemble":
        return replace(self, positions=self.positions + np.asarray(shift, float))

    def to_rows(self):
        """Rows (id, x_1..x_N[, v_1..v_N]) for CSV export."""
        cols = [self.positions] + ([self.velocities] if self.velocities is not None else [])
        data = np.hstack(cols)
        return [[i, *row] for i, row in enumerate(data)]

    def header(self):
        h = ["id"] + [f"x{k + 1}" for k in range(self.N)]
        if self.velocities is not None:
            h += [f"v{k + 1}" for k in range(self.N)]
        return h


def _sq_distances(X):
    d2 = np.zeros((len(X), len(X)))
    for k in range(X.shape[1]):
        d = X[:, k][:, None] - X[:, k][None, :]
        d2 += d * d
    return d2


def _pair_data(X):
    d2 = _sq_distances(X)
    off = ~np.eye(len(X), dtype=bool)
    if len(X) > 1 and d2[off].min() <= MIN_SEPARATION ** 2:
        raise ValueError("coincident particles")
    np.fill_diagonal(d2, 1.0)
    return d2, off


def _forces(X, spec: PotentialSpec):
    """Unscaled -sum_j grad W(x_i - x_j)."""
    M, N = X.shape
    if M < 2:
        return np.zeros_like(X)
    d2, off = _pair_data(X)
    r = np.sqrt(d2)
    coef = r ** (spec.a - 2) - r ** (spec.b - 2)
    coef[~off] = 0.0
    F = np.empty_like(X)
    for k in range(N):
        d = X[:, k][:, None] - X[:, k][None, :]
        F[:, k] = -(coef * d).sum(axis=1)
    return F


def _pair_energies(X, spec):
    d2, off = _pair_data(X)
    W = _power_term(np.sqrt(d2), spec.a) - _power_term(np.sqrt(d2), spec.b)
    W[~off] = 0.0
    return W


def pairwise_forces(e: ParticleEnsemble, spec: PotentialSpec, continuum: bool = False) -> np.ndarray:
    """Force -sum_{j != i} grad W(x_i - x_j) on every particle.

    ``continuum=True`` applies the 1/M weight of the probability-measure scaling.
    """
    F = _forces(e.positions, spec)
    return F / e.M if continuum else F


def discrete_energy(e: ParticleEnsemble, spec: PotentialSpec, continuum: bool = False) -> float:
    """(1/2) sum_{i != j} W(x_i - x_j); with ``continuum`` the pair weight is 1/M^2."""
    if e.M < 2:
        return 0.0
    E = 0.5 * float(_pair_energies(e.positions, spec).sum())
    return E / e.M ** 2 if continuum else E


def step_first_order(e: ParticleEnsemble, spec: PotentialSpec, dt: float,
                     continuum: bool = False) -> ParticleEnsemble:
    """Explicit Euler step of dx_i/dt = force_i."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    F = pairwise_forces(e, spec, continuum)
    return ParticleEnsemble._unchecked(e.positions + dt * F, e.velocities)


def step_second_order(e: ParticleEnsemble, alpha: float, beta: float, spec: PotentialSpec,
                      dt: float, continuum: bool = False) -> ParticleEnsemble:
    """Velocity update with propulsion, friction and pair forces, then positions."""
    if e.velocities is None:
        raise ValueError("second-order step needs velocities")
    if not dt > 0:
        raise ValueError("dt must be positive")
    V = e.velocities
    F = pairwise_forces(e, spec, continuum)
    sp2 = (V * V).sum(axis=1, keepdims=True)
    V = V + dt * (alpha * V - beta * V * sp2 + F)
    return ParticleEnsemble._unchecked(e.positions + dt * V, V)


def flock_speed_deviation(e: ParticleEnsemble, alpha: float, beta: float) -> float:
    if e.velocities is None:
        raise ValueError("ensemble has no velocities")
    speed = np.sqrt((e.velocities ** 2).sum(axis=1))
    return float(np.max(np.abs(speed - np.sqrt(alpha / beta))))


@dataclass(frozen=True, eq=False)
class EquilibriumReport:
    energy: float
    psi_on_support: np.ndarray
    psi_off_support: np.ndarray
    force_residual: float
    flock_speed_dev: float = float("nan")
    scaled_residual: float = float("nan")
    converged: bool = True
    iterations: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def psi_spread(self) -> float:
        """(max - min) of psi on the particles relative to |2E|."""
        if len(self.psi_on_support) == 0:
            return 0.0
        p = self.psi_on_support
        return float((p.max() - p.min()) / abs(2 * self.energy))

    @property
    def probe_margin(self) -> float:
        """min over probes of psi - 2E; nonnegative for a certified minimizer."""
        if len(self.psi_off_support) == 0:
            return np.inf
        return float(self.psi_off_support.min() - 2 * self.energy)

    def summary(self) -> dict:
        return {"energy": self.energy, "force_residual": self.force_residual,
                "scaled_residual": self.scaled_residual, "psi_spread": self.psi_spread,
                "probe_margin": self.probe_margin, "flock_speed_dev": self.flock_speed_dev,
                "converged": self.converged, "iterations": self.iterations, **self.extra}


def _report(e, spec, converged=True, iterations=0, probes=None):
    F = pairwise_forces(e, spec)
    res = float(np.abs(F).max()) if e.M > 1 else 0.0
    psi = (_pair_energies(e.positions, spec).sum(axis=1) / e.M) if e.M > 1 else np.zeros(e.M)
    psi_off = np.zeros(0)
    if probes is not None:
        psi_off = _probe_potential(e, spec, probes)
    return EquilibriumReport(
        energy=discrete_energy(e, spec, continuum=True),
        psi_on_support=psi, psi_off_support=psi_off,
        force_residual=res, scaled_residual=res / max(e.M, 1),
        converged=converged, iterations=iterations)


def _probe_potential(e, spec, probes):
    P = np.atleast_2d(np.asarray(probes, float))
    if P.shape[1] != e.N:
        raise ValueError("probe dimension does not match the ensemble")
    d2 = np.zeros((len(P), e.M))
    for k in range(e.N):
        d = P[:, k][:, None] - e.positions[:, k][None, :]
        d2 += d * d
    if d2.min() <= MIN_SEPARATION ** 2:
        raise ValueError("probe coincides with a particle")
    r = np.sqrt(d2)
    W = _power_term(r, spec.a) - _power_term(r, spec.b)
    return W.sum(axis=1) / e.M


def relax_to_equilibrium(e: ParticleEnsemble, spec: PotentialSpec, tol: float = 1e-6,
                         budget: int = 20000, method: str = "lbfgs"):
    """Drive the first-order flow to a force-balanced state.

    ``tol`` bounds the continuum-scaled residual max|sum_j grad W|/M.  The
    default method minimizes the continuum energy with L-BFGS; ``"descent"``
    takes explicit flow steps with dt halved on any energy increase.
    Returns (ensemble, report); ``report.converged`` is False when the budget
    ran out, in which case the best state reached is returned.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    M, N = e.M, e.N
    base = replace(e, velocities=None)
    rep = _report(base, spec)
    if rep.scaled_residual <= tol:
        return base, rep
    if method == "lbfgs":
        def fun(z):
            X = z.reshape(M, N)
            W = _pair_energies(X, spec)
            F = _forces(X, spec)
            return 0.5 * float(W.sum()) / M ** 2, (-F / M ** 2).ravel()

        opt = minimize(fun, base.positions.ravel(), jac=True, method="L-BFGS-B",
                       options=dict(maxiter=budget, gtol=tol / M, ftol=0.0, maxcor=20))
        X = opt.x.reshape(M, N)
        iters = int(opt.nit)
        if np.abs(_forces(X, spec)).max() / M > tol and M * N <= NEWTON_MAX_DOF:
            X, extra = _newton_polish(X, spec, tol)
            iters += extra
        out = ParticleEnsemble(X)
    elif method == "descent":
        out, iters = _descent(base, spec, tol, budget)
    else:
        raise ValueError(f"unknown method {method!r}")
    rep = _report(out, spec, iterations=iters)
    return out, replace(rep, converged=rep.scaled_residual <= tol)


NEWTON_MAX_DOF = 1000


def _hessian(X, spec):
    """Hessian of the unscaled energy (1/2) sum_{i != j} W(x_i - x_j)."""
    M, N = X.shape
    d2, off = _pair_data(X)
    r = np.sqrt(d2)
    c = r ** (spec.a - 2) - r ** (spec.b - 2)
    dc = ((spec.a - 2) * r ** (spec.a - 4) - (spec.b - 2) * r ** (spec.b - 4))
    c[~off] = 0.0
    dc[~off] = 0.0
    D = X[:, None, :] - X[None, :, :]
    blocks = c[:, :, None, None] * np.eye(N) + dc[:, :, None, None] * D[:, :, :, None] * D[:, :, None, :]
    H = -blocks
    for i in range(M):
        H[i, i] = blocks[i].sum(axis=0)
    return H.transpose(0, 2, 1, 3).reshape(M * N, M * N)


def _newton_polish(X, spec, tol, steps=20):
    """Least-squares Newton steps on the force balance (rigid motions are null modes)."""
    M = len(X)
    res = np.abs(_forces(X, spec)).max() / M
    for k in range(1, steps + 1):
        F = _forces(X, spec)
        step = np.linalg.lstsq(_hessian(X, spec), F.ravel(), rcond=1e-10)[0].reshape(X.shape)
        lam = 1.0
        while lam > 1e-4:
            trial = X + lam * step
            try:
                r_new = np.abs(_forces(trial, spec)).max() / M
            except ValueError:
                r_new = np.inf
            if r_new < res:
                break
            lam *= 0.5
        else:
            return X, k
        X, res = trial, r_new
        if res <= tol:
            return X, k
    return X, steps


def _descent(e, spec, tol, budget):
    E = discrete_energy(e, spec, continuum=True)
    F = pairwise_forces(e, spec, continuum=True)
    dt = 0.1
    for it in range(1, budget + 1):
        if np.abs(F).max() <= tol:
            return e, it - 1
        trial = replace(e, positions=e.positions + dt * F)
        try:
            Et = discrete_energy(trial, spec, continuum=True)
        except ValueError:
            Et = np.inf
        if Et > E:
            dt *= 0.5
            if dt < 1e-14:
                break
            continue
        e, E = trial, Et
        F = pairwise_forces(e, spec, continuum=True)
        dt *= 1.2
    return e, budget


def euler_lagrange_check(e: ParticleEnsemble, spec: PotentialSpec, probes) -> EquilibriumReport:
    """psi_i = (1/M) sum_{j != i} W(x_i - x_j) on particles and psi at probe points.

    Compare ``psi_spread`` (should be small) and ``probe_margin`` (should be
    nonnegative up to tolerance) against the continuum energy E.
    """
    return _report(e, spec, probes=probes)


def radial_profile(e: ParticleEnsemble, bins: int, r_max: float | None = None, center=None):
    """Shell histogram of radial density, normalised by shell volume and M.

    Returns (edges, density); ``sum(density * shell_volume) == 1`` when every
    particle falls inside ``r_max``.
    """
    if e.M == 0:
        raise ValueError("empty ensemble")
    if e.N < 2:
        raise ValueError("radial profiles need N >= 2")
    if bins < 4:
        raise ValueError("need at least 4 bins")
    c = e.positions.mean(axis=0) if center is None else np.asarray(center, float)
    r = np.sqrt(((e.positions - c) ** 2).sum(axis=1))
    top = r.max() * (1 + 1e-12) if r_max is None else float(r_max)
    edges = np.linspace(0.0, top, bins + 1)
    counts = np.histogram(r, edges)[0]
    unit_ball = np.pi ** (e.N / 2) / special.gamma(e.N / 2 + 1)
    vol = unit_ball * np.diff(edges ** e.N)
    return edges, counts / (e.M * vol)
