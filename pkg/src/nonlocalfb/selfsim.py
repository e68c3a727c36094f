"""Self-similar profiles of the nonlocal pressure flow.

Covers the scaling exponents, the explicit source-type family
``U = t^-alpha (C1 - k1 |x|^2 t^(-2 alpha/N))_+^(1-s)`` and the stationary
obstacle problem whose coincidence set carries the rescaled density.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import ConvergenceError, FitError
from .fracops import getoor_constant, riesz_kernel_weights, riesz_potential_direct
from .grid import FracOrder, GridField, GridSpec

__all__ = [
    "Exponents",
    "exponents",
    "BarenblattSpec",
    "barenblatt_density",
    "barenblatt_mass",
    "barenblatt_cell_average",
    "mass_to_C1",
    "ComplementaritySolution",
    "solve_stationary_obstacle",
    "obstacle_height_for_mass",
    "pressure_tail_fit",
]


@dataclass(frozen=True)
class Exponents:
    alpha: float
    beta: float
    gamma: float
    N: int
    s: float


def exponents(N: int, s: float) -> Exponents:
    if not 0 < s < 1:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    if int(N) != N or N < 1:
        raise ValueError(f"dimension must be a positive integer, got {N}")
    d = N + 2.0 - 2.0 * s
    beta = 1.0 / d
    return Exponents(alpha=N * beta, beta=beta, gamma=(2.0 - 2.0 * s) / d, N=int(N), s=float(s))


@dataclass(frozen=True)
class BarenblattSpec:
    C1: float
    s: float
    N: int = 1
    c1: float = field(init=False)
    k1: float = field(init=False)

    def __post_init__(self):
        if not self.C1 > 0:
            raise ValueError(f"C1 must be positive, got {self.C1}")
        ex = exponents(self.N, self.s)
        c1 = ex.alpha / getoor_constant(2.0 * (1.0 - self.s), self.N)
        object.__setattr__(self, "c1", c1)
        object.__setattr__(self, "k1", c1 ** (1.0 / (1.0 - self.s)))

    @property
    def exps(self) -> Exponents:
        return exponents(self.N, self.s)

    def support_radius(self, t: float = 1.0) -> float:
        return float(np.sqrt(self.C1 / self.k1) * t ** self.exps.beta)


def barenblatt_density(x, t: float, spec: BarenblattSpec):
    """Explicit source-type density at positions ``x`` (|x| for N > 1)."""
    if not t > 0:
        raise ValueError(f"time must be positive, got {t}")
    al = spec.exps.alpha
    x = np.asarray(x, dtype=float)
    core = spec.C1 - spec.k1 * x * x * t ** (-2.0 * al / spec.N)
    out = t ** -al * np.clip(core, 0.0, None) ** (1.0 - spec.s)
    return float(out) if out.ndim == 0 else out


def barenblatt_mass(spec: BarenblattSpec) -> float:
    """Total mass, independent of t: C1^(1-s) R^N pi^(N/2)/Gamma(N/2) B(N/2, 2-s)."""
    N, s = spec.N, spec.s
    R = np.sqrt(spec.C1 / spec.k1)
    shape = np.pi ** (N / 2) / special.gamma(N / 2) * special.beta(N / 2, 2 - s)
    return float(spec.C1 ** (1 - s) * R ** N * shape)


def mass_to_C1(M: float, s: float, N: int = 1, rtol: float = 1e-13) -> float:
    """Invert the monotone map C1 -> mass by bracketing root search."""
    if not M > 0:
        raise ValueError(f"mass must be positive, got {M}")

    def gap(c):
        return barenblatt_mass(BarenblattSpec(c, s, N)) - M

    lo, hi = 1.0, 1.0
    while gap(lo) > 0:
        lo /= 4.0
    while gap(hi) < 0:
        hi *= 4.0
    return float(brentq(gap, lo, hi, xtol=1e-300, rtol=rtol, maxiter=500))


def barenblatt_cell_average(spec: BarenblattSpec, grid: GridSpec, t: float = 1.0) -> GridField:
    """Average of the explicit N=1 density over each cell [x_i - h/2, x_i + h/2]."""
    if spec.N != 1:
        raise ValueError("cell averages are defined for N = 1 only")
    h = grid.spacing
    R = spec.support_radius(t)
    out = np.zeros(grid.points)
    for i, xi in enumerate(grid.x):
        lo, hi = max(xi - h / 2, -R), min(xi + h / 2, R)
        if hi > lo:
            out[i] = quad(lambda y: barenblatt_density(y, t, spec), lo, hi, limit=200)[0] / h
    return GridField(grid, out)


# ---------------------------------------------------------------- obstacle


@dataclass(frozen=True, eq=False)
class ComplementaritySolution:
    pressure: GridField
    density: GridField
    contact_radius: float
    obstacle_height: float
    s: float
    residual: float = 0.0
    iterations: int = 0
    gauge_index: int | None = None

    @property
    def obstacle(self) -> np.ndarray:
        a = exponents(1, self.s).beta / 2.0
        x = self.pressure.x
        return self.obstacle_height - a * x * x

    @property
    def mass(self) -> float:
        return self.density.mass


def _lcp_active_set(G, f, max_iter):
    """Primal-dual active set for V >= 0, w = G V - f >= 0, V w = 0."""
    m = len(f)
    S = np.ones(m, bool)
    for it in range(1, max_iter + 1):
        V = np.zeros(m)
        if S.any():
            V[S] = np.linalg.solve(G[np.ix_(S, S)], f[S])
        w = G @ V - f
        S_new = (V - w) > 0
        if np.array_equal(S_new, S):
            return V, it
        S = S_new
    raise ConvergenceError("active set did not settle", payload=V)


def _lcp_psor(G, f, max_iter, omega=1.5, tol=1e-12):
    m = len(f)
    V = np.zeros(m)
    diag = np.diag(G).copy()
    for it in range(1, max_iter + 1):
        change = 0.0
        for i in range(m):
            new = max(0.0, V[i] - omega * (G[i] @ V - f[i]) / diag[i])
            change = max(change, abs(new - V[i]))
            V[i] = new
        if change < tol:
            return V, it
    raise ConvergenceError("projected SOR did not converge", residual=change, payload=V)


def solve_stationary_obstacle(C: float, s: float, grid: GridSpec, method: str = "active-set",
                              max_iter: int | None = None, tol: float = 1e-8
                              ) -> ComplementaritySolution:
    """Solve P >= f, V >= 0, (P - f) V = 0 with P the Riesz potential of V.

    The unknown is the cell density V, restricted to cells where the obstacle
    ``f = C - (beta/2) y^2`` is positive (V vanishes wherever f < 0 since the
    pressure is positive there).  For s < 1/2 the whole-space kernel decays and
    fixes the additive constant; for s >= 1/2 the pressure is normalised to
    vanish at the left end of the grid.
    """
    order = FracOrder(s)
    if s >= 1:
        raise ValueError("the obstacle problem needs s < 1")
    n, x = grid.points, grid.x
    zero = GridField(grid, np.zeros(n))
    if C <= 0:
        return ComplementaritySolution(zero, zero, 0.0, float(C), s)
    a = exponents(1, s).beta / 2.0
    f = C - a * x * x
    idx = np.flatnonzero(f > 0)
    if len(idx) == 0:
        raise ValueError("obstacle height too small for the grid spacing")
    if idx[0] == 0:
        raise ValueError("contact set reaches the domain end; enlarge the grid")
    g = riesz_kernel_weights(grid, s)
    G = g[(idx[:, None] - idx[None, :]) + n - 1]
    gauge = None
    if s >= 0.5:
        gauge = 0
        G = G - g[(gauge - idx) + n - 1][None, :]
    if method == "active-set":
        V, iters = _lcp_active_set(G, f[idx], max_iter or 200)
    elif method == "psor":
        V, iters = _lcp_psor(G, f[idx], max_iter or 20000)
    else:
        raise ValueError(f"unknown method {method!r}")

    Vf = np.zeros(n)
    Vf[idx] = np.clip(V, 0.0, None)
    P = riesz_potential_direct(Vf, order, grid)
    if gauge is not None:
        P = P - P[gauge]
    gap = P - f
    # the product is only meaningful where V lives; elsewhere V = 0 exactly
    resid = max(float(np.max(np.clip(-gap[idx], 0, None))),
                float(np.max(np.abs(gap * Vf))),
                float(np.max(np.clip(-V, 0, None), initial=0.0)))
    if resid > tol * max(1.0, float(np.max(np.abs(f[idx])))):
        raise ConvergenceError(f"complementarity residual {resid:.3g} above {tol:.1g}",
                               residual=resid)
    pos = np.flatnonzero(Vf > 0)
    R = float(np.max(np.abs(x[pos])) + grid.spacing / 2) if len(pos) else 0.0
    return ComplementaritySolution(GridField(grid, P), GridField(grid, Vf), R, float(C), s,
                                   residual=resid, iterations=iters, gauge_index=gauge)


def obstacle_height_for_mass(M: float, s: float, grid: GridSpec, **kw) -> ComplementaritySolution:
    """Obstacle solution whose density has total mass ``M``."""
    if not M > 0:
        raise ValueError(f"mass must be positive, got {M}")

    def gap(C):
        return solve_stationary_obstacle(C, s, grid, **kw).mass - M

    h = grid.spacing
    lo = exponents(1, s).beta / 2.0 * (2 * h) ** 2
    hi = 0.5
    while gap(hi) < 0:
        hi *= 2.0
    C = brentq(gap, lo, hi, xtol=1e-14, rtol=1e-13)
    return solve_stationary_obstacle(C, s, grid, **kw)


def pressure_tail_fit(sol: ComplementaritySolution, window=(0.3, 0.95)) -> float:
    """Decay exponent p of P ~ |y|^(-p) outside the contact set (positive convention).

    The window is a fraction of the half width, applied on both sides.  Only
    meaningful when the pressure decays, i.e. s < 1/2.
    """
    grid = sol.pressure.grid
    L = grid.half_width
    if sol.s >= 0.5:
        raise FitError("pressure does not decay for s >= 1/2 in one dimension")
    if not sol.contact_radius < 0.3 * L:
        raise FitError(f"contact radius {sol.contact_radius:.3g} exceeds 0.3 L")
    x, P = grid.x, sol.pressure.values
    r = np.abs(x)
    sel = (r >= window[0] * L) & (r <= window[1] * L) & (r > 2 * sol.contact_radius)
    if sel.sum() < 8 or np.any(P[sel] <= 0):
        raise FitError("insufficient tail window")
    slope = np.polyfit(np.log(r[sel]), np.log(P[sel]), 1)[0]
    return float(-slope)


def edge_exponent(sol: ComplementaritySolution, cells: int = 12) -> float:
    """Log-log slope of V against distance to the contact edge, right side.

    A qualitative regularity diagnostic (about 1 - s for the explicit
    profile), fitted on the last ``cells`` occupied cells.
    """
    V = sol.density.values
    idx = np.flatnonzero(V > 0)
    if len(idx) < cells + 2:
        raise FitError("contact set too small for an edge fit")
    g = sol.density.grid
    edge = g.x[idx[-1]] + g.spacing / 2
    k = idx[-cells:]
    return float(np.polyfit(np.log(edge - g.x[k]), np.log(V[k]), 1)[0])
