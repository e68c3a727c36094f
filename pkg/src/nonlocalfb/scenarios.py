"""Reproducible experiments: each scenario writes CSV tables and a list of checks.

A check is a row ``(metric, value, reference, bound, comparison, passed)``;
``comparison`` is one of ``le`` (value <= bound), ``ge`` (value >= bound) or
``rel`` (|value - reference| <= bound |reference|), so the verdict can be
recomputed from ``summary.csv`` alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FitError
from .fracops import frac_laplacian_spectral, getoor_constant
from .grid import FracOrder, GridField, GridSpec
from .io import read_csv, write_columns, write_csv, write_json
from .linheat import fit_poisson_kernel, heat_kernel, kernel_profile, tail_exponent
from .porousflow import (EvolutionState, admissible_dt, finite_propagation_check,
                         model1_admissible_dt, run, smoothing_exponent_fit, step_model1,
                         step_model2, support_bounds, support_growth_exponent)
from .selfsim import (BarenblattSpec, barenblatt_cell_average, barenblatt_density, edge_exponent,
                      exponents, mass_to_C1, obstacle_height_for_mass, pressure_tail_fit)
from .swarm import (ParticleEnsemble, PotentialSpec, euler_lagrange_check,
                    flock_speed_deviation, pairwise_forces, radial_profile,
                    discrete_energy, relax_to_equilibrium, step_second_order)


@dataclass
class Check:
    metric: str
    value: float
    bound: float
    comparison: str = "le"
    reference: float = float("nan")

    @property
    def passed(self) -> bool:
        v = self.value
        if v is None or (isinstance(v, float) and math.isnan(v)):
            return False
        if self.comparison == "le":
            return v <= self.bound
        if self.comparison == "ge":
            return v >= self.bound
        if self.comparison == "rel":
            return abs(v - self.reference) <= self.bound * abs(self.reference)
        raise ValueError(f"unknown comparison {self.comparison}")

    def row(self):
        return [self.metric, float(self.value), float(self.reference), float(self.bound),
                self.comparison, self.passed]


@dataclass
class ScenarioResult:
    checks: list = field(default_factory=list)
    files: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


SUMMARY_HEADER = ["metric", "value", "reference", "bound", "comparison", "passed"]


def _grid(p) -> GridSpec:
    return GridSpec(float(p["L"]), int(p["points"]))


def _compact_bump(x):
    # C-infinity bump supported on |x| < 1, peak 0.5
    inside = np.abs(x) < 1
    out = np.zeros_like(x)
    out[inside] = 0.5 * np.exp(1.0 - 1.0 / (1.0 - x[inside] ** 2))
    return out


# ---------------------------------------------------------------- operators


def getoor(p, out: Path) -> ScenarioResult:
    g = _grid(p)
    res = ScenarioResult()
    rows = []
    for sigma in p["sigma"]:
        x = g.x
        f = GridField(g, np.clip(1 - x * x, 0, None) ** (sigma / 2))
        v = frac_laplacian_spectral(f, FracOrder.from_sigma(sigma), pad=p["pad"]).values
        w = np.abs(x) <= p["window"]
        flat = float(v[w].std() / v[w].mean())
        K = getoor_constant(sigma, 1)
        rows.append([sigma, float(v[w].mean()), K, flat])
        res.files.append(write_columns(out / f"getoor_sigma{sigma:g}.csv",
                                       {"y": x[w], "value": v[w]}))
        res.checks.append(Check(f"flatness_sigma{sigma:g}", flat, p["flat_tol"]))
        res.checks.append(Check(f"window_mean_sigma{sigma:g}", float(v[w].mean()), p["rel_tol"],
                                "rel", K))
    res.files.append(write_csv(out / "getoor.csv",
                               ["sigma", "spectral_mean", "quadrature_constant", "flatness"], rows))
    return res


def heat_kernel_scenario(p, out: Path) -> ScenarioResult:
    g = _grid(p)
    o = FracOrder(p["s"])
    res = ScenarioResult()
    k = heat_kernel(o, p["t"], g, pad=p["pad"])
    mass = heat_kernel(o, p["t"], g).mass
    res.checks.append(Check("mass_error", abs(mass - 1.0), 1e-8))
    x = g.x
    cols = {"x": x, "kernel": k.values}
    if o.s == 0.5:
        sel = np.abs(x) <= g.half_width / 2
        C, a, resid = fit_poisson_kernel(x[sel], k.values[sel])
        res.info.update(C=C, a=a)
        res.checks.append(Check("poisson_fit_residual", resid, p["fit_tol"]))
        cols["fit"] = C / (a * a + x * x)
        res.files.append(write_csv(out / "poisson_fit.csv", ["C", "a", "residual"], [[C, a, resid]]))
    res.files.append(write_columns(out / "kernel.csv", cols))
    return res


def tail_fit(p, out: Path) -> ScenarioResult:
    g = _grid(p)
    res = ScenarioResult()
    rows = []
    for s in p["s"]:
        o = FracOrder(s)
        t = p["t"] if p["t"] > 0 else g.spacing ** o.sigma
        prof = kernel_profile(o, t, g, method=p["method"], pad=p["pad"])
        expo = 1 + 2 * s
        try:
            slope = tail_exponent(prof, half_width=g.half_width)
        except FitError as err:
            res.info[f"fit_error_s{s:g}"] = str(err)
            slope = float("nan")
        rows.append([s, t, slope, expo])
        res.files.append(write_columns(out / f"profile_s{s:g}.csv",
                                       {"r": prof.radii, "F": prof.values}))
        res.checks.append(Check(f"tail_exponent_s{s:g}", slope, p["tol"], "rel", expo))
    res.files.append(write_csv(out / "tail_fit.csv", ["s", "t", "fitted", "theory"], rows))
    return res


# ---------------------------------------------------------------- Model II


SAFE = 0.8  # 0.8 * (CFL bound 0.5 h/|v|) = 0.4 h/|v|


def evolve(p, out: Path) -> ScenarioResult:
    g = _grid(p)
    o = FracOrder(p["s"])
    x = g.x
    u0 = GridField(g, np.clip(1 - (x / p["width"]) ** 2, 0, None))
    st = EvolutionState.initial(u0, o)
    m0 = st.mass
    rows = [[0, st.time, st.mass, float(u0.values.max()), float(u0.values.min())]]
    low = 0.0
    for k in range(1, p["steps"] + 1):
        st = step_model2(st, SAFE * admissible_dt(st))
        low = min(low, float(st.density.values.min()))
        rows.append([k, st.time, st.mass, float(st.density.values.max()),
                     float(st.density.values.min())])
    res = ScenarioResult()
    res.files.append(write_csv(out / "evolve.csv", ["step", "time", "mass", "max_u", "min_u"], rows))
    res.files.append(write_columns(out / "final_field.csv", {"x": x, "u": st.density.values}))
    res.checks.append(Check("relative_mass_drift", abs(st.mass - m0) / m0, 1e-12))
    res.checks.append(Check("min_density", low, -1e-13, "ge"))
    return res


def barenblatt_track(p, out: Path) -> ScenarioResult:
    g = _grid(p)
    s = p["s"]
    o = FracOrder(s)
    spec = BarenblattSpec(p["C1"], s)
    t0, t1 = p["t0"], p["t1"]
    u0 = barenblatt_cell_average(spec, g, t0)
    times = list(np.linspace(t0, t1, p["snapshots"] + 1)[1:])
    traj = run(u0, o, T=t1 - t0, t0=t0, snap_times=times)
    rows = []
    for st in traj.snapshots:
        exact = barenblatt_cell_average(spec, g, st.time).values
        rows.append([st.time, float(np.abs(st.density.values - exact).sum() * g.spacing)])
    res = ScenarioResult()
    res.files.append(write_csv(out / "l1_error.csv", ["time", "l1_error"], rows))
    res.files.append(traj.to_csv(out / "trajectory.csv"))
    res.checks.append(Check("max_l1_error", max(r[1] for r in rows), p["tol"]))
    return res


def rescaled(p, out: Path) -> ScenarioResult:
    g = _grid(p)
    s = p["s"]
    o = FracOrder(s)
    x, h = g.x, g.spacing
    target = obstacle_height_for_mass(p["mass"], s, g).density.values
    c = p["offset"]
    u = np.where(np.abs(x - c) < 0.5, 1 + np.sin(3 * x), 0.0) * np.exp(-x * x)
    u *= p["mass"] / (u.sum() * h)
    dist = [float(np.abs(u - target).sum() * h)]
    traj = run(GridField(g, u), o, rescaled=True, T=p["tau"],
               callback=lambda st: dist.append(float(np.abs(st.density.values - target).sum() * h)))
    tab = traj.table()
    tab["l1_to_profile"] = dist
    res = ScenarioResult()
    res.files.append(write_columns(out / "rescaled.csv", tab))
    res.files.append(write_columns(out / "final_field.csv",
                                   {"y": x, "v": traj.final.density.values, "profile": target}))
    d = np.array(dist)
    E = np.array(traj.entropy)
    res.checks.append(Check("max_l1_increase", float(np.diff(d).max()), p["step_tol"]))
    res.checks.append(Check("final_l1", float(d[-1]), p["tol"]))
    res.checks.append(Check("max_entropy_increase", float(np.diff(E).max()), p["step_tol"]))
    return res


def propagation(p, out: Path) -> ScenarioResult:
    g = _grid(p)
    s = p["s"]
    o = FracOrder(s)
    x = g.x
    u0 = GridField(g, _compact_bump(x))
    times = list(np.linspace(0, p["T"], p["snapshots"] + 1)[1:])
    traj = run(u0, o, T=p["T"], snap_times=times)
    rep = finite_propagation_check(traj, p["A"], p["a"])
    res = ScenarioResult()
    res.files.append(write_columns(out / "envelope.csv", {"time": rep.times, "C": rep.C_of_t}))
    res.files.append(traj.to_csv(out / "trajectory.csv"))
    res.checks.append(Check("envelope_C", rep.C, p["C_max"]))
    # support growth on the self-similar family
    spec = BarenblattSpec(mass_to_C1(p["growth_mass"], s), s)
    grow_times = list(np.geomspace(1.1, 1 + p["growth_T"], 30))
    tr2 = run(barenblatt_cell_average(spec, g, 1.0), o, T=p["growth_T"], t0=1.0,
              snap_times=grow_times)
    rate = support_growth_exponent(tr2)
    res.files.append(write_columns(out / "support_growth.csv",
                                   {"time": tr2.times, "left": tr2.support_left,
                                    "right": tr2.support_right}))
    res.checks.append(Check("support_growth_exponent", rate, 0.10, "rel", exponents(1, s).beta))
    return res


def smoothing_fit(p, out: Path) -> ScenarioResult:
    g = _grid(p)
    s = p["s"]
    o = FracOrder(s)
    x, h = g.x, g.spacing
    ex = exponents(1, s)
    R1 = BarenblattSpec(mass_to_C1(1.0, s), s).support_radius(1.0)
    T = (0.6 * g.half_width / R1) ** (1 / ex.beta)
    times = list(np.geomspace(T / 10 ** 2.5, T, p["snapshots"]))
    w0 = p["width"]

    def start(mass):
        u = np.clip(1 - (x / w0) ** 2, 0, None) * (1 + 0.3 * x / w0)
        return GridField(g, u * mass / (u.sum() * h))

    tr1 = run(start(1.0), o, T=T, snap_times=times)
    tr2 = run(start(2.0), o, T=T, snap_times=times) if p["doubling"] else None
    fit = smoothing_exponent_fit(tr1, tr2, decades=p["decades"])
    res = ScenarioResult()
    cols = {"time": tr1.times, "max_u": tr1.max_u}
    if tr2 is not None:
        cols["max_u_doubled"] = tr2.max_u
    res.files.append(write_columns(out / "smoothing.csv", cols))
    res.files.append(write_csv(out / "fit.csv", ["s", "alpha_hat", "alpha", "ratio", "ratio_theory"],
                               [[s, fit.alpha_hat, ex.alpha,
                                 fit.ratio if fit.ratio is not None else float("nan"),
                                 2 ** ex.gamma]]))
    res.checks.append(Check("alpha_hat", fit.alpha_hat, p["tol"], "rel", ex.alpha))
    if fit.ratio is not None:
        res.checks.append(Check("mass_doubling_ratio", fit.ratio, p["ratio_tol"], "rel", 2 ** ex.gamma))
    res.info["alpha_theory"] = ex.alpha
    return res


def model1_contrast(p, out: Path) -> ScenarioResult:
    g = _grid(p)
    x = g.x
    u0 = GridField(g, _compact_bump(x))
    o = FracOrder(p["s"])
    st1 = EvolutionState.initial(u0, o)
    dt = model1_admissible_dt(st1, p["m"])
    st1 = step_model1(st1, p["m"], dt)
    # Model II from the same data over the same time span
    traj = run(u0, o, T=dt * p["steps"])
    u2 = traj.final.density.values
    lo, hi = support_bounds(traj.final.density, rel=0.0)
    res = ScenarioResult()
    res.files.append(write_columns(out / "contrast.csv",
                                   {"x": x, "model1": st1.density.values, "model2": u2}))
    res.checks.append(Check("model1_min", float(st1.density.values.min()), 0.0, "ge"))
    res.checks.append(Check("model1_positive_fraction", float(np.mean(st1.density.values > 0)),
                            1.0, "ge"))
    res.checks.append(Check("model2_support_halfwidth", max(-lo, hi), 0.5 * g.half_width))
    res.checks.append(Check("model1_mass_change", abs(st1.mass - u0.mass), 1e-10))
    return res


def obstacle(p, out: Path) -> ScenarioResult:
    g = _grid(p)
    s = p["s"]
    sol = obstacle_height_for_mass(p["mass"], s, g, method=p["method"])
    spec = BarenblattSpec(mass_to_C1(sol.mass, s), s)
    exact = barenblatt_cell_average(spec, g, 1.0).values
    V, P = sol.density.values, sol.pressure.values
    res = ScenarioResult()
    res.files.append(write_columns(out / "obstacle.csv",
                                   {"y": g.x, "pressure": P, "density": V, "explicit": exact,
                                    "obstacle": sol.obstacle}))
    res.files.append(write_csv(out / "solution.csv",
                               ["C", "mass", "contact_radius", "explicit_radius", "residual", "iterations"],
                               [[sol.obstacle_height, sol.mass, sol.contact_radius,
                                 spec.support_radius(1.0), sol.residual, sol.iterations]]))
    res.checks.append(Check("density_linf", float(np.abs(V - exact).max()), p["tol"]))
    res.checks.append(Check("complementarity_residual", sol.residual, 1e-8))
    keep = np.ones(g.points, bool)
    if sol.gauge_index is not None:
        keep[sol.gauge_index] = False
    res.checks.append(Check("pressure_min", float(P[keep].min()), 0.0, "ge"))
    res.checks.append(Check("density_at_ends", float(max(V[0], V[-1])), 0.0))
    res.checks.append(Check("contact_radius", sol.contact_radius, 0.5 * g.half_width))
    try:
        res.info["edge_exponent"] = edge_exponent(sol)
    except FitError:
        pass
    if s < 0.5:
        res.checks.append(Check("pressure_tail_exponent", pressure_tail_fit(sol), p["tail_tol"],
                                "rel", 1 - 2 * s))
    return res


# ---------------------------------------------------------------- swarm


def _spec(p) -> PotentialSpec:
    return PotentialSpec(p["a"], p["b"], p["N"])


def swarm_flock(p, out: Path) -> ScenarioResult:
    spec = _spec(p)
    M, N = p["M"], p["N"]
    rng = np.random.default_rng(p["seed"])
    e = ParticleEnsemble.random(M, N, seed=int(rng.integers(2 ** 31)))
    e, _ = relax_to_equilibrium(e, spec, tol=p["relax_tol"])
    heading = rng.normal(size=N)
    heading *= np.sqrt(p["alpha"] / p["beta"]) / np.linalg.norm(heading)
    V = heading + p["noise"] * rng.normal(size=(M, N))
    e = ParticleEnsemble(e.positions, V)
    dt = p["dt"]
    steps = int(round(p["T"] / dt))
    every = max(1, int(round(p["record_every"] / dt)))
    hist = []
    for k in range(steps + 1):
        if k % every == 0 or k == steps:
            hist.append([k * dt, flock_speed_deviation(e, p["alpha"], p["beta"]),
                         float(np.abs(pairwise_forces(e, spec)).max())])
        if k < steps:
            e = step_second_order(e, p["alpha"], p["beta"], spec, dt)
    dev, resid = hist[-1][1], hist[-1][2]
    res = ScenarioResult()
    res.files.append(write_csv(out / "flock_history.csv", ["time", "speed_deviation", "force_residual"], hist))
    res.files.append(write_csv(out / "ensemble.csv", e.header(), e.to_rows()))
    res.files.append(write_json(out / "report.json", {"flock_speed_dev": dev, "force_residual": resid,
                                                     "seed": p["seed"], "spec": vars(spec)}))
    res.checks.append(Check("speed_deviation", dev, p["speed_tol"]))
    res.checks.append(Check("force_residual", resid, p["force_tol"]))
    return res


def _default_bins(M: int, r_flat: float) -> int:
    # shells at least ~2.5 mean interparticle spacings wide
    return max(4, int(r_flat / (2.5 * math.sqrt(math.pi / M))))


def disk_minimizer(p, out: Path) -> ScenarioResult:
    spec = _spec(p)
    e0 = ParticleEnsemble.random(p["M"], p["N"], seed=p["seed"])
    e, rep = relax_to_equilibrium(e0, spec, tol=p["tol"], budget=p["budget"])
    c = e.positions.mean(axis=0)
    radius = float(np.sqrt(((e.positions - c) ** 2).sum(axis=1)).max())
    bins = p["bins"] or _default_bins(e.M, p["r_flat"])
    edges, dens = radial_profile(e, bins, r_max=p["r_flat"], center=c)
    ref = p["density"]
    dev = float(np.abs(dens / ref - 1).max())
    res = ScenarioResult()
    res.files.append(write_csv(out / "ensemble.csv", e.header(), e.to_rows()))
    res.files.append(write_columns(out / "radial_profile.csv",
                                   {"r_inner": edges[:-1], "r_outer": edges[1:], "density": dens}))
    res.files.append(write_json(out / "report.json", {**rep.summary(), "seed": p["seed"],
                                                     "spec": vars(spec), "support_radius": radius}))
    res.checks.append(Check("support_radius", radius, p["radius_tol"], "rel", p["radius"]))
    res.checks.append(Check("radial_density_deviation", dev, p["density_tol"]))
    res.checks.append(Check("energy_decrease", rep.energy - discrete_energy(e0, spec, True), 0.0))
    res.checks.append(Check("scaled_force_residual", rep.scaled_residual, p["tol"]))
    return res


def el_check(p, out: Path) -> ScenarioResult:
    spec = _spec(p)
    if p["ensemble"]:
        tab = read_csv(p["ensemble"])
        X = np.column_stack([tab[f"x{k + 1}"] for k in range(p["N"])])
        e = ParticleEnsemble(X)
    else:
        e, _ = relax_to_equilibrium(ParticleEnsemble.random(p["M"], p["N"], seed=p["seed"]),
                                    spec, tol=p["tol"], budget=p["budget"])
    c = e.positions.mean(axis=0)
    k = p["probes"]
    if e.N != 2:
        raise ValueError("probe circle is defined for N = 2")
    th = 2 * np.pi * np.arange(k) / k
    probes = c + p["probe_radius"] * np.column_stack([np.cos(th), np.sin(th)])
    rep = euler_lagrange_check(e, spec, probes)
    res = ScenarioResult()
    res.files.append(write_columns(out / "psi_particles.csv",
                                   {"id": np.arange(e.M), "psi": rep.psi_on_support}))
    res.files.append(write_columns(out / "psi_probes.csv",
                                   {"p1": probes[:, 0], "p2": probes[:, 1], "psi": rep.psi_off_support}))
    res.files.append(write_json(out / "report.json", {**rep.summary(), "seed": p["seed"],
                                                     "spec": vars(spec)}))
    res.checks.append(Check("psi_spread", rep.psi_spread, p["spread_tol"]))
    res.checks.append(Check("probe_margin", rep.probe_margin, -p["margin_tol"], "ge"))
    return res


# ---------------------------------------------------------------- registry

_SWARM = dict(N=2, a=2.0, b=0.0, seed=0)

DEFAULTS = {
    "getoor": (getoor, dict(sigma=[0.5, 1.0, 1.5], L=8.0, points=4096, pad=16, window=0.8,
                            flat_tol=1e-2, rel_tol=1e-3)),
    "heat-kernel": (heat_kernel_scenario, dict(s=0.5, t=1.0, L=8.0, points=4096, pad=1024,
                                               fit_tol=1e-6)),
    "tail-fit": (tail_fit, dict(s=[0.25, 0.75], t=0.0, L=8.0, points=4096, method="integral",
                                pad=1, tol=0.05)),
    "evolve": (evolve, dict(s=0.5, L=8.0, points=2048, width=1.0, steps=1000)),
    "barenblatt-track": (barenblatt_track, dict(s=0.5, C1=1.0, L=8.0, points=2048, t0=1.0,
                                                t1=2.0, snapshots=10, tol=0.02)),
    "rescaled": (rescaled, dict(s=0.5, mass=1.0, L=8.0, points=2048, tau=10.0, offset=0.7,
                                tol=0.05, step_tol=1e-8)),
    "propagation": (propagation, dict(s=0.25, L=8.0, points=2048, T=1.0, snapshots=20, A=1.0,
                                      a=1.0, C_max=1e6, growth_mass=0.3, growth_T=29.0)),
    "smoothing-fit": (smoothing_fit, dict(s=0.5, L=8.0, points=2048, width=0.2, snapshots=60,
                                          decades=1.5, doubling=1, tol=0.07, ratio_tol=0.10)),
    "model1-contrast": (model1_contrast, dict(s=0.5, m=2.0, L=8.0, points=2048,
                                              steps=1)),
    "obstacle": (obstacle, dict(s=0.5, mass=1.0, L=8.0, points=2048, method="active-set",
                                tol=2e-2, tail_tol=0.10)),
    "swarm-flock": (swarm_flock, dict(_SWARM, seed=1, M=100, alpha=1.0, beta=1.0, dt=0.002,
                                      T=200.0, noise=0.1, relax_tol=1e-12, record_every=10.0,
                                      speed_tol=1e-3, force_tol=1e-6)),
    "disk-minimizer": (disk_minimizer, dict(_SWARM, M=1000, tol=1e-6, budget=20000, bins=0,
                                            r_flat=0.9, density=1 / math.pi, radius=1.0,
                                            radius_tol=0.05, density_tol=0.10)),
    "el-check": (el_check, dict(_SWARM, M=1000, tol=1e-6, budget=20000, ensemble="",
                                probes=64, probe_radius=1.5, spread_tol=0.01, margin_tol=1e-3)),
}

STOCHASTIC = {"swarm-flock", "disk-minimizer", "el-check"}


def scenario_names():
    return list(DEFAULTS)
