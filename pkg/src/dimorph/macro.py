"""Deterministic time integration of the trait-resolved population systems.

Covers the raw two-sex system (male and female trait measures with
mating, inheritance, natural death and competition), and the normalized
probability-measure system driven by a constant or time-varying sex
ratio. Explicit Euler and classic RK4 steppers with positivity control.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import stability
from .errors import ExtinctionDetected, StepRejected
from .kernels import InheritanceKernel, birth_weights
from .measures import GridMeasure, TraitGrid, gaussian_measure, normalize
from .totals import (Classification, RateSet, classify, fit_exponential_tail,
                     stationary_point)

__all__ = [
    "MacroState",
    "SolverConfig",
    "MacroTrajectory",
    "NormalizedTrajectory",
    "CoupledRunResult",
    "rhs_general",
    "integrate",
    "integrate_normalized",
    "coupled_full_run",
    "suggest_dt",
]

# Weights this far below zero (relative to the largest weight) mean the
# step genuinely overshot; smaller excursions are rounding dust.
_NEG_TOL = 1e-12


@dataclass(frozen=True)
class MacroState:
    """Male and female trait measures at one time point."""

    m: GridMeasure
    f: GridMeasure
    t: float = 0.0

    def __post_init__(self) -> None:
        if self.m.grid != self.f.grid:
            raise ValueError("male and female measures must share one grid")

    @property
    def masses(self) -> tuple[float, float]:
        return self.m.mass, self.f.mass


@dataclass(frozen=True)
class SolverConfig:
    """Fixed-step explicit solver settings.

    positivity: "clip" zeroes negative weights, "clip-renormalize" also
    restores the pre-clip mass (meant for probability systems), "reject"
    retries the step with halved sub-steps up to 20 times.
    """

    dt: float
    t_end: float
    scheme: str = "rk4"
    positivity: str = "clip"
    sample_stride: int = 1

    def __post_init__(self) -> None:
        if self.dt <= 0 or self.t_end <= 0:
            raise ValueError("dt and t_end must be positive")
        if self.scheme not in ("rk4", "euler"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.positivity not in ("clip", "clip-renormalize", "reject"):
            raise ValueError(f"unknown positivity mode {self.positivity!r}")
        if self.sample_stride < 1:
            raise ValueError("sample_stride must be >= 1")


@dataclass
class SolverDiagnostics:
    """Positivity interventions and degenerate-denominator bookkeeping."""

    clipped_mass: float = 0.0
    min_weight_seen: float = 0.0
    empty_denominator_steps: int = 0
    max_mass_drift: float = 0.0
    dt_bound: float = float("inf")


@dataclass(frozen=True)
class MacroTrajectory:
    states: Sequence[MacroState]
    diagnostics: SolverDiagnostics

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def masses(self) -> np.ndarray:
        """Array of (M, F) per snapshot."""
        return np.array([[s.m.mass, s.f.mass] for s in self.states])

    def state_at(self, t: float) -> MacroState:
        times = self.times
        i = int(np.argmin(np.abs(times - t)))
        if abs(times[i] - t) > 1e-9 + 1e-9 * abs(t):
            raise KeyError(f"no snapshot at t = {t}; nearest is {times[i]}")
        return self.states[i]


@dataclass(frozen=True)
class NormalizedTrajectory:
    times: np.ndarray
    mus: Sequence[GridMeasure]
    nus: Sequence[GridMeasure]
    diagnostics: SolverDiagnostics


# ---------------------------------------------------------------------------
# Rate tables on a grid


def _as_vector(entry, centers: np.ndarray) -> np.ndarray:
    if callable(entry):
        v = np.asarray(entry(centers), dtype=float)
        if v.shape != centers.shape:
            raise ValueError("trait-rate functions must map the center vector to itself")
        return v
    return np.full(centers.shape, float(entry))


class _GridRates:
    """Demographic rates precompiled onto a grid.

    Constant competition kernels stay scalars so the death term is a
    plain axpy; trait-dependent kernels become dense matrices.
    """

    def __init__(self, rates: RateSet, grid: TraitGrid):
        c = grid.centers
        self.pf = _as_vector(rates.p_f, c)
        self.pm = _as_vector(rates.p_m, c)
        self.df = _as_vector(rates.D_f, c)
        self.dm = _as_vector(rates.D_m, c)
        self.u = {}
        for name in ("U_ff", "U_fm", "U_mf", "U_mm"):
            entry = getattr(rates, name)
            if callable(entry):
                mat = np.asarray(entry(c[:, None], c[None, :]), dtype=float)
                if mat.shape != (grid.n_cells, grid.n_cells):
                    raise ValueError(f"{name} must map center pairs to a full matrix")
                self.u[name] = mat
            else:
                self.u[name] = float(entry)

    def competition(self, name: str, weights: np.ndarray) -> np.ndarray | float:
        u = self.u[name]
        if isinstance(u, float):
            return u * weights.sum()
        return u @ weights


def _birth_and_death(gr: _GridRates, kernel: InheritanceKernel, grid: TraitGrid,
                     mw: np.ndarray, fw: np.ndarray):
    """Shared birth measure (already halved for sex assignment) plus the two
    per-capita death fields; flags when a mating denominator vanished."""
    m_mass = mw.sum()
    f_mass = fw.sum()
    wf = gr.pf * fw
    wm = gr.pm * mw
    fp = wf.sum()
    mp = wm.sum()
    empty = False
    birth = np.zeros(grid.n_cells)
    if m_mass > 0.0 and f_mass > 0.0:
        if fp > 0.0 and mp > 0.0:
            birth = (0.5 * (1.0 / mp + 1.0 / fp)) * birth_weights(kernel, wf, wm, grid)
        elif fp > 0.0:
            # no male carries mating weight; partners are drawn uniformly
            birth = 0.5 * birth_weights(kernel, wf, mw / m_mass, grid)
        elif mp > 0.0:
            birth = 0.5 * birth_weights(kernel, fw / f_mass, wm, grid)
        else:
            empty = True
    else:
        empty = True
    death_m = gr.dm + gr.competition("U_mm", mw) + gr.competition("U_mf", fw)
    death_f = gr.df + gr.competition("U_fm", mw) + gr.competition("U_ff", fw)
    return birth, death_m, death_f, empty


def rhs_general(state: MacroState, rates: RateSet, kernel: InheritanceKernel):
    """Time derivative (dm, df) of the raw two-sex system.

    The birth term is identical in both components; when a mating
    denominator vanishes the dynamics degrade to pure death.
    """
    grid = state.m.grid
    gr = _GridRates(rates, grid)
    birth, death_m, death_f, _ = _birth_and_death(gr, kernel, grid,
                                                  state.m.weights, state.f.weights)
    return birth - death_m * state.m.weights, birth - death_f * state.f.weights


def suggest_dt(state: MacroState, rates: RateSet, safety: float = 0.1) -> float:
    """Explicit-step bound from the largest per-capita rate at the given state."""
    grid = state.m.grid
    gr = _GridRates(rates, grid)
    mw, fw = state.m.weights, state.f.weights
    rate_m = gr.dm + gr.competition("U_mm", mw) + gr.competition("U_mf", fw) + gr.pm
    rate_f = gr.df + gr.competition("U_fm", mw) + gr.competition("U_ff", fw) + gr.pf
    rmax = float(max(np.max(rate_m), np.max(rate_f)))
    return safety / rmax if rmax > 0 else float("inf")


# ---------------------------------------------------------------------------
# Stepping machinery


def _advance(y: np.ndarray, t: float, dt: float, rhs, scheme: str) -> np.ndarray:
    if scheme == "euler":
        return y + dt * rhs(t, y)
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = rhs(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _step_with_positivity(y, t, dt, rhs, cfg: SolverConfig, diag: SolverDiagnostics,
                          n_components: int):
    """One accepted step of size dt, honoring the positivity mode.

    y is the stacked weight matrix (n_components, n_cells).
    """
    if cfg.positivity == "reject":
        scale = max(float(np.abs(y).max()), 1e-300)
        for k in range(21):
            sub = 2**k
            h = dt / sub
            cand = y
            ok = True
            for i in range(sub):
                cand = _advance(cand, t + i * h, h, rhs, cfg.scheme)
                if cand.min() < -_NEG_TOL * scale:
                    ok = False
                    break
            if ok:
                diag.min_weight_seen = min(diag.min_weight_seen, float(cand.min()))
                return np.clip(cand, 0.0, None)
        raise StepRejected(f"positivity not restored after 20 halvings at t = {t}")

    out = _advance(y, t, dt, rhs, cfg.scheme)
    mn = float(out.min())
    diag.min_weight_seen = min(diag.min_weight_seen, mn)
    if mn < 0.0:
        diag.clipped_mass += float(-out[out < 0].sum())
        clipped = np.clip(out, 0.0, None)
        if cfg.positivity == "clip-renormalize":
            for i in range(n_components):
                target = out[i].sum()
                got = clipped[i].sum()
                if got > 0 and target > 0:
                    clipped[i] *= target / got
        out = clipped
    return out


# ---------------------------------------------------------------------------
# Integrators


def integrate(state0: MacroState, rates: RateSet, kernel: InheritanceKernel,
              config: SolverConfig) -> MacroTrajectory:
    """Integrate the raw two-sex system from state0 up to t_end.

    Raises ValueError when dt exceeds the pre-run explicit-step bound.
    """
    grid = state0.m.grid
    gr = _GridRates(rates, grid)
    diag = SolverDiagnostics()
    diag.dt_bound = suggest_dt(state0, rates)
    if config.dt > diag.dt_bound:
        raise ValueError(
            f"dt = {config.dt} exceeds the stability bound {diag.dt_bound:.3e} "
            "from the pre-run rate scan"
        )

    empties = [0]

    def rhs(_t, y):
        birth, death_m, death_f, empty = _birth_and_death(gr, kernel, grid, y[0], y[1])
        if empty:
            empties[0] += 1
        return np.stack([birth - death_m * y[0], birth - death_f * y[1]])

    y = np.stack([state0.m.weights, state0.f.weights])
    t = state0.t
    n_steps = int(round(config.t_end / config.dt))
    states = [MacroState(state0.m, state0.f, t)]
    for i in range(n_steps):
        y = _step_with_positivity(y, t, config.dt, rhs, config, diag, 2)
        t = state0.t + (i + 1) * config.dt
        if (i + 1) % config.sample_stride == 0 or i + 1 == n_steps:
            states.append(MacroState(GridMeasure(grid, y[0]), GridMeasure(grid, y[1]), t))
    diag.empty_denominator_steps = empties[0]
    return MacroTrajectory(states, diag)


def integrate_normalized(mu0: GridMeasure, nu0: GridMeasure,
                         A: float | Callable[[float], float],
                         kernel: InheritanceKernel, config: SolverConfig,
                         positivity: str | None = None) -> NormalizedTrajectory:
    """Integrate the normalized system for probability measures mu, nu.

    mu relaxes toward the birth image at unit rate, nu at rate A (a
    constant or a function of time). Unit masses are preserved by the
    dynamics; the default positivity mode also renormalizes drift away.
    """
    if mu0.grid != nu0.grid:
        raise ValueError("mu0 and nu0 must share one grid")
    for name, m in (("mu0", mu0), ("nu0", nu0)):
        if abs(m.mass - 1.0) > 1e-9:
            raise ValueError(f"{name} must be a probability measure, mass = {m.mass}")
    grid = mu0.grid
    a_of = A if callable(A) else (lambda _t: A)
    a0 = float(a_of(0.0))
    if a0 <= 0:
        raise ValueError(f"sex-ratio constant must be positive, got {a0}")
    cfg = config if positivity is None else SolverConfig(
        config.dt, config.t_end, config.scheme, positivity, config.sample_stride)
    if positivity is None and config.positivity == "clip":
        cfg = SolverConfig(config.dt, config.t_end, config.scheme,
                           "clip-renormalize", config.sample_stride)
    diag = SolverDiagnostics()
    diag.dt_bound = 0.1 / max(1.0, a0)
    if cfg.dt > diag.dt_bound:
        raise ValueError(
            f"dt = {cfg.dt} exceeds the stability bound {diag.dt_bound:.3e}")

    def rhs(t, y):
        p = birth_weights(kernel, y[0], y[1], grid)
        a = float(a_of(t))
        return np.stack([p - y[0], a * (p - y[1])])

    y = np.stack([mu0.weights, nu0.weights])
    t = 0.0
    n_steps = int(round(cfg.t_end / cfg.dt))
    times = [0.0]
    mus = [mu0]
    nus = [nu0]
    for i in range(n_steps):
        y = _step_with_positivity(y, t, cfg.dt, rhs, cfg, diag, 2)
        t = (i + 1) * cfg.dt
        diag.max_mass_drift = max(diag.max_mass_drift,
                                  abs(y[0].sum() - 1.0), abs(y[1].sum() - 1.0))
        if cfg.positivity == "clip-renormalize":
            y[0] /= y[0].sum()
            y[1] /= y[1].sum()
        if (i + 1) % cfg.sample_stride == 0 or i + 1 == n_steps:
            times.append(t)
            mus.append(GridMeasure(grid, y[0]))
            nus.append(GridMeasure(grid, y[1]))
    return NormalizedTrajectory(np.array(times), mus, nus, diag)


@dataclass(frozen=True)
class CoupledRunResult:
    """Raw constant-rate run with its normalized view and limit diagnostics."""

    raw: MacroTrajectory
    times: np.ndarray
    mus: Sequence[GridMeasure]
    nus: Sequence[GridMeasure]
    A_series: np.ndarray
    A_limit: float
    A_fit: tuple[float, float]
    fixed_point: "stability.FixedPointResult"
    report: "stability.ConvergenceReport"


def coupled_full_run(m0: GridMeasure, f0: GridMeasure, rates: RateSet,
                     kernel: InheritanceKernel, config: SolverConfig,
                     fixed_point_tol: float = 1e-8,
                     mass_floor: float = 1e-8) -> CoupledRunResult:
    """Run the raw constant-rate system and compare its normalized trait
    distributions against the common limiting distribution.

    Requires persistence-regime rates. The limiting distribution is the
    birth-map fixed point started at the mass-weighted limit of the two
    initial means, using the stationary sex ratio as weight.
    """
    rates.require_constant()
    if classify(rates) is not Classification.PERSISTENCE:
        raise ValueError("coupled run requires persistence-regime rates")
    sp = stationary_point(rates)
    a_limit = sp.M_bar / sp.F_bar

    raw = integrate(MacroState(m0, f0), rates, kernel, config)
    times = raw.times
    mus, nus, ratios = [], [], []
    for s in raw.states:
        if min(s.m.mass, s.f.mass) < mass_floor:
            raise ExtinctionDetected(
                f"mass fell below {mass_floor} at t = {s.t} in a persistence run")
        mus.append(normalize(s.m)[0])
        nus.append(normalize(s.f)[0])
        ratios.append(s.m.mass / s.f.mass)
    ratios = np.array(ratios)

    target_mean = stability.limiting_mean(a_limit, mus[0].mean(), nus[0].mean())
    grid = m0.grid
    span = grid.x_max - grid.x_min
    seed = gaussian_measure(grid, target_mean, span / 16.0)
    fp = stability.fixed_point(kernel, seed, tol=fixed_point_tol)
    # below ~10x the fixed-point tolerance the distances only resolve the
    # reference measure's own accuracy
    report = stability.convergence_report(times, mus, nus, fp.mu_star,
                                          monotone_floor=10.0 * fixed_point_tol)
    a_fit = fit_exponential_tail(times, np.abs(ratios - a_limit))
    return CoupledRunResult(raw, times, mus, nus, ratios, a_limit, a_fit, fp, report)
