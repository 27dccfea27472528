"""Total-population dynamics for constant demographic rates.

The male and female total masses follow a planar ODE driven by a shared
birth rate and sex-specific death and competition losses. Whether the
population persists or dies out is decided by the threshold
p_m/D_m + p_f/D_f versus 2; in the persistence regime the masses settle
at the unique positive root of a polynomial system, found here by damped
multi-start Newton.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConvergenceFailure

__all__ = [
    "RateSet",
    "TotalsState",
    "StationaryResult",
    "Classification",
    "TotalsSeries",
    "totals_rhs",
    "classify",
    "stationary_point",
    "integrate_totals",
    "fit_exponential_tail",
]

RateEntry = float | Callable[..., float]


@dataclass(frozen=True)
class RateSet:
    """All demographic rates of the model.

    p_f, p_m: mating capabilities; D_f, D_m: natural death rates;
    U_ff, U_fm, U_mf, U_mm: competition kernels, where U_ab(x, y) is the
    rate at which a sex-a individual of trait x loses against a sex-b
    individual of trait y. Entries are constants or trait functions;
    the totals operations require constants.
    """

    p_f: RateEntry
    p_m: RateEntry
    D_f: RateEntry
    D_m: RateEntry
    U_ff: RateEntry
    U_fm: RateEntry
    U_mf: RateEntry
    U_mm: RateEntry

    def __post_init__(self) -> None:
        for name in ("D_f", "D_m"):
            v = getattr(self, name)
            if isinstance(v, (int, float)) and v <= 0:
                raise ValueError(f"{name} must be positive, got {v}")
        for name in ("U_ff", "U_fm", "U_mf", "U_mm"):
            v = getattr(self, name)
            if isinstance(v, (int, float)) and v <= 0:
                raise ValueError(f"{name} must be positive, got {v}")
        for name in ("p_f", "p_m"):
            v = getattr(self, name)
            if isinstance(v, (int, float)) and v < 0:
                raise ValueError(f"{name} must be non-negative, got {v}")
        if self.is_constant and self.p_f + self.p_m <= 0:
            raise ValueError("p_f + p_m must be positive")

    @property
    def is_constant(self) -> bool:
        return all(
            isinstance(getattr(self, f), (int, float))
            for f in ("p_f", "p_m", "D_f", "D_m", "U_ff", "U_fm", "U_mf", "U_mm")
        )

    def require_constant(self) -> "RateSet":
        if not self.is_constant:
            raise ValueError("this operation requires constant rates")
        return self

    @classmethod
    def constant(cls, p_f: float, p_m: float, D_f: float, D_m: float, U: float) -> "RateSet":
        """All four competition kernels equal to the same constant U."""
        return cls(p_f=p_f, p_m=p_m, D_f=D_f, D_m=D_m, U_ff=U, U_fm=U, U_mf=U, U_mm=U)


@dataclass(frozen=True)
class TotalsState:
    """Total masses of the male and female subpopulations."""

    M: float
    F: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.M) and np.isfinite(self.F)):
            raise ValueError("masses must be finite")
        if self.M < 0 or self.F < 0:
            raise ValueError("masses must be non-negative")

    def birth_rate(self, rates: RateSet) -> float:
        return 0.5 * (rates.p_f * self.F + rates.p_m * self.M)

    @property
    def sex_ratio(self) -> float:
        """Male to female mass ratio; requires F > 0."""
        if self.F <= 0:
            raise ZeroDivisionError("sex ratio undefined for F = 0")
        return self.M / self.F


class Classification(enum.Enum):
    PERSISTENCE = "Persistence"
    EXTINCTION = "Extinction"


@dataclass(frozen=True)
class StationaryResult:
    """Outcome of the stationary-point search.

    Persistent results carry the unique positive masses and the relative
    residual of the polynomial system; otherwise only the trivial zero
    state is stationary.
    """

    classification: Classification
    M_bar: float | None = None
    F_bar: float | None = None
    residual: float | None = None

    @property
    def is_persistent(self) -> bool:
        return self.classification is Classification.PERSISTENCE


def totals_rhs(state: TotalsState, rates: RateSet) -> tuple[float, float]:
    """Right-hand side of the planar mass system."""
    rates.require_constant()
    lam = state.birth_rate(rates)
    dM = lam - (rates.D_m + rates.U_mm * state.M + rates.U_mf * state.F) * state.M
    dF = lam - (rates.D_f + rates.U_fm * state.M + rates.U_ff * state.F) * state.F
    return dM, dF


def classify(rates: RateSet) -> Classification:
    """Persistence iff p_m/D_m + p_f/D_f exceeds 2; equality means extinction."""
    rates.require_constant()
    if rates.p_m / rates.D_m + rates.p_f / rates.D_f > 2.0:
        return Classification.PERSISTENCE
    return Classification.EXTINCTION


def _poly(rates: RateSet, M: float, F: float) -> np.ndarray:
    g1 = (rates.p_m * M + rates.p_f * F - 2 * rates.D_m * M
          - 2 * rates.U_mm * M * M - 2 * rates.U_mf * F * M)
    g2 = (rates.p_m * M + rates.p_f * F - 2 * rates.D_f * F
          - 2 * rates.U_fm * M * F - 2 * rates.U_ff * F * F)
    return np.array([g1, g2])


def _poly_jacobian(rates: RateSet, M: float, F: float) -> np.ndarray:
    return np.array([
        [rates.p_m - 2 * rates.D_m - 4 * rates.U_mm * M - 2 * rates.U_mf * F,
         rates.p_f - 2 * rates.U_mf * M],
        [rates.p_m - 2 * rates.U_fm * F,
         rates.p_f - 2 * rates.D_f - 2 * rates.U_fm * M - 4 * rates.U_ff * F],
    ])


def poly_relative_residual(rates: RateSet, M: float, F: float) -> float:
    """Residual of the polynomial system scaled by its term magnitudes.

    No unit floor: near the trivial zero root the terms shrink with the
    point, so collapsing iterates cannot pass as converged.
    """
    g = _poly(rates, M, F)
    t1 = max(1e-300, abs(rates.p_m * M), abs(rates.p_f * F), abs(2 * rates.D_m * M),
             abs(2 * rates.U_mm * M * M), abs(2 * rates.U_mf * F * M))
    t2 = max(1e-300, abs(rates.p_m * M), abs(rates.p_f * F), abs(2 * rates.D_f * F),
             abs(2 * rates.U_fm * M * F), abs(2 * rates.U_ff * F * F))
    return max(abs(g[0]) / t1, abs(g[1]) / t2)


def _newton_from(rates: RateSet, start: np.ndarray,
                 tol: float = 1e-13, max_iter: int = 60) -> np.ndarray | None:
    """Damped Newton kept inside the positive quadrant; None when it stalls.

    With the floorless relative residual, iterates collapsing onto the
    trivial zero root never pass the tolerance (the residual-to-term ratio
    stays of order one there), so any returned point is the positive root.
    """
    x = np.asarray(start, dtype=float)
    if np.any(x <= 0):
        return None
    g = _poly(rates, x[0], x[1])
    for _ in range(max_iter):
        res = poly_relative_residual(rates, x[0], x[1])
        if res < tol:
            return x
        jac = _poly_jacobian(rates, x[0], x[1])
        try:
            step = np.linalg.solve(jac, -g)
        except np.linalg.LinAlgError:
            return None
        t = 1.0
        gn = float(np.linalg.norm(g))
        while t > 1e-8:
            cand = x + t * step
            if np.all(cand > 0):
                gc = _poly(rates, cand[0], cand[1])
                if float(np.linalg.norm(gc)) <= (1.0 - 1e-4 * t) * gn or gn == 0.0:
                    x, g = cand, gc
                    break
            t *= 0.5
        else:
            return None
    return None


def stationary_point(rates: RateSet, start: tuple[float, float] | None = None) -> StationaryResult:
    """Unique positive stationary masses in the persistence regime.

    An optional start seeds the first Newton attempt; a deterministic
    multi-start grid backs it up. Raises ConvergenceFailure when no start
    reaches the residual target in the persistence regime.
    """
    rates.require_constant()
    label = classify(rates)
    if label is Classification.EXTINCTION:
        return StationaryResult(Classification.EXTINCTION)

    # p/(2 min U) bounds the positive root per axis, but can overshoot it by
    # many decades for badly scaled rates; cover the box logarithmically,
    # large starts first (they converge directly for well-scaled problems)
    min_u = min(rates.U_ff, rates.U_fm, rates.U_mf, rates.U_mm)
    scale = (rates.p_f + rates.p_m) / (2.0 * min_u)
    starts: list[np.ndarray] = []
    if start is not None:
        starts.append(np.asarray(start, dtype=float))
    axis = scale * np.geomspace(1.0, 1e-9, 7)
    starts.extend(np.array([a, b]) for a in axis for b in axis)

    for s in starts:
        root = _newton_from(rates, s)
        if root is None:
            continue
        res = poly_relative_residual(rates, root[0], root[1])
        if res < 1e-10:
            return StationaryResult(Classification.PERSISTENCE,
                                    M_bar=float(root[0]), F_bar=float(root[1]),
                                    residual=res)
    raise ConvergenceFailure(
        "no Newton start reached the residual target",
        best_point=None,
        best_residual=None,
    )


@dataclass(frozen=True)
class TotalsSeries:
    """Sampled trajectory of the planar mass system."""

    t: np.ndarray
    M: np.ndarray
    F: np.ndarray

    @property
    def final(self) -> TotalsState:
        return TotalsState(float(self.M[-1]), float(self.F[-1]))


def integrate_totals(state0: TotalsState, rates: RateSet, t_end: float,
                     dt: float = 0.01) -> TotalsSeries:
    """Classic fourth-order Runge-Kutta integration of the mass system."""
    rates.require_constant()
    if t_end <= 0 or dt <= 0:
        raise ValueError("t_end and dt must be positive")
    n_steps = int(round(t_end / dt))

    def f(y: np.ndarray) -> np.ndarray:
        lam = 0.5 * (rates.p_f * y[1] + rates.p_m * y[0])
        return np.array([
            lam - (rates.D_m + rates.U_mm * y[0] + rates.U_mf * y[1]) * y[0],
            lam - (rates.D_f + rates.U_fm * y[0] + rates.U_ff * y[1]) * y[1],
        ])

    y = np.array([state0.M, state0.F], dtype=float)
    ts = np.empty(n_steps + 1)
    out = np.empty((n_steps + 1, 2))
    ts[0] = 0.0
    out[0] = y
    for i in range(n_steps):
        k1 = f(y)
        k2 = f(y + 0.5 * dt * k1)
        k3 = f(y + 0.5 * dt * k2)
        k4 = f(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        y = np.maximum(y, 0.0)
        ts[i + 1] = (i + 1) * dt
        out[i + 1] = y
    return TotalsSeries(ts, out[:, 0], out[:, 1])


def fit_exponential_tail(t: np.ndarray, dist: np.ndarray,
                         floor: float = 1e-12) -> tuple[float, float]:
    """Least-squares slope and R^2 of log(dist) vs t on the usable tail.

    Points at or below the floor are dropped; returns (nan, nan) when
    fewer than three remain.
    """
    t = np.asarray(t, dtype=float)
    dist = np.asarray(dist, dtype=float)
    keep = dist > floor
    if keep.sum() < 3:
        return float("nan"), float("nan")
    tt, ld = t[keep], np.log(dist[keep])
    slope, intercept = np.polyfit(tt, ld, 1)
    pred = slope * tt + intercept
    ss_res = float(np.sum((ld - pred) ** 2))
    ss_tot = float(np.sum((ld - ld.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2
