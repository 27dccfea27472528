"""Exact stochastic simulation of the finite two-sex population.

Continuous-time jump process over discrete individuals: every individual
initiates mating at its capability rate and picks an opposite-sex
partner with probability proportional to the partner's capability; each
birth is male or female with a fair coin; individuals die naturally and
through pairwise competition rescaled by the population scale N.

Constant rates take an O(1)-per-event path; trait-dependent rates fall
back to vectorized categorical sampling with incrementally maintained
per-individual competition loads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ExtinctPopulation
from .kernels import InheritanceKernel
from .measures import GridMeasure, TraitGrid, measure_from_samples
from .totals import RateSet

__all__ = [
    "Sex",
    "Individual",
    "BufferedRng",
    "IbmParams",
    "ScaledPopulation",
    "RateSummary",
    "MatingEvent",
    "DeathEvent",
    "IbmSnapshot",
    "IbmTrajectory",
    "event_rates",
    "step",
    "simulate",
]


class Sex(enum.Enum):
    FEMALE = "female"
    MALE = "male"


@dataclass(frozen=True)
class Individual:
    trait: float
    sex: Sex


class BufferedRng:
    """Scalar draws served from refilled numpy batches.

    Mirrors the Generator methods the kernels use, so it can stand in for
    numpy Generator wherever single variates are consumed in a tight loop.
    Fully deterministic for a fixed seed.
    """

    def __init__(self, seed: int, batch: int = 8192):
        self._gen = np.random.default_rng(seed)
        self._batch = batch
        self._uni = self._gen.random(batch)
        self._nrm = self._gen.standard_normal(batch)
        self._exp = self._gen.standard_exponential(batch)
        self._iu = 0
        self._in = 0
        self._ie = 0

    def random(self) -> float:
        i = self._iu
        if i == self._batch:
            self._uni = self._gen.random(self._batch)
            i = 0
        self._iu = i + 1
        return float(self._uni[i])

    def normal(self, loc: float = 0.0, scale: float = 1.0) -> float:
        i = self._in
        if i == self._batch:
            self._nrm = self._gen.standard_normal(self._batch)
            i = 0
        self._in = i + 1
        return loc + scale * float(self._nrm[i])

    def exponential(self, scale: float = 1.0) -> float:
        i = self._ie
        if i == self._batch:
            self._exp = self._gen.standard_exponential(self._batch)
            i = 0
        self._ie = i + 1
        return scale * float(self._exp[i])

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        return low + (high - low) * self.random()


@dataclass(frozen=True)
class IbmParams:
    """Scale, horizon and ingredients of one stochastic run."""

    grid: TraitGrid
    rates: RateSet
    kernel: InheritanceKernel
    N: int
    t_end: float
    sample_times: tuple[float, ...]
    seed: int
    initial_female: np.ndarray
    initial_male: np.ndarray

    def __post_init__(self) -> None:
        if self.N < 1:
            raise ValueError("N must be a positive integer")
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")
        st = np.asarray(self.sample_times, dtype=float)
        if np.any(np.diff(st) < 0):
            raise ValueError("sample_times must be sorted")
        if st.size and (st[0] < 0 or st[-1] > self.t_end):
            raise ValueError("sample_times must lie within [0, t_end]")
        for name in ("initial_female", "initial_male"):
            traits = np.asarray(getattr(self, name), dtype=float)
            if traits.size and (traits.min() < self.grid.x_min or traits.max() > self.grid.x_max):
                raise ValueError(f"{name} contains traits outside the grid")
            object.__setattr__(self, name, traits)


@dataclass(frozen=True)
class RateSummary:
    """Aggregate jump rates of the current population."""

    female_initiation: float
    male_initiation: float
    death_female: float
    death_male: float

    @property
    def mating_total(self) -> float:
        return self.female_initiation + self.male_initiation

    @property
    def death_total(self) -> float:
        return self.death_female + self.death_male

    @property
    def total(self) -> float:
        return self.mating_total + self.death_total


@dataclass(frozen=True)
class MatingEvent:
    mother_trait: float
    father_trait: float
    child_trait: float
    child_sex: Sex
    clamped: bool


@dataclass(frozen=True)
class DeathEvent:
    sex: Sex
    trait: float


class _SexClass:
    """Struct-of-arrays store with swap-remove and incremental caches."""

    __slots__ = ("traits", "n", "p", "d", "load", "sum_p", "sum_d", "sum_load")

    def __init__(self, traits: np.ndarray, capacity: int):
        self.n = len(traits)
        cap = max(capacity, 2 * self.n, 64)
        self.traits = np.zeros(cap)
        self.traits[: self.n] = traits
        self.p = np.zeros(cap)
        self.d = np.zeros(cap)
        self.load = np.zeros(cap)
        self.sum_p = 0.0
        self.sum_d = 0.0
        self.sum_load = 0.0

    def active(self, arr: np.ndarray) -> np.ndarray:
        return arr[: self.n]

    def grow_if_full(self) -> None:
        if self.n == len(self.traits):
            for name in ("traits", "p", "d", "load"):
                old = getattr(self, name)
                new = np.zeros(2 * len(old))
                new[: self.n] = old
                setattr(self, name, new)


class ScaledPopulation:
    """Explicit population of (trait, sex) individuals at scale N.

    The empirical measure assigns mass 1/N to every individual. Mating
    capability sums and per-individual competition loads are maintained
    incrementally after every event; recompute_caches() rebuilds them
    from scratch for consistency checks.
    """

    def __init__(self, females: np.ndarray, males: np.ndarray, N: int,
                 rates: RateSet, grid: TraitGrid):
        self.N = int(N)
        self.grid = grid
        self.rates = rates
        self.constant_rates = rates.is_constant
        females = np.asarray(females, dtype=float)
        males = np.asarray(males, dtype=float)
        self.f = _SexClass(females, 2 * len(females))
        self.m = _SexClass(males, 2 * len(males))
        self.births_female = 0
        self.births_male = 0
        self.deaths = 0
        self.clamped_births = 0
        if self.constant_rates:
            self.f.sum_p = rates.p_f * self.f.n
            self.m.sum_p = rates.p_m * self.m.n
        else:
            self._init_general()

    # -- generic helpers ----------------------------------------------------

    def _sex_class(self, sex: Sex) -> _SexClass:
        return self.f if sex is Sex.FEMALE else self.m

    @property
    def n_female(self) -> int:
        return self.f.n

    @property
    def n_male(self) -> int:
        return self.m.n

    @property
    def size(self) -> int:
        return self.f.n + self.m.n

    def individuals(self) -> list[Individual]:
        out = [Individual(float(t), Sex.FEMALE) for t in self.f.active(self.f.traits)]
        out += [Individual(float(t), Sex.MALE) for t in self.m.active(self.m.traits)]
        return out

    def empirical_measures(self) -> tuple[GridMeasure, GridMeasure]:
        """(male, female) empirical measures, one atom of mass 1/N each."""
        male = measure_from_samples(self.grid, self.m.active(self.m.traits), 1.0 / self.N)
        female = measure_from_samples(self.grid, self.f.active(self.f.traits), 1.0 / self.N)
        return male, female

    # -- trait-dependent machinery -------------------------------------------

    def _rate_fn(self, entry, x):
        return entry(x) if callable(entry) else np.full_like(np.asarray(x, dtype=float), entry)

    def _u(self, name: str, x, y):
        entry = getattr(self.rates, name)
        if callable(entry):
            return entry(x, y)
        return np.full(np.broadcast(np.asarray(x), np.asarray(y)).shape, float(entry)) \
            if np.ndim(x) or np.ndim(y) else float(entry)

    def _init_general(self) -> None:
        r = self.rates
        for cls, p_entry, d_entry in ((self.f, r.p_f, r.D_f), (self.m, r.p_m, r.D_m)):
            t = cls.active(cls.traits)
            cls.p[: cls.n] = self._rate_fn(p_entry, t)
            cls.d[: cls.n] = self._rate_fn(d_entry, t)
        tf = self.f.active(self.f.traits)
        tm = self.m.active(self.m.traits)
        # load_i = (1/N) sum_j U(x_i, w_j) over the whole population, self included
        if self.f.n:
            self.f.load[: self.f.n] = (
                np.asarray(self._u("U_ff", tf[:, None], tf[None, :])).sum(axis=1)
                + (np.asarray(self._u("U_fm", tf[:, None], tm[None, :])).sum(axis=1) if self.m.n else 0.0)
            ) / self.N
        if self.m.n:
            self.m.load[: self.m.n] = (
                np.asarray(self._u("U_mm", tm[:, None], tm[None, :])).sum(axis=1)
                + (np.asarray(self._u("U_mf", tm[:, None], tf[None, :])).sum(axis=1) if self.f.n else 0.0)
            ) / self.N
        for cls in (self.f, self.m):
            cls.sum_p = float(cls.active(cls.p).sum())
            cls.sum_d = float(cls.active(cls.d).sum())
            cls.sum_load = float(cls.active(cls.load).sum())

    # -- event application ----------------------------------------------------

    def add(self, trait: float, sex: Sex) -> None:
        cls = self._sex_class(sex)
        cls.grow_if_full()
        r = self.rates
        if self.constant_rates:
            cls.traits[cls.n] = trait
            cls.n += 1
            cls.sum_p += r.p_f if sex is Sex.FEMALE else r.p_m
            if sex is Sex.FEMALE:
                self.births_female += 1
            else:
                self.births_male += 1
            return
        tf = self.f.active(self.f.traits)
        tm = self.m.active(self.m.traits)
        if sex is Sex.FEMALE:
            own = (np.asarray(self._u("U_ff", trait, tf)).sum() + self._u("U_ff", trait, trait)
                   + np.asarray(self._u("U_fm", trait, tm)).sum()) / self.N
            inc_f = np.asarray(self._u("U_ff", tf, trait)) / self.N
            inc_m = np.asarray(self._u("U_mf", tm, trait)) / self.N
            p_new, d_new = float(self._rate_fn(r.p_f, np.array([trait]))[0]), \
                float(self._rate_fn(r.D_f, np.array([trait]))[0])
            self.births_female += 1
        else:
            own = (np.asarray(self._u("U_mm", trait, tm)).sum() + self._u("U_mm", trait, trait)
                   + np.asarray(self._u("U_mf", trait, tf)).sum()) / self.N
            inc_f = np.asarray(self._u("U_fm", tf, trait)) / self.N
            inc_m = np.asarray(self._u("U_mm", tm, trait)) / self.N
            p_new, d_new = float(self._rate_fn(r.p_m, np.array([trait]))[0]), \
                float(self._rate_fn(r.D_m, np.array([trait]))[0])
            self.births_male += 1
        self.f.load[: self.f.n] += inc_f
        self.f.sum_load += float(inc_f.sum())
        self.m.load[: self.m.n] += inc_m
        self.m.sum_load += float(inc_m.sum())
        cls.traits[cls.n] = trait
        cls.p[cls.n] = p_new
        cls.d[cls.n] = d_new
        cls.load[cls.n] = own
        cls.n += 1
        cls.sum_p += p_new
        cls.sum_d += d_new
        cls.sum_load += own

    def remove(self, sex: Sex, index: int) -> float:
        cls = self._sex_class(sex)
        if not 0 <= index < cls.n:
            raise IndexError(f"no {sex.value} individual at index {index}")
        trait = float(cls.traits[index])
        self.deaths += 1
        if self.constant_rates:
            cls.traits[index] = cls.traits[cls.n - 1]
            cls.n -= 1
            cls.sum_p -= self.rates.p_f if sex is Sex.FEMALE else self.rates.p_m
            return trait
        cls.sum_p -= float(cls.p[index])
        cls.sum_d -= float(cls.d[index])
        cls.sum_load -= float(cls.load[index])
        for name in ("traits", "p", "d", "load"):
            arr = getattr(cls, name)
            arr[index] = arr[cls.n - 1]
        cls.n -= 1
        tf = self.f.active(self.f.traits)
        tm = self.m.active(self.m.traits)
        if sex is Sex.FEMALE:
            dec_f = np.asarray(self._u("U_ff", tf, trait)) / self.N
            dec_m = np.asarray(self._u("U_mf", tm, trait)) / self.N
        else:
            dec_f = np.asarray(self._u("U_fm", tf, trait)) / self.N
            dec_m = np.asarray(self._u("U_mm", tm, trait)) / self.N
        self.f.load[: self.f.n] -= dec_f
        self.f.sum_load -= float(dec_f.sum())
        self.m.load[: self.m.n] -= dec_m
        self.m.sum_load -= float(dec_m.sum())
        return trait

    # -- cache auditing --------------------------------------------------------

    def recompute_caches(self) -> dict[str, float]:
        """Exact cache values rebuilt from the raw population state."""
        r = self.rates
        if self.constant_rates:
            return {
                "sum_p_female": r.p_f * self.f.n,
                "sum_p_male": r.p_m * self.m.n,
                "sum_load_female": (r.U_ff * self.f.n + r.U_fm * self.m.n) * self.f.n / self.N,
                "sum_load_male": (r.U_mm * self.m.n + r.U_mf * self.f.n) * self.m.n / self.N,
            }
        tf = self.f.active(self.f.traits)
        tm = self.m.active(self.m.traits)
        lf = np.zeros(self.f.n)
        lm = np.zeros(self.m.n)
        if self.f.n:
            lf = np.asarray(self._u("U_ff", tf[:, None], tf[None, :])).sum(axis=1) / self.N
            if self.m.n:
                lf = lf + np.asarray(self._u("U_fm", tf[:, None], tm[None, :])).sum(axis=1) / self.N
        if self.m.n:
            lm = np.asarray(self._u("U_mm", tm[:, None], tm[None, :])).sum(axis=1) / self.N
            if self.f.n:
                lm = lm + np.asarray(self._u("U_mf", tm[:, None], tf[None, :])).sum(axis=1) / self.N
        return {
            "sum_p_female": float(self._rate_fn(r.p_f, tf).sum()),
            "sum_p_male": float(self._rate_fn(r.p_m, tm).sum()),
            "sum_load_female": float(lf.sum()),
            "sum_load_male": float(lm.sum()),
        }

    def cached_values(self) -> dict[str, float]:
        if self.constant_rates:
            r = self.rates
            return {
                "sum_p_female": self.f.sum_p,
                "sum_p_male": self.m.sum_p,
                "sum_load_female": (r.U_ff * self.f.n + r.U_fm * self.m.n) * self.f.n / self.N,
                "sum_load_male": (r.U_mm * self.m.n + r.U_mf * self.f.n) * self.m.n / self.N,
            }
        return {
            "sum_p_female": self.f.sum_p,
            "sum_p_male": self.m.sum_p,
            "sum_load_female": self.f.sum_load,
            "sum_load_male": self.m.sum_load,
        }

    def cache_consistency(self) -> float:
        """Largest cache error against a full recomputation, relative with a
        unit floor so empty-class float residue does not dominate."""
        exact = self.recompute_caches()
        cached = self.cached_values()
        worst = 0.0
        for key, val in exact.items():
            scale = max(abs(val), 1.0)
            worst = max(worst, abs(cached[key] - val) / scale)
        return worst

    # -- aggregate rates --------------------------------------------------------

    def death_totals(self) -> tuple[float, float]:
        """(female, male) total death rates including competition.

        An empty class reports exactly zero even when incremental float
        residue lingers in its sums.
        """
        r = self.rates
        if self.constant_rates:
            load_f = (r.U_ff * self.f.n + r.U_fm * self.m.n) / self.N
            load_m = (r.U_mm * self.m.n + r.U_mf * self.f.n) / self.N
            return self.f.n * (r.D_f + load_f), self.m.n * (r.D_m + load_m)
        death_f = (self.f.sum_d + self.f.sum_load) if self.f.n else 0.0
        death_m = (self.m.sum_d + self.m.sum_load) if self.m.n else 0.0
        return max(death_f, 0.0), max(death_m, 0.0)


def event_rates(pop: ScaledPopulation, rates: RateSet | None = None) -> RateSummary:
    """Aggregate jump rates; mating requires both sexes to be present."""
    if rates is not None and rates is not pop.rates:
        raise ValueError("rates must match the population's rate set")
    both = pop.f.n > 0 and pop.m.n > 0
    death_f, death_m = pop.death_totals()
    return RateSummary(
        female_initiation=pop.f.sum_p if both else 0.0,
        male_initiation=pop.m.sum_p if both else 0.0,
        death_female=death_f,
        death_male=death_m,
    )


def _pick_weighted(cls: _SexClass, weights: np.ndarray, rng) -> int:
    cum = np.cumsum(weights[: cls.n])
    return min(int(np.searchsorted(cum, rng.random() * cum[-1], side="right")), cls.n - 1)


def _pick_by_capability(pop: ScaledPopulation, sex: Sex, rng) -> int:
    cls = pop._sex_class(sex)
    if pop.constant_rates:
        return int(rng.random() * cls.n)
    return _pick_weighted(cls, cls.p, rng)


def _pick_victim(pop: ScaledPopulation, sex: Sex, rng) -> int:
    cls = pop._sex_class(sex)
    if pop.constant_rates:
        return int(rng.random() * cls.n)
    return _pick_weighted(cls, cls.d[: cls.n] + cls.load[: cls.n], rng)


def _apply_event(pop: ScaledPopulation, summary: RateSummary,
                 kernel: InheritanceKernel, rng) -> MatingEvent | DeathEvent:
    """Draw the event category and actors, mutate the population."""
    u = rng.random() * summary.total
    if u < summary.mating_total:
        if u < summary.female_initiation:
            mother = _pick_by_capability(pop, Sex.FEMALE, rng)
            father = _pick_by_capability(pop, Sex.MALE, rng)
        else:
            father = _pick_by_capability(pop, Sex.MALE, rng)
            mother = _pick_by_capability(pop, Sex.FEMALE, rng)
        x_mother = float(pop.f.traits[mother])
        x_father = float(pop.m.traits[father])
        child = kernel.sample_offspring(x_mother, x_father, rng)
        clamped = False
        if child < pop.grid.x_min:
            child, clamped = pop.grid.x_min, True
        elif child > pop.grid.x_max:
            child, clamped = pop.grid.x_max, True
        if clamped:
            pop.clamped_births += 1
        sex = Sex.FEMALE if rng.random() < 0.5 else Sex.MALE
        pop.add(child, sex)
        return MatingEvent(x_mother, x_father, child, sex, clamped)
    u -= summary.mating_total
    sex = Sex.FEMALE if u < summary.death_female else Sex.MALE
    victim = _pick_victim(pop, sex, rng)
    trait = pop.remove(sex, victim)
    return DeathEvent(sex, trait)


def step(pop: ScaledPopulation, rates: RateSet, kernel: InheritanceKernel, rng):
    """Advance the population by one jump; returns (waiting time, event).

    Raises ExtinctPopulation when the total rate is zero.
    """
    summary = event_rates(pop, rates)
    if summary.total <= 0.0:
        raise ExtinctPopulation("total event rate is zero")
    dt = rng.exponential(1.0 / summary.total)
    return dt, _apply_event(pop, summary, kernel, rng)


@dataclass(frozen=True)
class IbmSnapshot:
    time: float
    male: GridMeasure
    female: GridMeasure
    n_male: int
    n_female: int


@dataclass(frozen=True)
class IbmTrajectory:
    """Snapshots plus run accounting for one stochastic realization."""

    snapshots: tuple[IbmSnapshot, ...]
    births_female: int
    births_male: int
    deaths: int
    clamped_births: int
    n_events: int
    extinction_time: float | None
    seed: int

    @property
    def births(self) -> int:
        return self.births_female + self.births_male

    def measures_at(self, t: float) -> tuple[GridMeasure, GridMeasure]:
        """(male, female) empirical measures at sample time t."""
        for snap in self.snapshots:
            if abs(snap.time - t) <= 1e-9 + 1e-9 * abs(t):
                return snap.male, snap.female
        raise KeyError(f"no snapshot at t = {t}")


def simulate(params: IbmParams) -> IbmTrajectory:
    """Run one realization, sampling empirical measures at the given times.

    Deterministic for a fixed seed. If the population dies out the
    remaining snapshots are empty and the extinction time is recorded;
    a population with zero total rate but surviving members simply stops
    changing.
    """
    if len(params.initial_female) + len(params.initial_male) == 0:
        raise ValueError("initial population must be nonempty")
    pop = ScaledPopulation(params.initial_female, params.initial_male,
                           params.N, params.rates, params.grid)
    rng = BufferedRng(params.seed)
    sample_times = np.asarray(params.sample_times, dtype=float)
    snapshots: list[IbmSnapshot] = []
    next_sample = 0

    def take_snapshots(up_to: float) -> None:
        nonlocal next_sample
        while next_sample < len(sample_times) and sample_times[next_sample] <= up_to + 1e-12:
            male, female = pop.empirical_measures()
            snapshots.append(IbmSnapshot(float(sample_times[next_sample]),
                                         male, female, pop.m.n, pop.f.n))
            next_sample += 1

    t = 0.0
    n_events = 0
    extinction_time = None
    while True:
        summary = event_rates(pop)
        total = summary.total
        if total <= 0.0:
            if pop.size == 0:
                extinction_time = t
            break
        dt = rng.exponential(1.0 / total)
        t_next = t + dt
        if t_next >= params.t_end:
            break
        take_snapshots(t_next - 1e-15)
        _apply_event(pop, summary, params.kernel, rng)
        t = t_next
        n_events += 1
    take_snapshots(params.t_end)
    return IbmTrajectory(
        snapshots=tuple(snapshots),
        births_female=pop.births_female,
        births_male=pop.births_male,
        deaths=pop.deaths,
        clamped_births=pop.clamped_births,
        n_events=n_events,
        extinction_time=extinction_time,
        seed=params.seed,
    )
