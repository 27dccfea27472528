import numpy as np
import pytest
from scipy import stats

from dimorph.errors import ExtinctPopulation
from dimorph.ibm import (BufferedRng, IbmParams, DeathEvent, MatingEvent,
                         ScaledPopulation, Sex, event_rates, simulate, step)
from dimorph.kernels import AdditiveNoiseKernel, GaussianNoise
from dimorph.measures import TraitGrid
from dimorph.totals import RateSet

GRID = TraitGrid(-6.0, 6.0, 192)
KERNEL = AdditiveNoiseKernel(GaussianNoise(0.5))
PERSIST = RateSet.constant(p_f=2.0, p_m=2.0, D_f=1.0, D_m=1.0, U=0.25)


def _zero_u(x, y):
    return 0.0 * (x + y)


def test_event_rates_one_pair_unit_rates():
    # one female and one male, p = 1, D = 1, no competition, N = 1:
    # two mating initiations plus two unit deaths
    rates = RateSet(p_f=1.0, p_m=1.0, D_f=1.0, D_m=1.0,
                    U_ff=_zero_u, U_fm=_zero_u, U_mf=_zero_u, U_mm=_zero_u)
    pop = ScaledPopulation(np.array([0.0]), np.array([0.5]), 1, rates, GRID)
    s = event_rates(pop, rates)
    assert s.mating_total == pytest.approx(2.0)
    assert s.death_total == pytest.approx(2.0)
    assert s.total == pytest.approx(4.0)


def test_event_rates_single_sex_no_mating():
    pop = ScaledPopulation(np.array([0.0, 1.0]), np.array([]), 1, PERSIST, GRID)
    s = event_rates(pop)
    assert s.mating_total == 0.0
    assert s.death_total > 0.0


def test_event_rates_competition_includes_self():
    # two males, U = u everywhere, no natural death or male mating:
    # each male dies at rate 2u (self term included), total 4u
    u = 0.3
    rates = RateSet(p_f=1.0, p_m=0.0, D_f=lambda x: 0.0 * x, D_m=lambda x: 0.0 * x,
                    U_ff=lambda x, y: u + 0 * (x + y), U_fm=lambda x, y: u + 0 * (x + y),
                    U_mf=lambda x, y: u + 0 * (x + y), U_mm=lambda x, y: u + 0 * (x + y))
    pop = ScaledPopulation(np.array([]), np.array([0.0, 1.0]), 1, rates, GRID)
    s = event_rates(pop)
    assert s.death_male == pytest.approx(4.0 * u)
    assert s.mating_total == 0.0


def test_step_single_male_death_only():
    rates = RateSet.constant(p_f=5.0, p_m=5.0, D_f=1.0, D_m=1.0, U=0.25)
    pop = ScaledPopulation(np.array([]), np.array([0.3]), 1, rates, GRID)
    rng = BufferedRng(0)
    dt, event = step(pop, rates, KERNEL, rng)
    assert isinstance(event, DeathEvent)
    assert pop.size == 0
    with pytest.raises(ExtinctPopulation):
        step(pop, rates, KERNEL, rng)


def test_events_change_count_by_one():
    rng0 = np.random.default_rng(5)
    pop = ScaledPopulation(rng0.normal(0, 0.5, 40), rng0.normal(0, 0.5, 40),
                           80, PERSIST, GRID)
    rng = BufferedRng(5)
    for _ in range(500):
        before = pop.size
        _dt, event = step(pop, PERSIST, KERNEL, rng)
        if isinstance(event, MatingEvent):
            assert pop.size == before + 1
        else:
            assert pop.size == before - 1
    assert (pop.births_female + pop.births_male) - pop.deaths == pop.size - 80


def test_fisher_sex_ratio():
    rng0 = np.random.default_rng(11)
    params = IbmParams(grid=GRID, rates=PERSIST, kernel=KERNEL, N=2000, t_end=3.0,
                       sample_times=(3.0,), seed=11,
                       initial_female=rng0.normal(0, 0.5, 2000),
                       initial_male=rng0.normal(0, 0.5, 2000))
    traj = simulate(params)
    births = traj.births
    assert births > 10_000
    ratio = traj.births_female / births
    assert abs(ratio - 0.5) <= 4.0 * np.sqrt(0.25 / births)


def test_interevent_times_are_exponential():
    # frozen-size probe: fresh two-individual populations, first waiting time
    rates = RateSet(p_f=1.5, p_m=1.5, D_f=lambda x: 0.0 * x, D_m=lambda x: 0.0 * x,
                    U_ff=_zero_u, U_fm=_zero_u, U_mf=_zero_u, U_mm=_zero_u)
    rng = BufferedRng(13)
    waits = []
    for _ in range(1000):
        pop = ScaledPopulation(np.array([0.0]), np.array([0.0]), 1, rates, GRID)
        dt, _event = step(pop, rates, KERNEL, rng)
        waits.append(dt)
    # total initiation rate is 3.0
    res = stats.kstest(waits, "expon", args=(0.0, 1.0 / 3.0))
    assert res.pvalue > 0.01


def test_seed_replay_bit_identical():
    rng0 = np.random.default_rng(21)
    params = IbmParams(grid=GRID, rates=PERSIST, kernel=KERNEL, N=300, t_end=2.0,
                       sample_times=(0.0, 1.0, 2.0), seed=21,
                       initial_female=rng0.normal(0, 0.5, 300),
                       initial_male=rng0.normal(0, 0.5, 300))
    a = simulate(params)
    b = simulate(params)
    assert a.n_events == b.n_events
    assert a.births_female == b.births_female
    for sa, sb in zip(a.snapshots, b.snapshots):
        np.testing.assert_array_equal(sa.male.weights, sb.male.weights)
        np.testing.assert_array_equal(sa.female.weights, sb.female.weights)


def test_frozen_population_stays_constant():
    # all rates vanish: the generator is zero and nothing ever happens
    zero = lambda x: 0.0 * x
    rates = RateSet(p_f=zero, p_m=zero, D_f=zero, D_m=zero,
                    U_ff=_zero_u, U_fm=_zero_u, U_mf=_zero_u, U_mm=_zero_u)
    params = IbmParams(grid=GRID, rates=rates, kernel=KERNEL, N=10, t_end=5.0,
                       sample_times=(0.0, 2.5, 5.0), seed=3,
                       initial_female=np.array([0.5, 1.0]),
                       initial_male=np.array([-0.5]))
    traj = simulate(params)
    assert traj.extinction_time is None
    assert traj.n_events == 0
    for snap in traj.snapshots:
        assert snap.n_female == 2 and snap.n_male == 1
        assert snap.female.mass == pytest.approx(0.2)


def test_subcritical_population_goes_extinct():
    rates = RateSet.constant(p_f=0.2, p_m=0.2, D_f=2.0, D_m=2.0, U=0.25)
    for seed in range(5):
        rng0 = np.random.default_rng(seed)
        params = IbmParams(grid=GRID, rates=rates, kernel=KERNEL, N=20, t_end=50.0,
                           sample_times=(50.0,), seed=seed,
                           initial_female=rng0.normal(0, 0.5, 20),
                           initial_male=rng0.normal(0, 0.5, 20))
        traj = simulate(params)
        assert traj.extinction_time is not None
        assert traj.snapshots[-1].n_male == 0
        assert traj.snapshots[-1].n_female == 0


def test_cache_consistency_both_modes():
    rng0 = np.random.default_rng(31)
    pop = ScaledPopulation(rng0.normal(0, 0.5, 100), rng0.normal(0, 0.5, 100),
                           200, PERSIST, GRID)
    rng = BufferedRng(31)
    for _ in range(2000):
        step(pop, PERSIST, KERNEL, rng)
    assert pop.cache_consistency() < 1e-9

    trait_rates = RateSet(p_f=lambda x: 2.0 + 0.1 * np.sin(x), p_m=2.0,
                          D_f=1.0, D_m=lambda x: 1.0 + 0.02 * x * x,
                          U_ff=lambda x, y: 0.2 + 0.01 * np.abs(x - y),
                          U_fm=0.25, U_mf=0.25, U_mm=0.25)
    popg = ScaledPopulation(rng0.normal(0, 0.5, 60), rng0.normal(0, 0.5, 60),
                            120, trait_rates, GRID)
    rngg = BufferedRng(32)
    for _ in range(2000):
        step(popg, trait_rates, KERNEL, rngg)
    assert popg.cache_consistency() < 1e-9


def test_newborns_clamped_to_grid():
    tight = TraitGrid(-0.5, 0.5, 16)
    wild = AdditiveNoiseKernel(GaussianNoise(2.0))
    rates = RateSet.constant(p_f=5.0, p_m=5.0, D_f=0.1, D_m=0.1, U=0.01)
    params = IbmParams(grid=tight, rates=rates, kernel=wild, N=50, t_end=1.0,
                       sample_times=(1.0,), seed=4,
                       initial_female=np.zeros(50), initial_male=np.zeros(50))
    traj = simulate(params)
    assert traj.clamped_births > 0
    snap = traj.snapshots[-1]
    assert snap.male.mass + snap.female.mass > 0


def test_empirical_measure_scaling():
    pop = ScaledPopulation(np.array([0.0, 0.1]), np.array([0.2]), 4, PERSIST, GRID)
    male, female = pop.empirical_measures()
    assert female.mass == pytest.approx(0.5)  # 2 atoms of mass 1/4
    assert male.mass == pytest.approx(0.25)


def test_masses_track_the_planar_system():
    # persistence regime: empirical masses stay within CLT-scale bands of
    # the deterministic solution
    from dimorph.totals import TotalsState, integrate_totals

    n_scale = 2000
    rng0 = np.random.default_rng(17)
    params = IbmParams(grid=GRID, rates=PERSIST, kernel=KERNEL, N=n_scale, t_end=2.001,
                       sample_times=(1.0, 2.0), seed=17,
                       initial_female=np.clip(rng0.normal(0, 0.5, n_scale), -6, 6),
                       initial_male=np.clip(rng0.normal(0, 0.5, n_scale), -6, 6))
    traj = simulate(params)
    series = integrate_totals(TotalsState(1.0, 1.0), PERSIST, t_end=2.0, dt=0.005)
    for snap in traj.snapshots:
        idx = int(round(snap.time / 0.005))
        band = 5.0 * np.sqrt(series.M[idx] / n_scale)
        assert abs(snap.male.mass - series.M[idx]) <= band
        assert abs(snap.female.mass - series.F[idx]) <= band


def test_params_validation():
    with pytest.raises(ValueError):
        IbmParams(grid=GRID, rates=PERSIST, kernel=KERNEL, N=0, t_end=1.0,
                  sample_times=(0.5,), seed=0,
                  initial_female=np.array([0.0]), initial_male=np.array([0.0]))
    with pytest.raises(ValueError):
        IbmParams(grid=GRID, rates=PERSIST, kernel=KERNEL, N=1, t_end=1.0,
                  sample_times=(2.0,), seed=0,
                  initial_female=np.array([0.0]), initial_male=np.array([0.0]))
    with pytest.raises(ValueError):
        IbmParams(grid=GRID, rates=PERSIST, kernel=KERNEL, N=1, t_end=1.0,
                  sample_times=(0.5,), seed=0,
                  initial_female=np.array([99.0]), initial_male=np.array([0.0]))
