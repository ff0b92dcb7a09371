import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from timesync.estimators import ks_statistic
from timesync.model import ModelParams, gap_rate
from timesync.sim import (
    ParticleState,
    apply_event,
    gap_samples,
    make_initial,
    map_replicas,
    new_state,
    next_event,
    observables,
    replica_rng,
    run_until,
    simulate_observables,
)


def _positions(state):
    return np.concatenate([state.positions1, state.positions2])


def test_new_state_starts_at_zero(symmetric):
    s = new_state(symmetric, [0.0], [0.0], seed=42)
    assert s.clock == 0.0 and s.jump_count == 0
    np.testing.assert_array_equal(_positions(s), [0.0, 0.0])


def test_singular_initial_condition_accepted(symmetric):
    s = new_state(symmetric, np.zeros(7), np.zeros(5), seed=1)
    run_until(s, 3.0)
    assert s.n1 == 7 and s.n2 == 5


def test_empty_population_rejected(symmetric):
    with pytest.raises(ValueError):
        new_state(symmetric, [], [0.0], seed=1)


def test_same_inputs_same_stream(asymmetric):
    a = new_state(asymmetric, [0.0, 1.0], [2.0], seed=9)
    b = new_state(asymmetric, [0.0, 1.0], [2.0], seed=9)
    for t in np.linspace(0.5, 20, 15):
        assert observables(run_until(a, t)) == observables(run_until(b, t))


def test_next_event_does_not_mutate(symmetric):
    s = new_state(symmetric, [0.0], [0.0], seed=3)
    e1 = next_event(s)
    e2 = next_event(s)
    assert e1 == e2
    assert s.clock == 0.0 and s.jump_count == 0


def test_apply_event_rejects_foreign_event(symmetric):
    s = new_state(symmetric, [0.0], [0.0], seed=3)
    e = next_event(s)
    bogus = type(e)(e.wait + 1.0, e.source_type, e.source_index, e.target_index)
    with pytest.raises(ValueError):
        apply_event(s, bogus)


def test_jump_lands_on_target(symmetric):
    s = new_state(symmetric, [0.0], [0.0], seed=11)
    for _ in range(200):
        e = next_event(s)
        apply_event(s, e)
        assert s.positions1[0] == s.positions2[0]


def test_drift_is_exact_between_jumps(asymmetric):
    x1, x2 = [0.25, -1.0], [3.0, 0.5, 2.0]
    s = ParticleState(asymmetric, x1, x2, replica_rng(5, 0), _jumps=False)
    run_until(s, 7.5)
    np.testing.assert_allclose(s.positions1, np.array(x1) + asymmetric.v1 * 7.5, rtol=0, atol=1e-14)
    np.testing.assert_allclose(s.positions2, np.array(x2) + asymmetric.v2 * 7.5, rtol=0, atol=1e-14)


def test_drift_before_jump(asymmetric):
    s = new_state(asymmetric, [0.0], [1.0], seed=17)
    e = next_event(s)
    before = s.copy()
    run_until(before, s.clock + e.wait * 0.999999)
    apply_event(s, e)
    tau = s.clock
    if e.source_type == 1:
        assert s.positions1[0] == pytest.approx(1.0 + asymmetric.v2 * tau, abs=1e-12)
    else:
        assert s.positions2[0] == pytest.approx(asymmetric.v1 * tau, abs=1e-12)


def test_run_until_now_is_noop(symmetric):
    s = new_state(symmetric, [0.0, 1.0], [0.0], seed=2)
    run_until(s, 4.0)
    before = (_positions(s).copy(), s.jump_count, next_event(s))
    run_until(s, 4.0)
    np.testing.assert_array_equal(_positions(s), before[0])
    assert s.jump_count == before[1] and next_event(s) == before[2]


def test_run_until_refuses_past(symmetric):
    s = run_until(new_state(symmetric, [0.0], [0.0], seed=2), 1.0)
    with pytest.raises(ValueError):
        run_until(s, 0.5)


@settings(max_examples=25)
@given(st.lists(st.floats(0.01, 30.0), min_size=1, max_size=6), st.integers(0, 2**32))
def test_composition_is_bitwise(cuts, seed):
    p = ModelParams(0.2, 1.3, 0.8, 1.6)
    horizon = 40.0
    a = new_state(p, [0.0, 0.5, 1.0], [0.0, 2.0], seed)
    b = new_state(p, [0.0, 0.5, 1.0], [0.0, 2.0], seed)
    for t in sorted(cuts):
        run_until(a, t)
    run_until(a, horizon)
    run_until(b, horizon)
    np.testing.assert_array_equal(_positions(a), _positions(b))
    assert a.jump_count == b.jump_count


def test_stepwise_equals_bulk(asymmetric):
    a = new_state(asymmetric, np.zeros(4), np.zeros(3), seed=8)
    b = new_state(asymmetric, np.zeros(4), np.zeros(3), seed=8)
    # more events than one random block, so refills are exercised too
    while a.jump_count < 5000:
        apply_event(a, next_event(a))
    run_until(b, a.clock)
    np.testing.assert_array_equal(_positions(a), _positions(b))
    assert b.jump_count == a.jump_count


def test_copy_branches_independently(symmetric):
    a = run_until(new_state(symmetric, [0.0], [0.0], seed=4), 2.0)
    b = a.copy()
    run_until(a, 10.0)
    run_until(b, 10.0)
    np.testing.assert_array_equal(_positions(a), _positions(b))
    run_until(b, 11.0)
    assert a.clock == 10.0


def _event_draws(params, n1, n2, count, seed):
    s = new_state(params, np.zeros(n1), np.zeros(n2), seed)
    waits = np.empty(count)
    kinds = np.empty(count, dtype=int)
    targets = np.empty(count, dtype=int)
    for k in range(count):
        e = next_event(s)
        waits[k], kinds[k], targets[k] = e.wait, e.source_type, e.target_index
        apply_event(s, e)
    return waits, kinds, targets


def test_event_laws_two_particles(symmetric):
    waits, kinds, _ = _event_draws(symmetric, 1, 1, 100_000, seed=21)
    assert stats.kstest(waits, "expon", args=(0, 0.5)).pvalue > 1e-3
    se = waits.std(ddof=1) / math.sqrt(waits.size)
    assert abs(waits.mean() - 0.5) < 3 * se
    counts = np.bincount(kinds, minlength=3)[1:]
    assert stats.chisquare(counts, [50_000, 50_000]).pvalue > 1e-3


def test_source_type_probability():
    p = ModelParams(0.0, 1.0, 1.0, 5.0)
    _, kinds, targets = _event_draws(p, 3, 1, 40_000, seed=22)
    frac = np.mean(kinds == 1)
    assert abs(frac - 3 / 8) < 4 * math.sqrt(3 / 8 * 5 / 8 / kinds.size)
    assert np.all(targets[kinds == 2] < 3) and np.all(targets[kinds == 1] == 0)


def test_targets_uniform(asymmetric):
    _, kinds, targets = _event_draws(asymmetric, 2, 4, 40_000, seed=23)
    t = targets[kinds == 1]
    counts = np.bincount(t, minlength=4)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_jump_count_is_poisson(symmetric):
    counts = np.array([run_until(new_state(symmetric, [0.0], [0.0], 99, replica=r), 50.0).jump_count
                       for r in range(1000)])
    se = math.sqrt(100.0 / counts.size)
    assert abs(counts.mean() - 100.0) < 3 * se
    assert counts.var(ddof=1) == pytest.approx(100.0, rel=0.15)


def test_observables_hand_values():
    p = ModelParams(0.0, 1.0, 1.0, 1.0)
    s = ParticleState(p, [0.0, 2.0], [5.0], replica_rng(0, 0), _jumps=False)
    o = observables(s)
    assert (o.mean1, o.var1, o.mean2, o.var2, o.min_all) == (1.0, 1.0, 5.0, 0.0, 0.0)
    s = ParticleState(p, [3.0, 3.0], [3.0], replica_rng(0, 0), _jumps=False)
    assert observables(s).as_tuple() == (3.0, 3.0, 0.0, 0.0, 3.0)


def test_gap_samples_empty_and_nonnegative(symmetric):
    assert gap_samples(symmetric, 1, 10.0, 0).size == 0
    g = gap_samples(symmetric, 1, 10.0, 2000, spacing=0.3)
    assert np.all(g >= 0)


def test_gap_law(symmetric):
    lam = gap_rate(symmetric)
    g = gap_samples(symmetric, 7, 100.0, 10_000, spacing=5.0)
    assert abs(g.mean() - 1 / lam) < 3 * g.std(ddof=1) / math.sqrt(g.size)
    assert ks_statistic(g, lambda x: -np.expm1(-lam * x)) < 0.02


def test_gap_law_is_stationary(asymmetric):
    lam = gap_rate(asymmetric)
    cdf = lambda x: -np.expm1(-lam * x)
    early = np.array([gap_samples(asymmetric, 31, 500.0, 1, replica=r)[0] for r in range(1500)])
    late = np.array([gap_samples(asymmetric, 31, 1000.0, 1, replica=r + 5000)[0] for r in range(1500)])
    assert stats.kstest(early, cdf).pvalue > 1e-3
    assert stats.kstest(late, cdf).pvalue > 1e-3
    assert stats.ks_2samp(early, late).pvalue > 1e-3


def test_make_initial_forms(symmetric):
    rng = np.random.default_rng(0)
    x1, x2 = make_initial(None, rng, 2, 3)
    assert x1.tolist() == [0, 0] and x2.tolist() == [0, 0, 0]
    x1, _ = make_initial(([1.0, 2.0], [0, 0, 0]), rng, 2, 3)
    assert x1.tolist() == [1.0, 2.0]
    with pytest.raises(ValueError):
        make_initial(([1.0], [0.0]), rng, 2, 3)
    x1, x2 = make_initial(lambda r, a, b: (r.normal(size=a), r.normal(size=b)), rng, 4, 1)
    assert x1.shape == (4,) and x2.shape == (1,)


def test_replicas_independent_of_schedule(asymmetric):
    times = [1.0, 3.0, 8.0]
    serial = simulate_observables(asymmetric, 3, 4, None, times, 12, [0, 1, 2, 3])
    threaded = simulate_observables(asymmetric, 3, 4, None, times, 12, [0, 1, 2, 3], threads=3)
    subset = simulate_observables(asymmetric, 3, 4, None, times, 12, [2, 3])
    np.testing.assert_array_equal(serial, threaded)
    np.testing.assert_array_equal(serial[2:], subset)
    assert serial.shape == (4, 3, 5)


def test_streams_are_distinct():
    a = replica_rng(1, 0).random(4)
    b = replica_rng(1, 1).random(4)
    c = replica_rng(1, 0, stream=7).random(4)
    assert not np.array_equal(a, b) and not np.array_equal(a, c)


def test_map_replicas_order():
    assert map_replicas(lambda r: r * r, [3, 1, 2], threads=2) == [9, 1, 4]
