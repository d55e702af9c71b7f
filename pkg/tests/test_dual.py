import math

import numpy as np
import pytest

from varfv.characteristics import (
    Characteristic,
    Drift,
    Event,
    PointMassList,
    sample_event_stream,
)
from varfv.dual import (
    CoalescentState,
    Environment,
    EnvironmentFormatError,
    build_environment,
    distinct_ancestors,
    dust_probability,
    environment_from_jsonl,
    environment_to_jsonl,
    moment_duality_stat,
    partition_product_expectation,
    trace_coupled,
    trace_quenched,
)
from varfv.forward import two_types
from varfv.library import mixed_product_characteristic, uniform_birth_characteristic
from varfv.lookdown import simulate_lookdown
from varfv.rng import derive_key


def make_env(times, zbars, n=1.0):
    """Environment with constant population size and prescribed impacts.

    With N_pre = N_post = n, an impact zbar corresponds to z_b = zbar * n
    and z_d = zbar (then (1-z_d)n + z_b = n exactly).
    """
    times = np.asarray(times, dtype=float)
    zbars = np.asarray(zbars, dtype=float)
    return Environment(
        gamma_d=0.0,
        gamma_b=0.0,
        n0=n,
        horizon=float(times[-1] + 1.0) if len(times) else 1.0,
        seed=0,
        times=times,
        z_d=zbars.copy(),
        z_b=zbars * n,
        n_pre=np.full(len(times), n),
        n_post=np.full(len(times), n),
        keys=np.arange(1, len(times) + 1, dtype=np.uint64),
    )


class TestTraceCoupled:
    def test_no_events_trivial_partition(self):
        c = Characteristic(Drift(1.0, 1.0))
        path = simulate_lookdown(c, 1.0, 8, two_types(0.5), 2.0, seed=1)
        tr = trace_coupled(path, 5)
        assert tr.final.y == 5
        assert tr.final.blocks == tuple(frozenset({i}) for i in range(1, 6))

    def test_six_level_event_inversion(self):
        # the worked insertion event J = {2,4,5}: tracing six lineages
        # backwards through it merges exactly those three into one block
        from varfv.lookdown import LookdownPath

        path = LookdownPath(
            n_levels=6,
            alphabet=("a",),
            init_codes=np.zeros(6, dtype=np.int64),
            final_codes=np.zeros(6, dtype=np.int64),
            final_labels=np.array([1, 2, 3, 2, 2, 4]),
            times=np.array([0.7]),
            z_d=np.array([0.3]),
            z_b=np.array([0.5]),
            zbar=np.array([0.4]),
            participants=[np.array([2, 4, 5])],
            n_before=np.array([1.0]),
            n_after=np.array([1.2]),
            n0=1.0,
            horizon=1.0,
            tau={},
            stopped_at=1.0,
        )
        tr = trace_coupled(path, 6)
        assert tr.final.y == 4
        assert frozenset({2, 4, 5}) in tr.final.blocks
        assert tr.y_pre.tolist() == [6] and tr.y_post.tolist() == [4]
        assert distinct_ancestors(path, 6) == 4

    def test_exact_match_with_forward_ancestries(self):
        c = mixed_product_characteristic()
        for r in range(150):
            stream = sample_event_stream(c, 3.0, derive_key(7, "exact", r))
            path = simulate_lookdown(c, 1.0, 32, two_types(0.5), 3.0, stream=stream)
            for y in (2, 5, 16, 32):
                assert trace_coupled(path, y).final.y == distinct_ancestors(path, y)

    def test_left_continuous_series(self):
        c = mixed_product_characteristic()
        path = simulate_lookdown(c, 1.0, 16, two_types(0.5), 6.0, seed=77)
        tr = trace_coupled(path, 16)
        assert tr.y_at(0.0) == 16
        for s, y_pre, y_post in zip(tr.backward_times, tr.y_pre, tr.y_post):
            assert tr.y_at(float(s)) == y_pre  # pre-merge value at the jump
            assert tr.y_at(float(s) + 1e-12) == y_post

    def test_sample_size_above_levels_rejected(self):
        c = Characteristic(Drift(1.0, 1.0))
        path = simulate_lookdown(c, 1.0, 4, two_types(0.5), 1.0, seed=1)
        with pytest.raises(ValueError):
            trace_coupled(path, 5)


class TestTraceQuenched:
    def test_no_impacts_no_merges(self):
        env = make_env([0.2, 0.5], [0.0, 0.0])
        tr = trace_quenched(env, 4, seed=1)
        assert tr.final.y == 4

    def test_full_impact_merges_everything(self):
        env = make_env([0.5], [1.0])
        tr = trace_quenched(env, 6, seed=2)
        assert tr.final.y == 1
        assert tr.final.blocks == (frozenset(range(1, 7)),)

    def test_pair_merge_probability(self):
        # two events of impact 1/2 and two lineages: each event merges the
        # pair with probability 1/4, so P(one block) = 1 - (3/4)^2 = 7/16
        env = make_env([0.3, 0.6], [0.5, 0.5])
        reps = 30_000
        merged = 0
        for r in range(reps):
            merged += trace_quenched(env, 2, seed=r).final.y == 1
        p_hat = merged / reps
        target = 7.0 / 16.0
        se = math.sqrt(target * (1 - target) / reps)
        assert abs(p_hat - target) < 3 * se

    def test_merges_reduce_count_by_participants_minus_one(self):
        env = make_env(np.linspace(0.1, 4.9, 25), np.full(25, 0.45))
        tr = trace_quenched(env, 12, seed=9)
        assert np.all(tr.y_pre - tr.y_post >= 1)
        assert np.all(np.diff(tr.y_post) <= 0)
        assert tr.final.y >= 1

    def test_left_continuity_convention(self):
        env = make_env([1.0], [1.0])
        tr = trace_quenched(env, 3, seed=0, horizon=2.0)
        s_event = 2.0 - 1.0
        assert tr.y_at(s_event) == 3  # pre-merge by left continuity
        assert tr.y_at(s_event + 1e-9) == 1


class TestEnvironment:
    def test_round_trip_bit_exact(self):
        c = mixed_product_characteristic()
        env = build_environment(c, 1.3, 7.0, 2024)
        text = environment_to_jsonl(env)
        env2 = environment_from_jsonl(text)
        assert environment_to_jsonl(env2) == text
        assert np.array_equal(env.n_post, env2.n_post)
        assert np.array_equal(env.keys, env2.keys)

    def test_corrupted_sizes_detected(self):
        import json

        c = mixed_product_characteristic()
        env = build_environment(c, 1.0, 5.0, 11)
        lines = environment_to_jsonl(env).splitlines()
        assert len(lines) > 2
        row = json.loads(lines[1])
        row["n_post"] = row["n_post"] * 1.5
        bad = json.dumps(row, sort_keys=True)
        with pytest.raises(EnvironmentFormatError, match="N_post|N_pre"):
            environment_from_jsonl("\n".join([lines[0], bad] + lines[2:]))

    def test_impact_identity_holds(self):
        c = uniform_birth_characteristic(1.0)
        env = build_environment(c, 1.0, 10.0, 5)
        direct = env.z_b / ((1.0 - env.z_d) * env.n_pre + env.z_b)
        assert np.array_equal(env.zbar(), direct)


class TestDust:
    def test_no_events_probability_one(self):
        assert dust_probability(make_env([], []), 1.0) == 1.0

    def test_two_half_impacts(self):
        assert dust_probability(make_env([0.2, 0.8], [0.5, 0.5]), 1.0) == pytest.approx(0.25)

    def test_full_impact_kills_dust(self):
        assert dust_probability(make_env([0.5], [1.0]), 1.0) == 0.0

    def test_time_restriction(self):
        env = make_env([0.5, 1.5], [0.5, 0.5])
        assert dust_probability(env, 1.0) == pytest.approx(0.5)

    def test_positive_without_full_replacement(self):
        c = uniform_birth_characteristic(1.0)
        for r in range(50):
            env = build_environment(c, 1.0, 3.0, derive_key(3, r))
            assert dust_probability(env, 3.0) > 0.0


class TestMomentDuality:
    def test_trivial_without_jumps(self):
        c = Characteristic(Drift(1.0, 1.0))
        st = moment_duality_stat(c, 0.3, 5, 2.0, 40, seed=1)
        assert st.lhs == pytest.approx(0.3**5, rel=1e-12)
        assert st.rhs == pytest.approx(0.3**5, rel=1e-12)

    def test_absorbing_frequencies(self):
        c = uniform_birth_characteristic(1.0)
        for x in (0.0, 1.0):
            st = moment_duality_stat(c, x, 3, 1.0, 60, seed=2)
            assert st.lhs == pytest.approx(x, abs=1e-12)
            assert st.rhs == pytest.approx(x, abs=1e-12)

    def test_small_scale_agreement(self):
        c = uniform_birth_characteristic(1.0)
        st = moment_duality_stat(c, 0.3, 5, 2.0, 4000, seed=3)
        assert st.gap < 3.0 * st.pooled_se, (st.lhs, st.rhs, st.pooled_se)


class TestPartitionFunctional:
    def test_indicator_reduces_to_moment_functional(self):
        rho0 = two_types(0.3)
        state = CoalescentState(
            (frozenset({1, 2}), frozenset({3}), frozenset({4, 5})), backward_time=1.0
        )
        gs = [lambda t: 1.0 if t == "a" else 0.0] * 5
        val = partition_product_expectation(state, gs, rho0)
        assert val == pytest.approx(0.3**3)

    def test_mixed_product_functions(self):
        rho0 = two_types(0.5)
        state = CoalescentState((frozenset({1, 2}), frozenset({3})), backward_time=0.0)
        gs = [
            lambda t: 1.0 if t == "a" else 0.0,
            lambda t: 0.5,
            lambda t: 2.0 if t == "A" else 1.0,
        ]
        # block {1,2}: E[g1 g2] = 0.5*0.5 ; block {3}: E[g3] = 1.5
        val = partition_product_expectation(state, gs, rho0)
        assert val == pytest.approx(0.25 * 1.5)
