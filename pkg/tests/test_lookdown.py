import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varfv.characteristics import Characteristic, Drift, sample_event_stream
from varfv.forward import simulate_forward, two_types
from varfv.library import mixed_product_characteristic, uniform_birth_characteristic
from varfv.lookdown import (
    event_log_csv,
    mark_levels,
    quasi_fixation_time,
    simulate_lookdown,
    theta,
    theta_sources,
)
from varfv.rng import derive_key, event_keys, event_uniforms, make_generator
from varfv.stats import binomial_pit, uniform_chi2_pvalue


class TestMarkLevels:
    def test_full_impact_marks_all(self):
        assert list(mark_levels(np.array([0.1, 0.9, 0.5]), 1.0)) == [1, 2, 3]

    def test_zero_impact_marks_none(self):
        assert list(mark_levels(np.array([0.1, 0.9, 0.5]), 0.0)) == []

    def test_threshold_comparison(self):
        assert list(mark_levels(np.array([0.3, 0.7, 0.2]), 0.25)) == [3]

    @given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=30), st.floats(0.0, 1.0))
    @settings(max_examples=100, deadline=None)
    def test_matches_reference(self, us, zbar):
        got = list(mark_levels(np.array(us), zbar))
        want = [i + 1 for i, u in enumerate(us) if u <= zbar]
        assert got == want


def brute_theta(levels, k):
    """Insert copies of the lowest participant's value, truncate the tail."""
    if len(levels) <= 1:
        return list(k)
    parent = k[levels[0] - 1]
    out = list(k)
    for pos in levels[1:]:
        out.insert(pos - 1, parent)
    return out[: len(k)]


class TestTheta:
    def test_no_effect_for_single_participant(self):
        k = ("k1", "k2", "k3")
        assert theta(np.array([2]), k) == k
        assert theta(np.array([], dtype=int), k) == k

    def test_six_level_insertion(self):
        k = ("k1", "k2", "k3", "k4", "k5", "k6")
        assert theta(np.array([2, 4, 5]), k) == ("k1", "k2", "k3", "k2", "k2", "k4")

    def test_three_level_pair(self):
        assert theta(np.array([1, 2]), ("k1", "k2", "k3")) == ("k1", "k1", "k2")

    @given(st.integers(1, 14), st.data())
    @settings(max_examples=200, deadline=None)
    def test_matches_brute_force_insertion(self, n, data):
        subset = data.draw(
            st.lists(st.integers(1, n), unique=True, max_size=n).map(sorted)
        )
        k = [f"t{i}" for i in range(n)]
        got = theta(np.array(subset, dtype=int), k)
        assert got == brute_theta(subset, k)

    def test_componentwise_on_pairs(self):
        # applying theta to types and labels separately equals applying it
        # to the zipped pairs: labels travel with their particles
        n = 9
        j = np.array([3, 5, 8])
        types = np.arange(100, 100 + n)
        labels = np.arange(1, n + 1)
        pairs = [(int(t), int(l)) for t, l in zip(types, labels)]
        got_pairs = theta(j, pairs)
        assert [p[0] for p in got_pairs] == list(theta(j, types))
        assert [p[1] for p in got_pairs] == list(theta(j, labels))

    def test_prefix_stability(self):
        # positions below the action of J are untouched; J above m leaves
        # the first m coordinates alone unless it intersects them twice
        k = tuple(range(10))
        j = np.array([6, 9])
        assert theta(j, k)[:5] == k[:5]


class TestCombinatorialWeights:
    @pytest.mark.parametrize("n", [1, 2, 5, 10])
    @pytest.mark.parametrize("zbar", [0.0, 0.1, 0.5, 0.9, 1.0])
    def test_subset_weights_sum_to_one(self, n, zbar):
        total = 0.0
        for r in range(n + 1):
            total += math.comb(n, r) * zbar**r * (1.0 - zbar) ** (n - r)
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_explicit_enumeration_small(self):
        n, zbar = 4, 0.37
        total = sum(
            zbar ** len(j) * (1.0 - zbar) ** (n - len(j))
            for r in range(n + 1)
            for j in itertools.combinations(range(n), r)
        )
        assert total == pytest.approx(1.0, abs=1e-14)


class TestParticipationLaw:
    def test_pooled_binomial_chi2(self):
        # |J| over many events with recorded impacts is Binomial(n, zbar):
        # pooled through a randomized PIT, the transforms look uniform
        n = 12
        n_events = 100_000
        rng = make_generator(derive_key(99, "pit"))
        zbars = rng.random(n_events) * 0.9 + 0.05
        keys = event_keys(derive_key(99, "pit-keys"), n_events)
        counts = np.empty(n_events)
        for i in range(n_events):
            u = event_uniforms(int(keys[i]), n, offset=1)
            counts[i] = len(mark_levels(u, float(zbars[i])))
        pit = binomial_pit(counts, n, zbars, make_generator(derive_key(99, "pit-mix")))
        p = uniform_chi2_pvalue(pit, bins=20)
        assert p > 0.01, p


class TestSimulateLookdown:
    def test_without_jumps_types_constant(self):
        c = Characteristic(Drift(1.0, 1.0))
        path = simulate_lookdown(c, 1.0, 8, two_types(0.5), 5.0, seed=3)
        assert np.array_equal(path.final_codes, path.init_codes)
        assert np.array_equal(path.final_labels, np.arange(1, 9))

    def test_full_replacement_event(self):
        # a z_d = 1 event with z_b > 0 forces zbar = 1: every level takes
        # level 1's type and ancestry
        from varfv.characteristics import Event, PointMassList

        c = Characteristic(Drift(0.0, 0.0), PointMassList(((0.5, Event(1.0, 1.0)),)), balance_tol=10.0)
        for seed in range(10):
            path = simulate_lookdown(c, 1.0, 6, two_types(0.5), 10.0, seed=seed)
            if len(path.times) == 0:
                continue
            assert np.all(path.zbar == 1.0)
            assert np.all(path.final_labels == 1)
            assert np.all(path.final_codes == path.init_codes[0])

    def test_definetti_tracks_forward_frequency(self):
        c = uniform_birth_characteristic(1.0)
        reps = 800
        diffs = np.empty(reps)
        for r in range(reps):
            stream = sample_event_stream(c, 5.0, derive_key(1234, "df", r))
            ld = simulate_lookdown(c, 1.0, 64, two_types(0.5), 5.0, stream=stream)
            fw = simulate_forward(c, two_types(0.5), 5.0, stream=stream, grid=2)
            code_a = ld.alphabet.index("a")
            diffs[r] = (ld.final_codes == code_a).mean() - fw.w_grid[-1]
        se = diffs.std(ddof=1) / math.sqrt(reps)
        assert abs(diffs.mean()) <= 3.0 * se, (diffs.mean(), se)

    def test_consistency_in_level_count(self):
        c = mixed_product_characteristic()
        stream = sample_event_stream(c, 8.0, 99)
        init = two_types(0.4)
        big = simulate_lookdown(c, 1.0, 24, init, 8.0, stream=stream)
        small = simulate_lookdown(c, 1.0, 7, init, 8.0, stream=stream)
        assert np.array_equal(big.init_codes[:7], small.init_codes)
        assert np.array_equal(big.final_codes[:7], small.final_codes)
        assert np.array_equal(big.final_labels[:7], small.final_labels)

    def test_labels_only_coarsen(self):
        c = mixed_product_characteristic()
        path = simulate_lookdown(c, 1.0, 16, two_types(0.5), 10.0, seed=12)
        labels = np.arange(1, 17)
        seen = [set(labels.tolist())]
        for j in path.participants:
            if len(j) >= 2:
                src = theta_sources(j, 16)
                labels = labels[src]
                labels[j - 1] = labels[j[0] - 1]
                seen.append(set(labels.tolist()))
        for a, b in zip(seen, seen[1:]):
            assert b <= a  # ancestor label sets never grow

    def test_n_track_matches_popsize(self):
        from varfv.popsize import simulate_pop

        c = mixed_product_characteristic()
        stream = sample_event_stream(c, 6.0, 5)
        ld = simulate_lookdown(c, 1.0, 4, two_types(0.5), 6.0, stream=stream)
        pp = simulate_pop(c, 1.0, 6.0, stream=stream)
        assert np.array_equal(ld.n_after, pp.n_after)


class TestQuasiFixation:
    def test_single_level_is_zero(self):
        c = uniform_birth_characteristic(1.0)
        path = simulate_lookdown(c, 1.0, 3, two_types(0.5), 1.0, seed=1, track_tau=(1,))
        assert path.tau[1] == 0.0
        assert quasi_fixation_time(path, 1) == 0.0

    def test_full_replacement_fixes_everyone(self):
        from varfv.characteristics import Event, PointMassList

        c = Characteristic(Drift(0.0, 0.0), PointMassList(((1.0, Event(1.0, 1.0)),)), balance_tol=10.0)
        path = simulate_lookdown(c, 1.0, 5, two_types(0.5), 50.0, seed=4, track_tau=(2, 5))
        first = float(path.times[0])
        assert path.tau[2] == pytest.approx(first)
        assert path.tau[5] == pytest.approx(first)

    def test_replay_matches_tracked(self):
        c = uniform_birth_characteristic(1.0)
        path = simulate_lookdown(c, 1.0, 6, two_types(0.5), 60.0, seed=21, track_tau=(4,))
        assert quasi_fixation_time(path, 4) == path.tau[4]

    def test_not_reached_marker(self):
        c = uniform_birth_characteristic(1.0)
        path = simulate_lookdown(c, 1.0, 6, two_types(0.5), 0.01, seed=2)
        assert math.isinf(quasi_fixation_time(path, 6))

    def test_exceeding_levels_rejected(self):
        c = uniform_birth_characteristic(1.0)
        path = simulate_lookdown(c, 1.0, 3, two_types(0.5), 1.0, seed=1)
        with pytest.raises(ValueError):
            quasi_fixation_time(path, 7)


def test_event_log_csv():
    c = mixed_product_characteristic()
    path = simulate_lookdown(c, 1.0, 5, two_types(0.5), 6.0, seed=8)
    text = event_log_csv(path)
    lines = text.strip().split("\n")
    assert lines[0] == "t,z_d,z_b,zbar,J"
    assert len(lines) == 1 + len(path.times)
    # participating levels are semicolon-joined in the last column
    for i, ln in enumerate(lines[1:]):
        j_field = ln.split(",")[4]
        expect = ";".join(str(int(x)) for x in path.participants[i])
        assert j_field == expect
