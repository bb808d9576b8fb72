import json
import math

import numpy as np
import pytest

from ewcast.channel import (
    DEFAULT_MCS_THRESHOLDS_DB,
    NetworkLayout,
    UserContext,
    bler,
    build_scenario,
    cqi_mcs,
    erasure_prob,
    hex_grid,
    load_scenario,
    n_hat,
    place_users,
    sfn_layout,
    single_cell_layout,
    sinr_at,
    source_elements,
    subframe_cap,
    tb_capacity,
)


class TestSourceElements:
    def test_exact_fit(self):
        assert source_elements(16384, 1.0, 16384) == 1

    def test_stream_a_layers(self):
        assert source_elements(47.3e3, 0.533, 16384) == 2
        assert source_elements(1396.7e3, 0.533, 16384) == 46

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            source_elements(0, 0.5, 16384)
        with pytest.raises(ValueError):
            source_elements(1e5, -1.0, 16384)


class TestTbCapacity:
    def test_table_endpoints(self):
        assert tb_capacity(4, 5) == 10
        assert tb_capacity(15, 5) == 360
        assert tb_capacity(4, 1) == 2  # smallest capacity: 2 per pair

    def test_strictly_increasing_in_mcs(self):
        caps = [tb_capacity(m, 3) for m in range(4, 16)]
        assert all(a < b for a, b in zip(caps, caps[1:]))

    def test_rejects_outside_table(self):
        for m in (0, 3, 16):
            with pytest.raises(ValueError):
                tb_capacity(m, 5)

    def test_smaller_elements_pack_more(self):
        assert tb_capacity(4, 5, element_bits=8192) == 20


class TestBudgets:
    def test_headroom_formula(self):
        assert n_hat(46, 0.1, 10) == 6  # 5 + 1
        assert n_hat(1, 0.1, 10) == 2   # 1 + 1

    def test_budget_covers_lossless_fit(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            k = int(rng.integers(1, 200))
            n_min = int(rng.integers(1, 20))
            assert n_hat(k, 0.1, n_min) >= math.ceil(k / n_min)

    def test_subframe_cap(self):
        assert subframe_cap(0.533) == 319
        assert subframe_cap(0.5) == 300


class TestGeometryAndSinr:
    def test_hex_grid_has_19_sites(self):
        sites = hex_grid(500.0)
        assert sites.shape == (19, 2)
        radii = np.linalg.norm(sites, axis=1)
        assert np.isclose(radii[0], 0.0)
        assert np.allclose(sorted(radii[1:7]), 500.0)

    def test_sc_and_sfn_serving_sets(self):
        sc = single_cell_layout()
        assert sc.serving == (0,) and len(sc.sites) == 19
        sfn = sfn_layout()
        assert len(sfn.serving) == 4 and len(sfn.sites) == 19

    def test_distance_doubling_drop(self):
        iso = NetworkLayout(mode="SC", sites=[(0.0, 0.0)], serving=(0,))
        drop = sinr_at(iso, (200.0, 0.0)) - sinr_at(iso, (400.0, 0.0))
        assert drop == pytest.approx(37.6 * math.log10(2), abs=1e-9)

    def test_two_member_combining_gain(self):
        two = NetworkLayout(mode="SFN", sites=[(0.0, 100.0), (0.0, -100.0)],
                            serving=(0, 1))
        one = NetworkLayout(mode="SC", sites=[(0.0, 100.0)], serving=(0,))
        gain = sinr_at(two, (150.0, 0.0)) - sinr_at(one, (150.0, 0.0))
        assert gain == pytest.approx(10 * math.log10(2), abs=1e-9)

    def test_mirror_symmetry(self):
        layout = NetworkLayout(mode="SC",
                               sites=[(0.0, 0.0), (300.0, 200.0), (300.0, -200.0)],
                               serving=(0,))
        assert sinr_at(layout, (100.0, 50.0)) == pytest.approx(
            sinr_at(layout, (100.0, -50.0)), abs=1e-12)

    def test_distance_floor_at_site(self):
        iso = NetworkLayout(mode="SC", sites=[(0.0, 0.0)], serving=(0,))
        assert sinr_at(iso, (0.0, 0.0)) == pytest.approx(sinr_at(iso, (35.0, 0.0)))

    def test_sfn_signal_at_least_best_member(self):
        # interference-free layouts: SINR is a pure signal-power readout
        members = sfn_layout().sites[:4]
        combined = NetworkLayout(mode="SFN", sites=members, serving=(0, 1, 2, 3))
        rng = np.random.default_rng(8)
        for _ in range(20):
            pos = rng.uniform(-400, 600, 2)
            best_solo = max(
                sinr_at(NetworkLayout(mode="SC", sites=members[[i]], serving=(0,)), pos)
                for i in range(4)
            )
            assert sinr_at(combined, pos) >= best_solo - 1e-9


class TestCqiAndErasure:
    def test_floor_and_ceiling(self):
        assert cqi_mcs(-60.0) == 1
        assert cqi_mcs(60.0) == 15

    def test_threshold_is_inclusive(self):
        for m in (4, 9, 15):
            assert cqi_mcs(DEFAULT_MCS_THRESHOLDS_DB[m]) == m

    def test_monotone_in_sinr(self):
        grid = np.linspace(-15, 25, 200)
        reports = [cqi_mcs(float(s)) for s in grid]
        assert all(a <= b for a, b in zip(reports, reports[1:]))

    def test_bler_anchor_and_monotonicity(self):
        assert bler(DEFAULT_MCS_THRESHOLDS_DB[9], 9) == pytest.approx(0.1)
        assert bler(-30.0, 9) == 1.0
        sweep = [bler(s, 7) for s in np.linspace(-10, 20, 50)]
        assert all(a >= b for a, b in zip(sweep, sweep[1:]))
        and_up = [bler(5.0, m) for m in range(1, 16)]
        assert all(a <= b for a, b in zip(and_up, and_up[1:]))

    def test_allocator_view_rule(self):
        user = UserContext((100.0, 0.0), 10.0, mcs_feedback=9)
        assert erasure_prob(user, 9, "allocator") == 0.1
        assert erasure_prob(user, 4, "allocator") == 0.1
        assert erasure_prob(user, 10, "allocator") == 1.0

    def test_evaluation_view_consistent_with_report(self):
        # reported MCS keeps the modeled loss at or below the anchor
        for sinr in (-3.0, 2.0, 7.5, 16.0):
            user = UserContext((0.0, 0.0), sinr, cqi_mcs(sinr))
            for m in range(1, user.mcs_feedback + 1):
                assert erasure_prob(user, m, "evaluation") <= 0.1 + 1e-12

    def test_rejects_unknown_view(self):
        user = UserContext((0.0, 0.0), 5.0, 8)
        with pytest.raises(ValueError):
            erasure_prob(user, 5, "guess")


class TestPlaceUsers:
    def test_radial_span(self):
        layout = single_cell_layout()
        users = place_users(layout, "radial", count=80, step_m=2.0, start_m=90.0)
        assert len(users) == 80
        d_first = np.hypot(*users[0].position)
        d_mid = np.hypot(*users[47].position)
        d_last = np.hypot(*users[-1].position)
        assert d_first == pytest.approx(90.0)
        assert d_mid == pytest.approx(90.0 + 47 * 2.0)
        assert d_last == pytest.approx(248.0)

    def test_single_user(self):
        layout = single_cell_layout()
        [user] = place_users(layout, "radial", count=1, step_m=2.0, start_m=90.0)
        assert np.hypot(*user.position) == pytest.approx(90.0)

    def test_grid_count_and_min_distance(self):
        layout = sfn_layout()
        users = place_users(layout, "grid", count=1700, step_m=20.0)
        assert len(users) == 1700
        pos = np.array([u.position for u in users])
        sample = pos[:: 40]
        dists = np.linalg.norm(sample[:, None, :] - pos[None, :, :], axis=2)
        dists[dists == 0] = np.inf
        assert dists.min() == pytest.approx(20.0)

    def test_invalid_pattern(self):
        with pytest.raises(ValueError):
            place_users(single_cell_layout(), "ring", count=3, step_m=1.0)


class TestScenario:
    CONFIG = {
        "mode": "SC",
        "stream_preset": "A",
        "n_rbp": 5,
        "users": {"pattern": "radial", "count": 16, "step_m": 10.0, "start_m": 90.0},
        "seed": 3,
    }

    def test_stream_a_segmentation_and_budget(self):
        scenario = build_scenario(self.CONFIG)
        assert scenario.layers.k == (2, 11, 46)
        assert scenario.layers.window_sizes == (2, 13, 59)
        assert scenario.tb_budget == (2, 3, 6)
        assert scenario.capacities[4] == 10

    def test_budget_respects_subframe_cap(self):
        config = dict(self.CONFIG)
        config["gop_seconds"] = 0.01  # cap floor(0.6 * 10) = 6
        scenario = build_scenario(config)
        assert all(b <= 6 for b in scenario.tb_budget)

    def test_digest_stable_and_sensitive(self):
        a = build_scenario(self.CONFIG).digest()
        b = build_scenario(self.CONFIG).digest()
        assert a == b
        changed = dict(self.CONFIG)
        changed["n_rbp"] = 4
        assert build_scenario(changed).digest() != a

    def test_json_round_trip(self, tmp_path):
        path = tmp_path / "scenario.json"
        path.write_text(json.dumps(self.CONFIG))
        scenario = load_scenario(path)
        assert scenario.layers.k == (2, 11, 46)
        assert len(scenario.users) == 16

    def test_shadow_fading_toggle(self):
        plain = build_scenario(self.CONFIG)
        shadowed = build_scenario({**self.CONFIG, "shadow_sigma_db": 6.0})
        assert any(
            abs(a.sinr_db - b.sinr_db) > 1e-6
            for a, b in zip(plain.users, shadowed.users)
        )
        again = build_scenario({**self.CONFIG, "shadow_sigma_db": 6.0})
        assert all(
            a.sinr_db == b.sinr_db for a, b in zip(shadowed.users, again.users)
        )

    def test_custom_threshold_table(self):
        # lifting every threshold by 6 dB lowers each user's reported MCS
        shifted = [DEFAULT_MCS_THRESHOLDS_DB[m] + 6.0 for m in range(1, 16)]
        config = {**self.CONFIG, "bler": {"thresholds_db": shifted}}
        base = build_scenario(self.CONFIG)
        harsh = build_scenario(config)
        assert all(
            h.mcs_feedback <= b.mcs_feedback
            for h, b in zip(harsh.users, base.users)
        )
        assert any(
            h.mcs_feedback < b.mcs_feedback
            for h, b in zip(harsh.users, base.users)
        )
