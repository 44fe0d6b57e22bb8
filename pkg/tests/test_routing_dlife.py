import random

import pytest

from oppdtn.routing import DlifeAgent, DlifeContactError, RoutingMeta, should_replicate
from oppdtn.types import SimClock, node_eid

N0, N1, N2 = node_eid(0), node_eid(1), node_eid(2)


def agent(T=24, blend=True, damping=0.8):
    return DlifeAgent(N0, SimClock(samples_per_day=T), damping=damping, blend=blend)


class TestContactAccounting:
    def test_start_records_time(self):
        a = agent()
        a.contact_start(N1, 100.0)
        assert a.open_contacts[N1.uri] == 100.0

    def test_double_start_is_error(self):
        a = agent()
        a.contact_start(N1, 100.0)
        with pytest.raises(DlifeContactError):
            a.contact_start(N1, 150.0)

    def test_end_without_start_is_error(self):
        a = agent()
        with pytest.raises(DlifeContactError):
            a.contact_end(N1, 100.0)

    def test_single_sample_contact(self):
        a = agent()
        a.contact_start(N1, 100.0)
        a.contact_end(N1, 200.0)
        assert a.tct[N1.uri][0] == 100.0

    def test_contact_split_at_boundary(self):
        a = agent()
        a.contact_start(N1, 3000.0)
        a.contact_end(N1, 4000.0)
        assert a.tct[N1.uri][0] == 600.0
        assert a.tct[N1.uri][1] == 400.0

    def test_start_on_boundary_belongs_to_new_sample(self):
        a = agent()
        a.contact_start(N1, 3600.0)
        a.contact_end(N1, 3700.0)
        assert a.tct[N1.uri][0] == 0.0
        assert a.tct[N1.uri][1] == 100.0

    def test_midnight_crossing_with_roll(self):
        # contact [86000, 86800): the roll at 86400 banks 400 s into sample
        # 23 of day 1, the remainder lands in sample 0 of day 2
        a = agent()
        a.contact_start(N1, 86000.0)
        a.roll_sample(86400.0)
        assert a.ad[N1.uri][23] == 400.0
        assert a.open_contacts[N1.uri] == 86400.0
        a.contact_end(N1, 86800.0)
        assert a.tct[N1.uri][0] == 400.0

    def test_split_assigns_total_duration(self):
        rng = random.Random(5)
        for _ in range(100):
            a = agent()
            start = rng.uniform(0, 2 * 86400)
            length = rng.uniform(0, 86400)
            a.contact_start(N1, start)
            a.contact_end(N1, start + length)
            assert sum(a.tct[N1.uri]) == pytest.approx(length, abs=1e-9)


class TestSampleRoll:
    def test_first_day_equals_observation(self):
        a = agent()
        a.contact_start(N1, 0.0)
        a.contact_end(N1, 600.0)
        a.roll_sample(3600.0)
        assert a.ad[N1.uri][0] == 600.0
        assert a.tct[N1.uri][0] == 0.0
        assert a.days_completed[0] == 1

    def test_second_day_mean(self):
        a = agent()
        a.contact_start(N1, 0.0)
        a.contact_end(N1, 600.0)
        a.roll_sample(3600.0)
        a.roll_sample(86400.0 + 3600.0)  # same sample, next day, no contact
        assert a.ad[N1.uri][0] == 300.0  # mean of {600, 0}

    def test_third_day_mean(self):
        a = agent()
        day = 86400.0
        a.contact_start(N1, 0.0)
        a.contact_end(N1, 600.0)
        a.roll_sample(3600.0)
        a.roll_sample(day + 3600.0)
        a.contact_start(N1, 2 * day)
        a.contact_end(N1, 2 * day + 900.0)
        a.roll_sample(2 * day + 3600.0)
        assert a.ad[N1.uri][0] == 500.0  # mean of {600, 0, 900}

    def test_ad_is_brute_force_mean(self):
        # oracle: the plain arithmetic mean of per-day durations, zeros included
        rng = random.Random(77)
        for _ in range(50):
            k = rng.randint(1, 60)
            durations = [rng.uniform(0, 3600) if rng.random() < 0.7 else 0.0
                         for _ in range(k)]
            a = agent()
            for day, dur in enumerate(durations):
                t0 = day * 86400.0
                if dur > 0:
                    a.contact_start(N1, t0)
                    a.contact_end(N1, t0 + dur)
                a.roll_sample(t0 + 3600.0)
            oracle = sum(durations) / len(durations)
            assert a.ad[N1.uri][0] == pytest.approx(oracle, abs=1e-9)


class TestWeight:
    def test_all_zero(self):
        a = agent()
        assert a.weight(N1, 0.0) == 0.0

    def test_current_sample_full_factor(self):
        a = agent()
        a._tables_for(N1.uri)
        a.ad[N1.uri][5] = 1200.0
        assert a.weight(N1, 5 * 3600.0) == pytest.approx(1200.0)

    def test_blend_hand_value(self):
        a = agent(T=4)
        a._tables_for(N1.uri)
        a.ad[N1.uri] = [100.0, 40.0, 0.0, 8.0]
        # 100*1 + 40*(3/4) + 0*(2/4) + 8*(1/4) = 132
        assert a.weight(N1, 0.0) == pytest.approx(132.0)

    def test_blend_oracle_random(self):
        rng = random.Random(3)
        T = 24
        for _ in range(50):
            a = agent(T=T)
            a._tables_for(N1.uri)
            ad = [rng.uniform(0, 100) for _ in range(T)]
            a.ad[N1.uri] = list(ad)
            i = rng.randrange(T)
            oracle = sum(ad[(i + j) % T] * (T - j) / T for j in range(T))
            assert a.weight(N1, i * 3600.0) == pytest.approx(oracle, rel=1e-12)

    def test_blend_off_uses_current_sample(self):
        a = agent(blend=False)
        a._tables_for(N1.uri)
        a.ad[N1.uri][0] = 50.0
        a.ad[N1.uri][1] = 400.0
        assert a.weight(N1, 0.0) == 50.0
        assert a.weight(N1, 3600.0) == 400.0

    def test_unknown_dest_is_zero(self):
        a = agent()
        a._tables_for(N1.uri)
        a.ad[N1.uri][0] = 10.0
        assert a.weight(N2, 0.0) == 0.0


class TestImportance:
    def test_baseline_no_peers(self):
        assert agent().importance == pytest.approx(0.2)

    def test_one_peer(self):
        a = agent()
        a._tables_for(N1.uri)
        a.ad[N1.uri] = [0.0] * 24
        a.ad[N1.uri][0] = 1.0  # weight toward n01 is exactly 1.0 at sample 0
        a.peer_importance[N1.uri] = 0.2
        a._weights_cache = None
        a._recompute_importance(0.0)
        assert a.importance == pytest.approx(0.2 + 0.8 * (1.0 * 0.2))

    def test_two_peers_hand_value(self):
        a = agent()
        for peer, w, imp in ((N1, 1.0, 0.36), (N2, 0.5, 0.2)):
            a._tables_for(peer.uri)
            a.ad[peer.uri] = [0.0] * 24
            a.ad[peer.uri][0] = w
            a.peer_importance[peer.uri] = imp
        a._weights_cache = None
        a._recompute_importance(0.0)
        assert a.importance == pytest.approx(0.2 + 0.8 * (1.0 * 0.36 + 0.5 * 0.2))
        assert a.importance == pytest.approx(0.568)

    def test_absorb_meta_updates_cache_and_importance(self):
        a = agent()
        a._tables_for(N1.uri)
        a.ad[N1.uri] = [0.0] * 24
        a.ad[N1.uri][0] = 1.0
        a._weights_cache = None
        a.absorb_meta(N1, RoutingMeta("dlife", weights={}, importance=0.5), 0.0)
        assert a.peer_importance[N1.uri] == 0.5
        assert a.importance == pytest.approx(0.2 + 0.8 * 0.5)


class TestShouldReplicate:
    def meta(self, weights, importance):
        return RoutingMeta("dlife", weights=weights, importance=importance)

    def test_higher_weight_wins(self):
        mine = self.meta({"dtn://n02": 10.0}, 0.2)
        peer = self.meta({"dtn://n02": 12.0}, 0.2)
        assert should_replicate(mine, peer, N2) is True

    def test_tie_conserves(self):
        mine = self.meta({"dtn://n02": 5.0}, 0.2)
        peer = self.meta({"dtn://n02": 5.0}, 0.9)
        assert should_replicate(mine, peer, N2) is False

    def test_importance_fallback_strict(self):
        mine = self.meta({}, 0.3)
        peer = self.meta({}, 0.25)
        assert should_replicate(mine, peer, N2) is False
        assert should_replicate(peer, mine, N2) is True

    def test_fallback_only_when_both_zero(self):
        mine = self.meta({"dtn://n02": 1.0}, 0.1)
        peer = self.meta({}, 0.9)
        assert should_replicate(mine, peer, N2) is False

    def test_scale_invariance(self):
        rng = random.Random(9)
        for _ in range(100):
            wm, wp = rng.uniform(0, 10), rng.uniform(0, 10)
            im, ip = rng.uniform(0, 2), rng.uniform(0, 2)
            c = rng.uniform(0.01, 100)
            base = should_replicate(self.meta({"dtn://n02": wm}, im),
                                    self.meta({"dtn://n02": wp}, ip), N2)
            scaled = should_replicate(self.meta({"dtn://n02": wm * c}, im * c),
                                      self.meta({"dtn://n02": wp * c}, ip * c), N2)
            assert base == scaled


class TestDecay:
    def test_weights_decay_for_absent_neighbors(self):
        a = agent()
        a.contact_start(N1, 0.0)
        a.contact_end(N1, 1800.0)
        a.roll_sample(3600.0)
        w_fresh = a.weight(N1, 4000.0)
        for day in range(1, 8):
            a.roll_sample(day * 86400.0 + 3600.0)
        w_stale = a.weight(N1, 7 * 86400.0 + 4000.0)
        assert 0 < w_stale < w_fresh
