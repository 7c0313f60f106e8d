import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgempc.netsim import (
    BusClosedError, LatencyProfile, LinkRng, MessageBus, poll_deliveries, preset, publish,
    sample_delay,
)


def draws(profile, n, seed=0):
    rng = LinkRng(seed)
    return np.array([sample_delay(profile, rng) for _ in range(n)])


def test_degenerate_returns_mean_exactly():
    assert set(draws(LatencyProfile(14.2), 50)) == {14.2}
    assert set(draws(LatencyProfile(0.0), 10)) == {0.0}


def test_lognormal_mean_within_two_percent():
    d = draws(LatencyProfile.stochastic(9.5, jitter_std=2.0, spike_prob=0.0), 100_000, seed=3)
    assert abs(d.mean() - 9.5) / 9.5 < 0.02
    assert abs(d.std() - 2.0) / 2.0 < 0.05


def test_floor_is_respected():
    prof = LatencyProfile.stochastic(10.0, jitter_std=8.0, floor=6.0)
    assert draws(prof, 5000).min() >= 6.0


def test_spikes_scale_the_tail():
    base = LatencyProfile.stochastic(10.0, jitter_std=1.0, spike_prob=0.0)
    spiky = LatencyProfile.stochastic(10.0, jitter_std=1.0, spike_prob=0.2, spike_scale=5.0)
    a, b = draws(base, 20000), draws(spiky, 20000)
    assert (b > 30).mean() == pytest.approx(0.2, abs=0.02)
    assert (a > 30).mean() == 0


def test_same_seed_same_stream():
    prof = preset("profile-A")[0]
    np.testing.assert_array_equal(draws(prof, 500, seed=9), draws(prof, 500, seed=9))
    assert not np.array_equal(draws(prof, 500, seed=9), draws(prof, 500, seed=10))


@pytest.mark.parametrize("kw", [dict(mean=1.0, floor=2.0), dict(mean=-1.0),
                                dict(mean=1.0, jitter_std=-1), dict(mean=1.0, spike_prob=1.5),
                                dict(mean=1.0, spike_scale=0.5),
                                dict(mean=1.0, distribution="pareto")])
def test_profile_invariants(kw):
    with pytest.raises(ValueError):
        LatencyProfile(**kw)


def test_presets():
    up, down = preset("profile-A", degenerate=True)
    assert (up.mean, down.mean) == (14.2, 17.6)
    up, down = preset("profile-B")
    assert (up.mean, down.mean) == (9.5, 13.1)
    assert up.distribution == "lognormal-with-spikes"
    assert up.jitter_std == pytest.approx(0.25 * 9.5)
    assert (up.spike_prob, up.spike_scale) == (0.01, 5.0)
    assert preset("ideal")[0] == LatencyProfile(0.0)
    with pytest.raises(ValueError):
        preset("profile-C")


def test_zero_delay_delivers_now():
    bus = MessageBus()
    publish(bus, "odometry", "x", 2.5, LatencyProfile(0.0), LinkRng(0))
    (m,) = poll_deliveries(bus, "odometry", 2.5)
    assert m.t_deliver == 2.5 and m.delay_ms == 0.0


def test_delay_stamp_at_profile_a_mean():
    bus = MessageBus()
    publish(bus, "odometry", "x", 1.0, LatencyProfile(14.2), LinkRng(0))
    assert poll_deliveries(bus, "odometry", 1.0141) == []
    (m,) = poll_deliveries(bus, "odometry", 1.0142)
    assert m.t_deliver == pytest.approx(1.0142, abs=1e-15)
    assert m.delay_ms == 14.2


def test_fifo_clamp_when_later_message_is_faster():
    bus = MessageBus()
    rng = LinkRng(0)
    bus.publish("command", "a", 0.0, LatencyProfile(50.0), rng)
    bus.publish("command", "b", 0.01, LatencyProfile(5.0), rng)
    a, b = bus.poll("command", 1.0)
    assert (a.payload, b.payload) == ("a", "b")
    assert b.t_deliver >= a.t_deliver
    assert b.delay_ms == pytest.approx(40.0)


def test_poll_boundaries():
    bus = MessageBus()
    rng = LinkRng(0)
    for i, d in enumerate((5.0, 10.0, 20.0)):
        bus.publish("odometry", i, 0.0, LatencyProfile(d), rng)
    assert bus.poll("odometry", 0.004) == []
    assert [m.payload for m in bus.poll("odometry", 0.010)] == [0, 1]
    assert [m.seq for m in bus.poll("odometry", 10.0)] == [3]


def test_topics_are_independent():
    bus = MessageBus()
    rng = LinkRng(0)
    bus.publish("odometry", 1, 0.0, LatencyProfile(0.0), rng)
    bus.publish("command", 2, 0.0, LatencyProfile(0.0), rng)
    assert [m.payload for m in bus.poll("command", 0.0)] == [2]
    assert bus.in_flight("odometry") == 1


def test_closed_bus_rejects_publish():
    bus = MessageBus()
    bus.close()
    with pytest.raises(BusClosedError):
        bus.publish("odometry", 0, 0.0, LatencyProfile(0.0), LinkRng(0))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.floats(0, 0.2), min_size=1, max_size=60),
       st.floats(0, 0.5))
def test_bus_order_conservation_and_determinism(seed, gaps, horizon):
    prof = LatencyProfile.stochastic(20.0, spike_prob=0.2)

    def run():
        bus = MessageBus()
        rng = LinkRng(seed)
        now, out = 0.0, []
        for gap in gaps:
            now += gap
            bus.publish("command", None, now, prof, rng)
            out += bus.poll("command", now)
        out += bus.poll("command", now + horizon)
        return bus, out

    bus, out = run()
    seqs = [m.seq for m in out]
    assert seqs == sorted(seqs) == list(range(1, len(seqs) + 1))
    assert bus.published["command"] == len(out) + bus.in_flight("command")
    assert all(m.t_deliver >= m.t_published and m.delay_ms >= 0 for m in out)
    _, again = run()
    assert [(m.t_published, m.t_deliver) for m in again] == [(m.t_published, m.t_deliver)
                                                              for m in out]
