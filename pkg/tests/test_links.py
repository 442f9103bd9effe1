import pytest
from hypothesis import given, settings, strategies as st

from hybridsim.links import FluidLink, transmit_schedule

CLASSES = ["interactive", "data"]


def link(bw=50.0, delay=0.1, shares=None):
    return FluidLink(bw, delay, CLASSES, shares or {"interactive": 0.3, "data": 0.5})


def test_single_transfer_on_idle_link():
    out = transmit_schedule(link(), [(3.0, "a", 100.0, "data")])
    assert out["a"] == pytest.approx(3.0 + 2.1)


def test_two_equal_transfers_share_fairly():
    out = transmit_schedule(link(), [(0.0, "a", 100.0, "data"), (0.0, "b", 100.0, "data")])
    assert out["a"] == pytest.approx(4.1) and out["b"] == pytest.approx(4.1)


def test_priority_arrival_squeezes_low_class_to_its_guarantee():
    # low alone at 100 for 0.5 s (50 left); high then gets 50 + idle 30 = 80,
    # low keeps its 20: high done at 0.5 + 100/80, low finishes the last 25 at full rate
    lk = FluidLink(100.0, 0.0, ["hi", "lo"], {"hi": 0.5, "lo": 0.2})
    out = transmit_schedule(lk, [(0.0, "b", 100.0, "lo"), (0.5, "a", 100.0, "hi")])
    assert out["a"] == pytest.approx(1.75)
    assert out["b"] == pytest.approx(2.0)


def test_rates_follow_guarantees():
    lk = FluidLink(100.0, 0.0, ["hi", "lo"], {"hi": 0.5, "lo": 0.2})
    lk.add(0.0, "x", 10.0, "lo")
    assert lk.class_rates() == {"lo": 100.0}
    lk.add(0.0, "y", 10.0, "hi")
    assert lk.class_rates() == pytest.approx({"hi": 80.0, "lo": 20.0})
    lk.set_share(0.0, "lo", 0.5)
    assert lk.class_rates() == pytest.approx({"hi": 50.0, "lo": 50.0})


def test_rejects_bad_bandwidth():
    with pytest.raises(ValueError):
        FluidLink(0.0, 0.0, CLASSES, {})


transfers = st.lists(st.tuples(st.floats(0, 10), st.floats(0.1, 50), st.sampled_from(CLASSES)),
                     min_size=1, max_size=12)


@settings(max_examples=100)
@given(transfers)
def test_work_conservation(items):
    lk = FluidLink(20.0, 0.0, CLASSES, {"interactive": 0.3, "data": 0.5})
    arrivals = [(t, i, s, c) for i, (t, s, c) in enumerate(items)]
    out = transmit_schedule(lk, arrivals)
    assert set(out) == set(range(len(items)))
    for t, i, s, _ in arrivals:
        assert out[i] >= t + s / 20.0 - 1e-9  # never faster than the full link
    # busy time equals carried volume over bandwidth
    assert lk.busy_time == pytest.approx(sum(s for _, s, _ in items) / 20.0, rel=1e-9)
    assert max(out.values()) <= max(t for t, _, _ in items) + sum(s for _, s, _ in items) / 20 + 1e-9
