import pytest
from hypothesis import given, strategies as st

from tcpub.core import RttSample
from tcpub.estimator import BwEstimator, RttTracker, current_bwe, record_ack, rtt_update

US = 1_000_000


def feed_acks(est, n, acked=1, size=1040, interval_us=10_000, start=0):
    t = start
    for _ in range(n):
        est.record_ack(acked, size, t)
        t += interval_us
    return t


def test_one_length_step():
    est = BwEstimator(0.9)
    est.ack.avg_len_bits = 8000.0
    est.ack.samples = 2
    est.ack.avg_interval_s = 0.01
    est.last_ack_time = 0
    est.record_ack(1, 1040, 10_000)
    assert est.avg_pkt_len == pytest.approx(0.9 * 8000 + 0.1 * 8320)
    assert est.avg_pkt_len == pytest.approx(8032.0)


def test_one_interval_step():
    est = BwEstimator(0.9)
    est.ack.avg_len_bits = 8320.0
    est.ack.samples = 2
    est.ack.avg_interval_s = 0.10
    est.last_ack_time = 0
    est.record_ack(1, 1040, 200_000)
    assert est.avg_interval == pytest.approx(0.11)


def test_first_send_sets_length_only():
    est = BwEstimator()
    est.record_send(1040, 0)
    assert est.send.avg_len_bits == 8320
    assert est.send.samples == 1
    assert est.send.avg_interval_s == 0.0
    assert est.send_bwe() == 0.0


def test_two_segment_ack_sample_length():
    est = BwEstimator()
    est.record_ack(2, 1040, 0)
    assert est.avg_pkt_len == 16640


def test_fresh_estimator_is_zero():
    assert current_bwe(BwEstimator()) == 0.0


def test_rate_is_length_over_interval():
    est = BwEstimator()
    est.ack.avg_len_bits, est.ack.avg_interval_s, est.ack.samples = 8320.0, 0.01, 5
    assert est.current_bwe() == pytest.approx(832_000)
    est.ack.avg_len_bits, est.ack.avg_interval_s = 8032.0, 0.11
    assert est.current_bwe() == pytest.approx(8032 / 0.11)
    assert round(est.current_bwe()) == 73018


def test_converges_on_constant_stream():
    est = BwEstimator(0.9)
    feed_acks(est, 200)
    assert abs(est.current_bwe() - 832_000) / 832_000 < 0.01


def test_convergence_from_biased_start_is_geometric():
    # start 20% low on length; after n updates the error is 0.2 * 0.9**n
    est = BwEstimator(0.9)
    est.ack.avg_len_bits, est.ack.avg_interval_s, est.ack.samples = 0.8 * 8320, 0.01, 2
    est.last_ack_time = 0
    for k in range(1, 101):
        est.record_ack(1, 1040, k * 10_000)
    assert est.avg_pkt_len == pytest.approx(8320 * (1 - 0.2 * 0.9**100))


def test_zero_ack_rejected():
    with pytest.raises(ValueError):
        BwEstimator().record_ack(0, 1040, 0)


def test_timestamps_must_not_go_backwards():
    est = BwEstimator()
    est.record_ack(1, 1040, 100)
    with pytest.raises(ValueError):
        est.record_ack(1, 1040, 50)


def test_same_instant_acks_skip_interval():
    est = BwEstimator()
    est.record_ack(1, 1040, 0)
    est.record_ack(1, 1040, 10_000)
    before = (est.avg_pkt_len, est.avg_interval)
    est.record_ack(1, 1040, 10_000)
    assert (est.avg_pkt_len, est.avg_interval) == before


def test_functional_wrapper():
    est = record_ack(BwEstimator(), 1, 1040, 0)
    assert est.sample_count == 1


def test_bad_gain():
    with pytest.raises(ValueError):
        BwEstimator(1.0)


@given(st.lists(st.tuples(st.integers(1, 4), st.integers(1, 200_000)), min_size=2, max_size=60))
def test_bwe_nonnegative_and_bounded(events):
    est = BwEstimator()
    t = 0
    for acked, gap in events:
        t += gap
        est.record_ack(acked, 1040, t)
        assert est.current_bwe() >= 0
    # an average of lengths over an average of intervals never exceeds the
    # largest length over the smallest interval
    assert est.current_bwe() <= 4 * 8320 / (min(g for _, g in events[1:]) / US) + 1e-6


def test_rtt_first_sample():
    t = RttTracker()
    t.update(RttSample(0.1, 0))
    assert (t.base_rtt, t.srtt, t.rttvar) == (0.1, 0.1, 0.05)
    assert t.rto == pytest.approx(0.3)


def test_rtt_min_tracking():
    t = rtt_update(RttTracker(), RttSample(0.1, 0))
    t.update(RttSample(0.15, 1))
    assert t.base_rtt == 0.1
    t.update(RttSample(0.08, 2))
    assert t.base_rtt == 0.08
    assert t.rtt_min == 0.08


def test_rto_clamped_and_backoff_capped():
    t = RttTracker()
    t.update(RttSample(0.001, 0))
    assert t.rto == 0.2
    for _ in range(20):
        t.back_off()
    assert t.rto == 60.0
    t.update(RttSample(0.001, 1))
    assert t.backoff == 0


def test_rto_doubles():
    t = RttTracker()
    t.update(RttSample(0.1, 0))
    t.back_off()
    assert t.rto == pytest.approx(0.6)
    t.back_off()
    assert t.rto == pytest.approx(1.2)
