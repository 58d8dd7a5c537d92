import random

from hypothesis import given, settings, strategies as st

from fuzz import NAMES, controller_sequence, link_sequence, transport_sequence
from tcpub.harness.metrics import goodput
from tcpub.harness.scenarios import ScenarioSpec, run_scenario

seeds = st.integers(0, 2**32 - 1)


@given(seeds, st.sampled_from(NAMES))
def test_controller_floors(seed, name):
    controller_sequence(random.Random(seed), name)


@given(seeds, st.sampled_from(NAMES))
def test_transport_window_and_floors(seed, name):
    transport_sequence(random.Random(seed), name)


@given(seeds)
def test_link_queue_cap(seed):
    link_sequence(random.Random(seed))


@settings(max_examples=6)
@given(st.sampled_from(["cwnd", "bandwidth", "goodput_static"]), st.sampled_from(NAMES),
       st.integers(0, 1000))
def test_short_run_invariants(scenario, name, seed):
    rep = run_scenario(ScenarioSpec(scenario, name, seed, {"sim.duration_s": 15.0}))
    f = rep.measured
    cums = [c for _, c in f.ack_log]
    assert cums == sorted(cums)
    assert len(f.deliver_times) <= f.unique_sent
    assert f.delivered_before_sent == 0
    assert f.window_violations == 0
    assert rep.max_queue <= 80
    assert goodput(rep, 0, 15.0) * 15.0 <= len(f.deliver_times) * 8000 + 1e-6
    assert goodput(rep, 0, 15.0) <= rep.bottleneck_bps
