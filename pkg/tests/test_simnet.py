"""Latency model, message delivery, and per-context accounting."""
import heapq
import statistics

import pytest

from chainsim.identity import address_for
from chainsim.simnet import (
    BadSampleFile,
    LatencyMatrix,
    Network,
    UnknownAddress,
    build_latency_matrix,
    load_latency_samples,
)


class MiniClock:
    """Standalone heap scheduler for exercising the network in isolation."""

    def __init__(self):
        self.now = 0
        self._heap = []
        self._seq = 0

    def schedule_at(self, fire_time, fn):
        self._seq += 1
        heapq.heappush(self._heap, (fire_time, self._seq, fn))

    def run(self):
        while self._heap:
            self.now, _, fn = heapq.heappop(self._heap)
            fn()


def fixed_network(n: int, latency_ms: int) -> tuple[Network, MiniClock]:
    clock = MiniClock()
    matrix = build_latency_matrix(n, seed=0, samples=[float(latency_ms)])
    net = Network(matrix, clock=lambda: clock.now, schedule_at=clock.schedule_at,
                  addresses=[address_for(i) for i in range(n)])
    return net, clock


def test_matrix_is_symmetric_and_complete():
    matrix = build_latency_matrix(3, seed=1)
    assert len(matrix.values) == 3
    for a in range(3):
        for b in range(3):
            assert matrix.latency(a, b) == matrix.latency(b, a)
    assert matrix.latency(1, 1) == 0


def test_matrix_deterministic_per_seed():
    assert build_latency_matrix(10, seed=4).values == build_latency_matrix(10, seed=4).values
    assert build_latency_matrix(10, seed=4).values != build_latency_matrix(10, seed=5).values


def test_builtin_median_near_configured():
    # 142 nodes give 10011 pairwise draws
    matrix = build_latency_matrix(142, seed=2, median_ms=50.0)
    values = matrix.all_values()
    assert len(values) == 142 * 141 // 2
    assert abs(statistics.median(values) - 50.0) <= 5.0
    assert min(values) >= 5 and max(values) <= 300


def test_percentile_endpoints():
    matrix = LatencyMatrix(n=3, values={(0, 1): 10, (0, 2): 20, (1, 2): 30})
    assert matrix.percentile(0.0) == 10
    assert matrix.percentile(0.5) == 20
    assert matrix.percentile(1.0) == 30


def test_delivery_time_is_additive():
    net, clock = fixed_network(2, latency_ms=40)
    seen = []
    clock.schedule_at(100, lambda: net.send(
        address_for(0), address_for(1), "tag", 10, "ctx",
        handler=lambda env: seen.append(clock.now)))
    clock.run()
    assert seen == [140]


def test_unregistered_and_self_sends_rejected():
    net, _ = fixed_network(2, latency_ms=10)
    with pytest.raises(UnknownAddress):
        net.send(address_for(0), address_for(9), "tag", 1, None, None)
    with pytest.raises(ValueError):
        net.send(address_for(0), address_for(0), "tag", 1, None, None)


def test_context_counts_track_hops_and_reply():
    net, clock = fixed_network(5, latency_ms=10)
    path = [address_for(i) for i in range(5)]   # 4 inter-owner hops

    def reply():
        net.send(path[-1], path[0], "reply", 41, "ctx", handler=None)

    net.send_path(path, "route", 72, "ctx", on_done=reply)
    clock.run()
    counters = net.context_counters("ctx")
    assert counters.messages == 4 + 1
    assert counters.bytes == 4 * 72 + 41
    assert net.delivered_messages == 5
    net.check_accounting()


def test_single_owner_path_costs_nothing():
    net, clock = fixed_network(2, latency_ms=10)
    done = []
    net.send_path([address_for(0)], "route", 72, None, on_done=lambda: done.append(True))
    clock.run()
    assert done == [True]
    assert net.total_messages == 0


def test_accounting_totals_split_by_context():
    net, clock = fixed_network(3, latency_ms=10)
    net.send(address_for(0), address_for(1), "a", 5, "c1", None)
    net.send(address_for(1), address_for(2), "b", 7, None, None)
    clock.run()
    assert net.total_messages == 2
    assert net.uncontexted_messages == 1
    assert net.context_counters("c1").bytes == 5
    net.check_accounting()


def test_load_latency_samples_errors(tmp_path):
    good = tmp_path / "good.txt"
    good.write_text("10\n20.5\n\n30\n")
    assert load_latency_samples(str(good)) == [10.0, 20.5, 30.0]
    bad = tmp_path / "bad.txt"
    bad.write_text("10\nnope\n")
    with pytest.raises(BadSampleFile):
        load_latency_samples(str(bad))
    neg = tmp_path / "neg.txt"
    neg.write_text("-5\n")
    with pytest.raises(BadSampleFile):
        load_latency_samples(str(neg))
    empty = tmp_path / "empty.txt"
    empty.write_text("\n")
    with pytest.raises(BadSampleFile):
        load_latency_samples(str(empty))
