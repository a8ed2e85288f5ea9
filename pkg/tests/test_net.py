"""Port queues, marking/drop outcomes, switch routing, mark counters."""

import pytest

from dccsim.engine import EventLoop, SEC
from dccsim.net import (DROPPED, ENQUEUED, MARKED, HEADER_BYTES, OutPort,
                        Packet, PROTO_TCP, PROTO_UDP, RoutingError, Switch)


def make_port(loop, capacity=100, threshold=20):
    p = OutPort(loop, 1_000_000_000, 25_000, capacity, threshold)
    p.attach(lambda pkt: None)
    return p


def fill(port, n, ect=False):
    """Force n packets into the queue (plus one in service)."""
    for i in range(n + 1):
        pkt = Packet("a", "b", PROTO_UDP, 1466, ect=ect)
        port.q.append(pkt)
    port.busy = True
    port.q.popleft()


def data_pkt(ect):
    return Packet("a", "b", PROTO_TCP, 1466, ect=ect)


def test_serialization_time_exact_ceil():
    loop = EventLoop()
    p = make_port(loop)
    assert p.ser_ns(1500) == 12_000          # 12000 bits at 1 Gb/s
    assert p.ser_ns(34) == 272
    odd = OutPort(loop, 999_999_999, 0, 10, 5)
    assert odd.ser_ns(1500) == 12_001        # rounded up


def test_enqueue_below_threshold_plain():
    loop = EventLoop()
    p = make_port(loop)
    fill(p, 10)
    pkt = data_pkt(ect=True)
    assert p.enqueue(pkt) == ENQUEUED
    assert not pkt.ce
    assert p.cum_marks == 0


def test_enqueue_at_threshold_marks_ect():
    loop = EventLoop()
    p = make_port(loop)
    fill(p, 25)
    pkt = data_pkt(ect=True)
    assert p.enqueue(pkt) == MARKED
    assert pkt.ce
    assert p.cum_marks == 1


def test_enqueue_at_threshold_drops_non_ect():
    loop = EventLoop()
    p = make_port(loop)
    fill(p, 25)
    pkt = data_pkt(ect=False)
    assert p.enqueue(pkt) == DROPPED
    assert not pkt.ce
    assert p.cum_drops == 1


def test_full_queue_drops_regardless_of_ect():
    loop = EventLoop()
    p = make_port(loop)
    fill(p, 100)
    assert p.enqueue(data_pkt(ect=True)) == DROPPED
    assert p.enqueue(data_pkt(ect=False)) == DROPPED
    assert p.cum_marks == 0


def test_ce_implies_ect():
    loop = EventLoop()
    p = make_port(loop)
    for occ in (0, 10, 21, 60):
        p.q.clear()
        p.busy = False
        fill(p, occ)
        pkt = data_pkt(ect=(occ % 2 == 0))
        p.enqueue(pkt)
        if pkt.ce:
            assert pkt.ect


def test_idle_port_serves_immediately_and_delivers():
    loop = EventLoop()
    p = OutPort(loop, 1_000_000_000, 25_000, 100, 20)
    got = []
    p.attach(lambda pkt: got.append(loop.now))
    pkt = Packet("a", "b", PROTO_TCP, 1466)
    assert p.enqueue(pkt) == ENQUEUED
    loop.run_until(1 * SEC)
    assert got == [12_000 + 25_000]
    assert p.cum_tx_bytes == 1500


def test_fifo_order_and_busy_chain():
    loop = EventLoop()
    p = OutPort(loop, 1_000_000_000, 0, 100, 200)
    got = []
    p.attach(lambda pkt: got.append(pkt.seq))
    for i in range(5):
        p.enqueue(Packet("a", "b", PROTO_TCP, 1466, seq=i))
    loop.run_until(1 * SEC)
    assert got == [0, 1, 2, 3, 4]
    assert not p.busy


def test_switch_routing_and_unroutable():
    loop = EventLoop()
    sw = Switch(loop, "sw0")
    got = []
    port = OutPort(loop, 1_000_000_000, 0, 100, 20)
    port.attach(lambda pkt: got.append(pkt.dst))
    idx = sw.add_port(port)
    sw.set_route("b", idx)
    sw.receive(Packet("a", "b", PROTO_TCP, 100))
    loop.run_until(1 * SEC)
    assert got == ["b"]
    with pytest.raises(RoutingError):
        sw.receive(Packet("a", "nowhere", PROTO_TCP, 100))


def test_read_marks_snapshot_semantics():
    loop = EventLoop()
    sw = Switch(loop, "sw0")
    for _ in range(4):
        p = OutPort(loop, 1_000_000_000, 0, 100, 20)
        p.attach(lambda pkt: None)
        sw.add_port(p)
    assert sw.read_marks() == (0, 0, 0, 0)
    fill(sw.ports[3], 25)
    for _ in range(12):
        sw.ports[3].enqueue(data_pkt(ect=True))
    assert sw.read_marks()[3] == 12
    # Two consecutive reads with no marking in between are identical.
    assert sw.read_marks() == sw.read_marks()


def test_mark_counter_equals_ce_added_by_queue():
    loop = EventLoop()
    p = OutPort(loop, 1_000_000_000, 0, 100, 5)
    delivered = []
    p.attach(lambda pkt: delivered.append(pkt))
    sent = []
    for i in range(50):
        pkt = Packet("a", "b", PROTO_TCP, 1466, seq=i, ect=True)
        sent.append(pkt)
        p.enqueue(pkt)
    loop.run_until(1 * SEC)
    ce_out = sum(1 for pkt in delivered if pkt.ce)
    assert p.cum_marks == ce_out
    assert len(delivered) + p.cum_drops == len(sent)


def test_header_constant():
    pkt = Packet("a", "b", PROTO_TCP, 1466)
    assert pkt.header_len == HEADER_BYTES == 34
    assert pkt.size == 1500
