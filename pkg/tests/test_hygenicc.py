"""Distributed hypervisor shim: bucket law, feedback plumbing, timer updates."""

import pytest

from dccsim.engine import EventLoop, MS, SEC, US
from dccsim.hygenicc import FEEDBACK_WIRE_BYTES, HygeniccShim, encode_feedback_wire
from dccsim.net import Packet, PROTO_FEEDBACK, PROTO_TCP, PROTO_UDP


class FakeHost:
    def __init__(self, name="h0"):
        self.name = name
        self.injected = []

    def inject(self, pkt):
        self.injected.append(pkt)


def make_shim(loop=None, cap=1_000_000_000, **kw):
    loop = loop or EventLoop()
    host = FakeHost()
    shim = HygeniccShim(loop, host, cap, **kw)
    return loop, host, shim


def data(src, dst, payload=1466, proto=PROTO_TCP):
    return Packet(src, dst, proto, payload)


class TestEgress:
    def test_transmit_deducts_and_sets_ect(self):
        loop, host, shim = make_shim()
        pkt = data("a", "b")
        assert shim.egress(pkt)
        assert pkt.ect
        rec = shim.vms["a"]
        assert rec.bucket.senttime == 0
        entry = shim.entries[("a", "b")]
        assert entry.out_packet_count == 1

    def test_drop_when_tokens_insufficient(self):
        loop, host, shim = make_shim()
        shim.egress(data("a", "b"))  # creates state
        rec = shim.vms["a"]
        rec.bucket.tokens_bytes = 1000
        pkt = data("a", "b")
        assert not shim.egress(pkt)

    def test_replenish_exactness_through_shim(self):
        loop, host, shim = make_shim()
        shim.egress(data("a", "b"))
        rec = shim.vms["a"]
        rec.bucket.rate_bps = 250_000_000
        rec.bucket.tokens_nb = 0
        rec.bucket.last_refill = loop.now
        loop.run_until(48 * US)
        rec.bucket.refill(loop.now)
        assert rec.bucket.tokens_bytes == 1500.0

    def test_reflection_marks_departing_packet(self):
        loop, host, shim = make_shim()
        # Inbound flow b->a accumulated 3 unreflected marks.
        for _ in range(3):
            pkt = data("b", "a")
            pkt.ce = True
            pkt.ect = True
            shim.ingress(pkt)
        assert shim.entries[("b", "a")].ecnmarks == 3
        first = data("a", "b")
        second = data("a", "b")
        shim.egress(first)
        shim.egress(second)
        assert first.ipr and second.ipr
        assert shim.entries[("b", "a")].ecnmarks == 1

    def test_no_pending_marks_leaves_packet_untouched(self):
        loop, host, shim = make_shim()
        pkt = data("a", "b")
        shim.egress(pkt)
        assert not pkt.ipr


class TestIngress:
    def test_feedback_accumulates_and_is_consumed(self):
        loop, host, shim = make_shim()
        fb = Packet("b", "a", PROTO_FEEDBACK, 2)
        fb.mark_count = 7
        assert shim.ingress(fb) is None
        e = shim.entries[("a", "b")]
        assert e.feedback == 7
        assert e.rbdetected

    def test_malformed_feedback_discarded(self):
        loop, host, shim = make_shim()
        fb = Packet("b", "a", PROTO_FEEDBACK, 5)
        fb.mark_count = 3
        assert shim.ingress(fb) is None
        assert shim.malformed_feedback == 1
        assert ("a", "b") not in shim.entries

    def test_ipr_ack_counts_and_clears(self):
        loop, host, shim = make_shim()
        ack = Packet("b", "a", PROTO_TCP, 0)
        ack.ack = 100
        ack.ipr = True
        out = shim.ingress(ack)
        assert out is ack and not out.ipr
        e = shim.entries[("a", "b")]
        assert e.feedback == 1
        assert e.ipr_packet_count == 1

    def test_ce_counted_and_cleared_before_delivery(self):
        loop, host, shim = make_shim()
        pkt = data("b", "a")
        pkt.ect = True
        pkt.ce = True
        out = shim.ingress(pkt)
        assert out is pkt and not out.ce
        e = shim.entries[("b", "a")]
        assert e.ecnmarks == 1
        assert e.ecn_packet_count == 1

    def test_unmarked_packet_no_state_change(self):
        loop, host, shim = make_shim()
        pkt = data("b", "a")
        shim.ingress(pkt)
        e = shim.entries[("b", "a")]
        assert e.ecnmarks == 0 and e.feedback == 0


class TestExplicitFeedback:
    def test_feedback_emitted_after_timeout_with_pending_marks(self):
        loop, host, shim = make_shim()
        pkt = data("b", "a", proto=PROTO_UDP)
        pkt.ect, pkt.ce = True, True
        shim.ingress(pkt)
        for _ in range(2):
            pkt = data("b", "a", proto=PROTO_UDP)
            pkt.ect, pkt.ce = True, True
            shim.ingress(pkt)
        assert shim.entries[("b", "a")].ecnmarks == 3
        loop.run_until(500 * US)
        trigger = data("b", "a", proto=PROTO_UDP)
        shim.ingress(trigger)
        assert len(host.injected) == 1
        fb = host.injected[0]
        assert fb.proto == PROTO_FEEDBACK
        assert fb.mark_count == 3
        assert (fb.src, fb.dst) == ("a", "b")
        assert fb.header_len + fb.payload_len == 36
        assert shim.entries[("b", "a")].ecnmarks == 0

    def test_one_way_flow_drains_only_via_feedback(self):
        loop, host, shim = make_shim()
        total = 0
        for burst in range(3):
            for _ in range(4):
                pkt = data("b", "a", proto=PROTO_UDP)
                pkt.ect, pkt.ce = True, True
                shim.ingress(pkt)
                total += 1
            loop.run_until(loop.now + 600 * US)
            shim.ingress(data("b", "a", proto=PROTO_UDP))
        drained = sum(p.mark_count for p in host.injected)
        remaining = shim.entries[("b", "a")].ecnmarks
        assert drained + remaining == total
        assert shim.ipr_sent == 0

    def test_wire_encoding_is_36_bytes(self):
        loop, host, shim = make_shim()
        pkt = data("b", "a", proto=PROTO_UDP)
        pkt.ect, pkt.ce = True, True
        shim.ingress(pkt)
        loop.run_until(1 * MS)
        shim.ingress(data("b", "a", proto=PROTO_UDP))
        frame = encode_feedback_wire(host.injected[0])
        assert len(frame) == FEEDBACK_WIRE_BYTES == 36
        assert frame[23] == 253                      # IP protocol field
        assert int.from_bytes(frame[34:36], "big") == 1


class TestTimer:
    def test_decrement_example(self):
        loop, host, shim = make_shim()
        shim.egress(data("a", "b"))
        rec = shim.vms["a"]
        rec.bucket.rate_bps = 250_000_000
        e = shim.entries[("a", "b")]
        e.feedback = 4
        e.rbdetected = True
        e.feedbacktime = loop.now
        shim._on_tick()
        # 250 Mb/s - 4 * 8 Mb/s = 218 Mb/s.
        assert rec.bucket.rate_bps == 218_000_000
        assert e.feedback == 0

    def test_clamped_at_capacity_share(self):
        loop, host, shim = make_shim()
        shim.egress(data("a", "b"))
        rec = shim.vms["a"]
        e = shim.entries[("a", "b")]
        e.rbdetected = True
        e.feedback = 0
        e.feedbacktime = loop.now
        rec.bucket.rate_bps = rec.share_bps
        shim._on_tick()
        assert rec.bucket.rate_bps == rec.share_bps

    def test_huge_feedback_cut_bounded_at_halving(self):
        loop, host, shim = make_shim()
        shim.egress(data("a", "b"))
        rec = shim.vms["a"]
        e = shim.entries[("a", "b")]
        e.feedback = 10 ** 6
        e.rbdetected = True
        e.feedbacktime = loop.now
        before = rec.bucket.rate_bps
        shim._on_tick()
        assert rec.bucket.rate_bps == before // 2
        # Sustained feedback keeps halving toward zero.
        for _ in range(40):
            e.feedback = 10 ** 6
            e.rbdetected = True
            e.feedbacktime = loop.now
            shim._on_tick()
        assert rec.bucket.rate_bps < 1466 * 8

    def test_fast_increase_when_no_congestion_detected(self):
        loop, host, shim = make_shim(k_fast=5)
        shim.egress(data("a", "b"))
        rec = shim.vms["a"]
        rec.bucket.rate_bps = 100_000_000
        e = shim.entries[("a", "b")]
        e.rbdetected = False
        shim._on_tick()
        assert rec.bucket.rate_bps == 100_000_000 + 5 * 8_000_000

    def test_conservative_increase_when_detected_but_quiet(self):
        loop, host, shim = make_shim()
        shim.egress(data("a", "b"))
        rec = shim.vms["a"]
        rec.bucket.rate_bps = 100_000_000
        e = shim.entries[("a", "b")]
        e.rbdetected = True
        e.feedback = 0
        e.feedbacktime = loop.now
        shim._on_tick()
        assert rec.bucket.rate_bps == 108_000_000

    def test_congestion_timeout_clears_rbdetected(self):
        loop, host, shim = make_shim()
        shim.egress(data("a", "b"))
        e = shim.entries[("a", "b")]
        e.rbdetected = True
        e.feedbacktime = 0
        loop.run_until(6 * MS)
        shim._on_tick()
        assert not e.rbdetected

    def test_idle_vm_reclaimed_and_shares_redistributed(self):
        loop, host, shim = make_shim()
        shim.timer.stop()  # drive ticks manually
        shim.egress(data("a", "x"))
        shim.egress(data("b", "x"))
        shim.egress(data("c", "x"))
        assert shim.vms["a"].share_bps == pytest.approx(333_333_333, abs=2)
        # a goes idle; b and c keep sending.
        loop.run_until(1 * SEC + 200 * MS)
        shim.vms["b"].last_activity = loop.now
        shim.vms["c"].last_activity = loop.now
        shim._on_tick()
        assert "a" not in shim.vms
        assert shim.vms["b"].share_bps == 500_000_000
        assert shim.vms["c"].share_bps == 500_000_000

    def test_share_sum_invariant_under_churn(self):
        loop, host, shim = make_shim()
        cap = shim.nic_cap_bps
        import random
        rng = random.Random(42)
        vms = [f"v{i}" for i in range(8)]
        for step in range(50):
            vm = rng.choice(vms)
            if vm in shim.vms and rng.random() < 0.4:
                shim.vms[vm].last_activity = -(2 * SEC)
                shim._on_tick()
            else:
                shim.egress(data(vm, "x"))
            if shim.vms:
                assert sum(r.share_bps for r in shim.vms.values()) == \
                    pytest.approx(cap, rel=1e-6)


class TestMarkConservation:
    def test_identity_over_mixed_traffic(self):
        loop, host, shim = make_shim()
        import random
        rng = random.Random(7)
        marks_in = 0
        for i in range(500):
            pkt = data("b", "a", proto=PROTO_UDP)
            pkt.ect = True
            if rng.random() < 0.3:
                pkt.ce = True
                marks_in += 1
            shim.ingress(pkt)
            if rng.random() < 0.2:
                out = data("a", "b", proto=PROTO_UDP)
                shim.egress(out)
            loop.run_until(loop.now + rng.randrange(1, 300) * US)
        drained = sum(p.mark_count for p in host.injected)
        assert marks_in == shim.ipr_sent + drained + shim.pending_marks()
