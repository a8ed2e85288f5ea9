"""Centralized variant: shim rate laws, controller learning and apportionment."""


from dccsim.engine import EventLoop, MS, US
from dccsim.net import Packet, PROTO_CTRLMSG, PROTO_TCP
from dccsim.sdngcc import (CTRLMSG_WIRE_BYTES, SdngccController, SdngccShim,
                           encode_ctrlmsg_wire)

T_I = 5 * MS


class FakeHost:
    def __init__(self, name="h0"):
        self.name = name
        self.received = []

    def receive(self, pkt):
        self.received.append(pkt)


def make_shim(loop=None, cap=1_000_000_000, **kw):
    loop = loop or EventLoop()
    host = FakeHost()
    shim = SdngccShim(loop, host, cap, monitor_interval_ns=T_I, **kw)
    return loop, host, shim


def data(src, dst):
    return Packet(src, dst, PROTO_TCP, 1466)


def ctrlmsg(src_of_dst, target_vm, marks):
    msg = Packet(src_of_dst, target_vm, PROTO_CTRLMSG, 2)
    msg.mark_count = marks
    return msg


class TestShim:
    def test_four_vms_split_equal_shares(self):
        loop, host, shim = make_shim()
        for vm in ("a", "b", "c", "d"):
            shim.egress(data(vm, "x"))
        for vm in ("a", "b", "c", "d"):
            assert shim.vms[vm].share_bps == 250_000_000

    def test_transmit_sets_ect_and_tracks_sent_time(self):
        loop, host, shim = make_shim()
        pkt = data("a", "x")
        assert shim.egress(pkt)
        assert pkt.ect
        assert shim.vms["a"].sent_time == loop.now

    def test_drop_without_tokens(self):
        loop, host, shim = make_shim()
        shim.egress(data("a", "x"))
        shim.vms["a"].bucket.tokens_bytes = 10
        assert not shim.egress(data("a", "x"))

    def test_decrement_example(self):
        loop, host, shim = make_shim()
        shim.timer.stop()
        shim.egress(data("a", "x"))
        st = shim.vms["a"]
        st.bucket.rate_bps = 250_000_000
        loop.run_until(loop.now + T_I)
        st.cong_time = loop.now - T_I       # one monitor interval elapsed
        shim.ingress(ctrlmsg("x", "a", 4))
        assert st.bucket.rate_bps == 218_000_000
        assert st.cong_detected

    def test_decrement_floored_at_rmin(self):
        loop, host, shim = make_shim()
        shim.egress(data("a", "x"))
        st = shim.vms["a"]
        st.bucket.rate_bps = 12_000_000
        st.r_min_bps = 10_000_000
        st.cong_time = loop.now
        shim.ingress(ctrlmsg("x", "a", 4))   # wants -32 Mb/s
        assert st.bucket.rate_bps == 10_000_000

    def test_rmin_is_one_percent_of_share(self):
        loop, host, shim = make_shim()
        shim.egress(data("a", "x"))
        assert shim.vms["a"].r_min_bps == 10_000_000

    def test_ctrlmsg_never_reaches_vm(self):
        loop, host, shim = make_shim()
        shim.egress(data("a", "x"))
        assert shim.ingress(ctrlmsg("x", "a", 4)) is None

    def test_zero_mark_ctrlmsg_is_noop(self):
        loop, host, shim = make_shim()
        shim.egress(data("a", "x"))
        r = shim.vms["a"].bucket.rate_bps
        shim.ingress(ctrlmsg("x", "a", 0))
        assert shim.vms["a"].bucket.rate_bps == r
        assert not shim.vms["a"].cong_detected

    def test_lazy_state_for_inactive_vm(self):
        loop, host, shim = make_shim()
        shim.ingress(ctrlmsg("x", "zz", 5))
        assert not shim.vms["zz"].active
        assert shim.vms["zz"].pending_marks == 5
        shim.egress(data("zz", "x"))
        st = shim.vms["zz"]
        assert st.active
        assert st.bucket.rate_bps == st.share_bps - 5 * 8_000_000

    def test_ce_cleared_on_delivery_when_enabled(self):
        loop, host, shim = make_shim()
        pkt = data("x", "a")
        pkt.ect = pkt.ce = True
        out = shim.ingress(pkt)
        assert not out.ce
        assert shim.marks_cleared == 1

    def test_ce_preserved_when_clearing_disabled(self):
        loop, host, shim = make_shim(clear_marks=False)
        pkt = data("x", "a")
        pkt.ect = pkt.ce = True
        out = shim.ingress(pkt)
        assert out.ce

    def test_recovery_conservative_then_clamped(self):
        loop, host, shim = make_shim()
        shim.timer.stop()
        shim.egress(data("a", "x"))
        st = shim.vms["a"]
        st.bucket.rate_bps = 218_000_000
        st.share_bps = 250_000_000
        st.cong_detected = True
        st.cong_time = loop.now
        st.sent_time = loop.now
        shim._on_tick()
        assert st.bucket.rate_bps == 226_000_000
        st.bucket.rate_bps = st.share_bps
        shim._on_tick()
        assert st.bucket.rate_bps == st.share_bps

    def test_fast_recovery_after_grace_expires(self):
        loop, host, shim = make_shim(k_fast=5)
        shim.timer.stop()
        shim.egress(data("a", "x"))
        st = shim.vms["a"]
        st.share_bps = 1_000_000_000
        st.bucket.rate_bps = 100_000_000
        st.cong_detected = True
        st.cong_time = loop.now
        st.sent_time = loop.now
        loop.run_until(loop.now + 2 * shim.t_c_ns)
        st.sent_time = loop.now
        shim._on_tick()
        assert not st.cong_detected
        assert st.bucket.rate_bps == 100_000_000 + 5 * 8_000_000

    def test_idle_vm_reclaimed_shares_regrow(self):
        loop, host, shim = make_shim()
        shim.timer.stop()
        for vm in ("a", "b", "c", "d"):
            shim.egress(data(vm, "x"))
        loop.run_until(loop.now + shim.t_o_ns + MS)
        for vm in ("a", "b"):
            shim.vms[vm].sent_time = loop.now
        shim._on_tick()
        active = [v for v, s in shim.vms.items() if s.active]
        assert active == ["a", "b"]
        assert shim.vms["a"].share_bps == 500_000_000

    def test_convergence_bound_with_notifications_silenced(self):
        loop, host, shim = make_shim()
        shim.timer.stop()
        shim.egress(data("a", "x"))
        st = shim.vms["a"]
        st.bucket.rate_bps = st.r_min_bps
        st.cong_detected = False
        bound = -(-(st.share_bps - st.r_min_bps) // shim.scale_bps)
        ticks = 0
        while st.bucket.rate_bps < st.share_bps and ticks <= bound:
            shim._on_tick()
            ticks += 1
        assert st.bucket.rate_bps == st.share_bps
        assert ticks <= bound

    def test_rate_never_exceeds_share_nor_drops_below_rmin(self):
        loop, host, shim = make_shim()
        shim.timer.stop()
        import random
        rng = random.Random(3)
        shim.egress(data("a", "x"))
        st = shim.vms["a"]
        for _ in range(200):
            if rng.random() < 0.5:
                shim.ingress(ctrlmsg("x", "a", rng.randrange(1, 50)))
            else:
                st.sent_time = loop.now
                shim._on_tick()
            assert st.r_min_bps <= st.bucket.rate_bps <= st.share_bps
            loop.run_until(loop.now + rng.randrange(1, T_I))


class FakeSwitch:
    def __init__(self, name, n_ports):
        self.name = name
        self.marks = [0] * n_ports
        self.pair_last_seen = {}
        self.packet_in_cb = None

    def read_marks(self):
        return tuple(self.marks)


def make_controller(n_ports=5):
    loop = EventLoop()
    sw = FakeSwitch("sw0", n_ports)
    hosts = {}
    ctrl = SdngccController(loop, [sw], hosts, monitor_interval_ns=T_I,
                            control_delay_ns=250 * US)
    return loop, sw, hosts, ctrl


def settle(loop):
    loop.run_until(loop.now + MS)


class TestController:
    def test_learning_first_packet(self):
        loop, sw, hosts, ctrl = make_controller()
        ctrl._packet_in(sw, "A", "D", 5, 1)
        settle(loop)
        assert ctrl.dstsrc == {"D": {"A": True}}
        assert ctrl.iptoport["A"] == ("sw0", 5)
        assert ctrl.iptoport["D"] == ("sw0", 1)
        assert ctrl.timer is not None

    def test_multimap_accumulates_sources(self):
        loop, sw, hosts, ctrl = make_controller()
        ctrl._packet_in(sw, "A", "D", 5, 1)
        ctrl._packet_in(sw, "A", "D", 5, 1)
        ctrl._packet_in(sw, "B", "D", 4, 1)
        settle(loop)
        assert list(ctrl.dstsrc["D"]) == ["A", "B"]

    def test_alpha_is_new_minus_old_and_messages_emitted(self):
        loop, sw, hosts, ctrl = make_controller()
        for vm, port in (("A", 2), ("B", 3), ("C", 4)):
            ctrl._packet_in(sw, vm, "D", port, 1)
        settle(loop)
        hosts.update({v: FakeHost(v) for v in ("A", "B", "C")})
        sw.marks[1] = 12
        ctrl._on_monitor()
        loop.run_until(loop.now + MS)
        for v in ("A", "B", "C"):
            msgs = hosts[v].received
            assert len(msgs) == 1
            assert msgs[0].mark_count == 4            # ceil(12 / 3)
            assert msgs[0].proto == PROTO_CTRLMSG
            assert (msgs[0].src, msgs[0].dst) == ("D", v)
        # Second poll without new marks: silence.
        ctrl._on_monitor()
        loop.run_until(loop.now + MS)
        assert all(len(hosts[v].received) == 1 for v in ("A", "B", "C"))

    def test_ceiling_division_overshoots_at_most_beta_minus_one(self):
        loop, sw, hosts, ctrl = make_controller()
        for vm, port in (("A", 2), ("B", 3), ("C", 4)):
            ctrl._packet_in(sw, vm, "D", port, 1)
        settle(loop)
        hosts.update({v: FakeHost(v) for v in ("A", "B", "C")})
        sw.marks[1] = 7
        ctrl._on_monitor()
        loop.run_until(loop.now + MS)
        ms = [hosts[v].received[0].mark_count for v in ("A", "B", "C")]
        assert ms == [3, 3, 3]                         # ceil(7/3)
        assert sum(ms) >= 7 and sum(ms) - 7 < 3

    def test_saturation_at_16_bits(self):
        loop, sw, hosts, ctrl = make_controller()
        ctrl._packet_in(sw, "A", "D", 2, 1)
        settle(loop)
        hosts["A"] = FakeHost("A")
        sw.marks[1] = 70_000
        ctrl._on_monitor()
        loop.run_until(loop.now + MS)
        assert hosts["A"].received[0].mark_count == 0xFFFF
        assert ctrl.mark_saturation == 1

    def test_orphan_source_skipped(self):
        loop, sw, hosts, ctrl = make_controller()
        ctrl._packet_in(sw, "A", "D", -1, 1)   # ingress port unknown
        settle(loop)
        sw.marks[1] = 5
        ctrl._on_monitor()
        loop.run_until(loop.now + MS)
        assert ctrl.orphan_notifications == 1
        assert ctrl.msgs_sent == 0

    def test_wire_encoding(self):
        msg = ctrlmsg("D", "A", 4)
        msg.ident = 4
        frame = encode_ctrlmsg_wire(msg)
        assert len(frame) == CTRLMSG_WIRE_BYTES == 36
        assert frame[23] == 254
        assert int.from_bytes(frame[34:36], "big") == 4

    def test_stale_pairs_age_out(self):
        loop, sw, hosts, ctrl = make_controller()
        ctrl._packet_in(sw, "A", "D", 2, 1)
        settle(loop)
        assert "D" in ctrl.dstsrc
        loop.run_until(loop.now + 11_000_000_000)
        ctrl._age_pairs(loop.now)
        assert "D" not in ctrl.dstsrc
