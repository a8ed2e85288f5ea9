"""Controller-driven congestion control (centralized variant).

The end-host shim enforces per-VM token buckets with ECT stamping, intercepts
controller congestion notifications (never delivered to VMs), applies a
proportional rate decrease floored at R_min, and recovers additively toward
the equal share on a periodic timer.

The controller application learns source/destination/port associations from
first-packet events, polls cumulative per-port mark counters every monitor
interval, apportions each port's new marks equally over the contributing
(destination, source) pairs with ceiling division, and emits one 36-byte
notification per pair over the out-of-band control channel.
"""

import zlib

from .engine import Periodic
from .net import PROTO_CTRLMSG, Packet
from .tokenbucket import TokenBucket

CTRLMSG_WIRE_BYTES = 36


class SgVmState:
    __slots__ = ("bucket", "weight", "share_bps", "r_min_bps", "cong_detected",
                 "cong_time", "sent_time", "active", "pending_marks")

    def __init__(self, bucket, weight, now):
        self.bucket = bucket
        self.weight = weight
        self.share_bps = 0
        self.r_min_bps = 0
        self.cong_detected = False
        self.cong_time = now
        self.sent_time = now
        self.active = False
        self.pending_marks = 0


class SdngccShim:
    """Per-host shim of the centralized variant."""

    def __init__(self, loop, host, nic_cap_bps, *,
                 monitor_interval_ns, grace_multiple=2,
                 inactivity_ns=1_000_000_000, rmin_fraction=0.01,
                 scale_bps=8_000_000, k_fast=5, clear_marks=True,
                 vm_weights=None):
        self.loop = loop
        self.host = host
        self.nic_cap_bps = nic_cap_bps
        self.t_i_ns = monitor_interval_ns
        self.t_c_ns = grace_multiple * monitor_interval_ns
        self.t_o_ns = inactivity_ns
        self.rmin_fraction = rmin_fraction
        self.scale_bps = scale_bps
        self.k_fast = k_fast
        self.clear_marks = clear_marks
        self.vm_weights = vm_weights or {}

        self.vms = {}            # vm addr -> SgVmState
        self.marks_cleared = 0
        self.notifications = 0
        # Stagger per-host update timers; independent machines are never
        # phase-aligned in practice.
        phase = loop.rng("shimphase").randrange(self.t_i_ns)
        self.timer = Periodic(loop, self.t_i_ns, self._on_tick,
                              first_at=loop.now + phase)

    # -- allocation ---------------------------------------------------------

    def _activate(self, vm):
        st = self.vms.get(vm)
        now = self.loop.now
        if st is None:
            st = self.vms[vm] = SgVmState(
                TokenBucket(self.nic_cap_bps, 3000, now),
                self.vm_weights.get(vm, 1.0), now)
        if not st.active:
            st.active = True
            st.sent_time = now
            st.cong_time = now
            self._redistribute()
            st.bucket.refill(now)
            st.bucket.rate_bps = st.share_bps
            self._resize_depth(st)
            if st.pending_marks:
                self._decrement(st, st.pending_marks)
                st.pending_marks = 0
        return st

    def _redistribute(self):
        active = [s for s in self.vms.values() if s.active]
        total_w = sum(s.weight for s in active)
        if total_w <= 0:
            return
        now = self.loop.now
        for st in active:
            share = int(self.nic_cap_bps * st.weight / total_w)
            st.share_bps = share
            st.r_min_bps = int(self.rmin_fraction * share)
            b = st.bucket
            if b.rate_bps > share:
                b.refill(now)
                b.rate_bps = share
            self._resize_depth(st)

    def _resize_depth(self, st):
        depth = max(3000, st.bucket.rate_bps * 2 * self.t_i_ns // (8 * 1_000_000_000))
        st.bucket.set_depth_bytes(depth)

    # -- data path ------------------------------------------------------------

    def egress(self, pkt) -> bool:
        st = self.vms.get(pkt.src)
        if st is None or not st.active:
            st = self._activate(pkt.src)
        now = self.loop.now
        if st.bucket.try_send(now, pkt.header_len + pkt.payload_len):
            pkt.ect = True
            st.sent_time = now
            return True
        return False

    def ingress(self, pkt):
        if pkt.proto == PROTO_CTRLMSG:
            self.notifications += 1
            marks = pkt.mark_count
            if marks > 0:
                st = self.vms.get(pkt.dst)
                if st is None or not st.active:
                    # Lazy state: remember the signal, apply on activation.
                    if st is None:
                        st = self.vms[pkt.dst] = SgVmState(
                            TokenBucket(self.nic_cap_bps, 3000, self.loop.now),
                            self.vm_weights.get(pkt.dst, 1.0), self.loop.now)
                    st.pending_marks += marks
                else:
                    self._decrement(st, marks)
            return None
        if self.clear_marks and pkt.ce:
            pkt.ce = False
            self.marks_cleared += 1
        return pkt

    def _decrement(self, st, marks):
        now = self.loop.now
        st.cong_detected = True
        elapsed = now - st.cong_time
        intervals = elapsed / self.t_i_ns
        if intervals < 1.0:
            intervals = 1.0
        mark_rate = marks / intervals
        # Proportional cut, bounded per notification to a fraction that
        # scales with the monitor interval (2/15 of the rate at the 5 ms
        # default): saturated windows then shrink every sender by the same
        # factor, which equalizes geometrically without blanking the slow
        # ones. The bound never falls below two recovery steps, otherwise
        # cut and recovery cancel into a stable full-queue fixed point.
        frac = self.t_i_ns / 37_500_000
        if frac > 0.5:
            frac = 0.5
        cap = max(int(st.bucket.rate_bps * frac), 2 * self.scale_bps)
        rate = max(st.bucket.rate_bps - int(mark_rate * self.scale_bps),
                   st.bucket.rate_bps - cap)
        st.bucket.refill(now)
        st.bucket.rate_bps = max(st.r_min_bps, rate)
        st.cong_time = now
        self._resize_depth(st)

    # -- control ---------------------------------------------------------------

    def _on_tick(self):
        now = self.loop.now
        deactivated = False
        for st in self.vms.values():
            if not st.active:
                continue
            if st.cong_detected and now - st.cong_time >= self.t_c_ns:
                st.cong_detected = False
            if now - st.sent_time >= self.t_o_ns:
                st.active = False
                deactivated = True
                continue
            b = st.bucket
            b.refill(now)
            if st.cong_detected:
                b.rate_bps = min(st.share_bps, b.rate_bps + self.scale_bps)
            else:
                b.rate_bps = min(st.share_bps, b.rate_bps + self.k_fast * self.scale_bps)
            self._resize_depth(st)
        if deactivated:
            self._redistribute()

    def rate_of(self, vm) -> int:
        st = self.vms.get(vm)
        return st.bucket.rate_bps if st is not None else 0


class SdngccController:
    """Network application: poll mark counters, apportion, notify shims."""

    def __init__(self, loop, switches, host_of_vm, *, monitor_interval_ns,
                 control_delay_ns, pair_ttl_ns=10_000_000_000):
        self.loop = loop
        self.switches = list(switches)
        self.host_of_vm = host_of_vm
        self.t_i_ns = monitor_interval_ns
        self.delay_ns = control_delay_ns
        self.pair_ttl_ns = pair_ttl_ns

        self.dstsrc = {}       # dst -> {src: True}
        self.iptoport = {}     # vm -> (switch name, port index)
        self.marks = {}        # (switch name, port index) -> last polled value
        self.pair_seen = {}    # (dst, src) -> last observed ns
        self.timer = None
        self.orphan_notifications = 0
        self.mark_saturation = 0
        self.msgs_sent = 0

        for sw in self.switches:
            sw.packet_in_cb = self._packet_in

    # -- events ------------------------------------------------------------

    def _packet_in(self, sw, src, dst, in_port, out_port):
        self.loop.after(self.delay_ns, self._learn, (sw.name, src, dst, in_port, out_port))

    def _learn(self, arg):
        sw_name, src, dst, in_port, out_port = arg
        self.dstsrc.setdefault(dst, {})[src] = True
        if in_port >= 0:
            self.iptoport[src] = (sw_name, in_port)
        self.iptoport[dst] = (sw_name, out_port)
        self.pair_seen[(dst, src)] = self.loop.now
        if self.timer is None:
            self.timer = Periodic(self.loop, self.t_i_ns, self._on_monitor)

    def _on_monitor(self):
        now = self.loop.now
        self._age_pairs(now)
        for sw in self.switches:
            snapshot = sw.read_marks()
            activity = dict(sw.pair_last_seen)
            self.loop.after(self.delay_ns, self._on_stats_reply, (sw.name, snapshot, activity))

    def _age_pairs(self, now):
        expired = [p for p, t in self.pair_seen.items()
                   if now - t >= self.pair_ttl_ns]
        for dst, src in expired:
            del self.pair_seen[(dst, src)]
            srcs = self.dstsrc.get(dst)
            if srcs is not None:
                srcs.pop(src, None)
                if not srcs:
                    del self.dstsrc[dst]

    def _on_stats_reply(self, arg):
        sw_name, snapshot, activity = arg
        now = self.loop.now
        for pair, t in activity.items():
            seen = self.pair_seen.get((pair[1], pair[0]))
            if seen is not None and t > seen:
                self.pair_seen[(pair[1], pair[0])] = t
        for port_idx, cum in enumerate(snapshot):
            key = (sw_name, port_idx)
            alpha = cum - self.marks.get(key, 0)
            self.marks[key] = cum
            if alpha <= 0:
                continue
            dst_list = [vm for vm, loc in self.iptoport.items()
                        if loc == key and vm in self.dstsrc]
            beta = sum(len(self.dstsrc[d]) for d in dst_list)
            if beta <= 0:
                continue
            m = -(-alpha // beta)
            for dst in dst_list:
                for src in self.dstsrc[dst]:
                    self._emit(m, dst, src)

    def _emit(self, m, dst_vm, src_vm):
        if src_vm not in self.iptoport:
            self.orphan_notifications += 1
            return
        if m > 0xFFFF:
            m = 0xFFFF
            self.mark_saturation += 1
        host = self.host_of_vm.get(src_vm)
        if host is None:
            self.orphan_notifications += 1
            return
        msg = Packet(dst_vm, src_vm, PROTO_CTRLMSG, 2)
        msg.mark_count = m
        msg.ident = m
        self.msgs_sent += 1
        # Out-of-band control channel: fixed one-way delay, no data queues.
        self.loop.after(self.delay_ns, host.receive, msg)


def _ip4(addr: str) -> bytes:
    return zlib.crc32(addr.encode()).to_bytes(4, "big")


def encode_ctrlmsg_wire(pkt) -> bytes:
    """Bit-exact 36-byte frame: 14 B Ethernet + 20 B IPv4 + 2 B mark share."""
    eth = bytes(14)
    ip = bytes([0x45, 0]) + (22).to_bytes(2, "big")
    ip += (pkt.ident & 0xFFFF).to_bytes(2, "big") + b"\x00\x00"
    ip += bytes([64, pkt.proto]) + b"\x00\x00"
    ip += _ip4(pkt.src) + _ip4(pkt.dst)
    frame = eth + ip + (pkt.mark_count & 0xFFFF).to_bytes(2, "big")
    assert len(frame) == CTRLMSG_WIRE_BYTES
    return frame
