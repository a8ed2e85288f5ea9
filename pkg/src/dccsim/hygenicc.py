"""Hypervisor-to-hypervisor congestion control (distributed variant).

Each host runs one shim. Egress traffic passes per-VM token buckets and is
stamped ECN-capable; the egress path also reflects one pending receiver-side
mark per departing reverse packet via the reserved IP-header bit. Ingress
CE marks are counted per VM pair and cleared before delivery, reserved-bit
marks and explicit 36-byte feedback packets are folded into the sender-side
feedback counters, and a periodic timer turns accumulated feedback into
token-bucket rate changes.
"""

import zlib

from .engine import Periodic, ns_from_ms, ns_from_us
from .net import PROTO_FEEDBACK, Packet
from .tokenbucket import TokenBucket

FEEDBACK_WIRE_BYTES = 36


class HgEntry:
    """Per source-destination VM pair state, as seen by one host."""

    __slots__ = ("source", "dest", "out_packet_count", "ipr_packet_count",
                 "ecn_packet_count", "senttime", "feedback", "rbdetected",
                 "feedbacktime", "ecnmarks", "feedbacksenttime", "active",
                 "last_touch", "local_source")

    def __init__(self, source, dest, now, local_source):
        self.source = source
        self.dest = dest
        self.out_packet_count = 0
        self.ipr_packet_count = 0
        self.ecn_packet_count = 0
        self.senttime = now
        self.feedback = 0
        self.rbdetected = False
        self.feedbacktime = now
        self.ecnmarks = 0
        self.feedbacksenttime = now
        self.active = True
        self.last_touch = now
        self.local_source = local_source


class HgVmRec:
    __slots__ = ("bucket", "weight", "last_activity", "share_bps")

    def __init__(self, bucket, weight, now):
        self.bucket = bucket
        self.weight = weight
        self.last_activity = now
        self.share_bps = 0


class HygeniccShim:
    """Per-host shim: flow table, per-VM buckets, 500 us rate-update timer."""

    def __init__(self, loop, host, nic_cap_bps, *,
                 update_interval_ns=ns_from_us(500),
                 congestion_timeout_ns=ns_from_ms(5),
                 feedback_timeout_ns=ns_from_us(500),
                 inactivity_ns=1_000_000_000,
                 scale_bps=8_000_000,
                 k_fast=5,
                 vm_weights=None):
        self.loop = loop
        self.host = host
        self.nic_cap_bps = nic_cap_bps
        self.update_interval_ns = update_interval_ns
        self.congestion_timeout_ns = congestion_timeout_ns
        self.feedback_timeout_ns = feedback_timeout_ns
        self.inactivity_ns = inactivity_ns
        self.scale_bps = scale_bps
        self.k_fast = k_fast
        self.vm_weights = vm_weights or {}

        self.entries = {}        # (src, dst) -> HgEntry
        self.vms = {}            # vm addr -> HgVmRec (active VMs only)
        self.malformed_feedback = 0
        self.marks_seen = 0
        self.ipr_sent = 0
        self.feedback_values_sent = 0
        # Hosts are independent machines: stagger the update timers so the
        # fleet does not react in lockstep.
        phase = loop.rng("shimphase").randrange(update_interval_ns)
        self.timer = Periodic(loop, update_interval_ns, self._on_tick,
                              first_at=loop.now + phase)

    # -- bookkeeping -------------------------------------------------------

    def _activate_vm(self, vm):
        rec = self.vms.get(vm)
        now = self.loop.now
        if rec is None:
            # New VMs start at the full NIC rate; redistribution clamps
            # everyone to the recomputed per-VM share.
            bucket = TokenBucket(self.nic_cap_bps, 3000, now)
            rec = self.vms[vm] = HgVmRec(bucket, self.vm_weights.get(vm, 1.0), now)
            self._redistribute()
        rec.last_activity = now
        return rec

    def _redistribute(self):
        total_w = sum(r.weight for r in self.vms.values())
        if total_w <= 0:
            return
        for rec in self.vms.values():
            share = int(self.nic_cap_bps * rec.weight / total_w)
            rec.share_bps = share
            b = rec.bucket
            if b.rate_bps > share:
                b.refill(self.loop.now)
                b.rate_bps = share
            self._resize_depth(rec)

    def _resize_depth(self, rec):
        depth = max(3000, rec.bucket.rate_bps * 2 * self.update_interval_ns
                    // (8 * 1_000_000_000))
        rec.bucket.set_depth_bytes(depth)

    def _entry(self, src, dst, local_source):
        e = self.entries.get((src, dst))
        if e is None:
            e = self.entries[(src, dst)] = HgEntry(src, dst, self.loop.now, local_source)
            self._activate_vm(src if local_source else dst)
        return e

    # -- data path -----------------------------------------------------------

    def egress(self, pkt) -> bool:
        now = self.loop.now
        vm = pkt.src
        rec = self.vms.get(vm)
        if rec is None:
            rec = self._activate_vm(vm)
        entry = self._entry(vm, pkt.dst, True)
        # Reflect one pending mark of the reverse-direction flow, if any.
        rentry = self.entries.get((pkt.dst, vm))
        if rentry is not None and rentry.ecnmarks >= 1:
            pkt.ipr = True
            rentry.ecnmarks -= 1
            rentry.feedbacksenttime = now
            self.ipr_sent += 1
        if rec.bucket.try_send(now, pkt.header_len + pkt.payload_len):
            pkt.ect = True
            entry.out_packet_count += 1
            entry.senttime = now
            entry.last_touch = now
            rec.last_activity = now
            return True
        return False

    def ingress(self, pkt):
        now = self.loop.now
        if pkt.proto == PROTO_FEEDBACK:
            if pkt.payload_len != 2:
                self.malformed_feedback += 1
                return None
            e = self._entry(pkt.dst, pkt.src, True)
            e.feedback += pkt.mark_count
            e.rbdetected = True
            e.feedbacktime = now
            e.last_touch = now
            return None
        if pkt.ipr:
            e = self._entry(pkt.dst, pkt.src, True)
            e.feedback += 1
            e.ipr_packet_count += 1
            e.rbdetected = True
            e.feedbacktime = now
            e.last_touch = now
            pkt.ipr = False
        r = self._entry(pkt.src, pkt.dst, False)
        if pkt.ce:
            r.ecnmarks += 1
            r.ecn_packet_count += 1
            self.marks_seen += 1
            pkt.ce = False
        if r.ecnmarks > 0 and now - r.feedbacksenttime >= self.feedback_timeout_ns:
            self._send_feedback(r)
        r.last_touch = now
        rec = self.vms.get(pkt.dst)
        if rec is not None:
            rec.last_activity = now
        else:
            self._activate_vm(pkt.dst)
        return pkt

    def _send_feedback(self, entry):
        marks = min(entry.ecnmarks, 0xFFFF)
        fb = Packet(entry.dest, entry.source, PROTO_FEEDBACK, 2)
        fb.mark_count = marks
        fb.ident = marks
        self.feedback_values_sent += marks
        entry.ecnmarks -= marks
        entry.feedbacksenttime = self.loop.now
        self.host.inject(fb)

    # -- control -----------------------------------------------------------

    def _on_tick(self):
        now = self.loop.now
        inactive = [vm for vm, rec in self.vms.items()
                    if now - rec.last_activity >= self.inactivity_ns]
        if inactive:
            for vm in inactive:
                del self.vms[vm]
                stale = [k for k, e in self.entries.items()
                         if k[0] == vm or k[1] == vm]
                for k in stale:
                    del self.entries[k]
            self._redistribute()
        scale = self.scale_bps
        for e in self.entries.values():
            if not e.local_source:
                continue
            rec = self.vms.get(e.source)
            if rec is None:
                continue
            if e.rbdetected and now - e.feedbacktime >= self.congestion_timeout_ns:
                e.rbdetected = False
            b = rec.bucket
            b.refill(now)
            if not e.rbdetected:
                b.rate_bps += self.k_fast * scale
            elif e.feedback > 0:
                # Proportional cut, bounded at halving per interval to keep
                # burst-correlated mark batches from blanking the rate.
                b.rate_bps = max(b.rate_bps - e.feedback * scale,
                                 b.rate_bps // 2)
                e.feedback = 0
            else:
                b.rate_bps += scale
            if b.rate_bps < 0:
                b.rate_bps = 0
            elif b.rate_bps > rec.share_bps:
                b.rate_bps = rec.share_bps
            self._resize_depth(rec)

    # -- introspection -------------------------------------------------------

    def pending_marks(self) -> int:
        return sum(e.ecnmarks for e in self.entries.values())

    def rate_of(self, vm) -> int:
        rec = self.vms.get(vm)
        return rec.bucket.rate_bps if rec is not None else 0


def _ip4(addr: str) -> bytes:
    return zlib.crc32(addr.encode()).to_bytes(4, "big")


def encode_feedback_wire(pkt) -> bytes:
    """Bit-exact 36-byte frame: 14 B Ethernet + 20 B IPv4 + 2 B mark count."""
    eth = bytes(14)
    total_len = 22
    ip = bytes([0x45, 0]) + total_len.to_bytes(2, "big")
    ip += (pkt.ident & 0xFFFF).to_bytes(2, "big") + b"\x00\x00"
    ip += bytes([64, pkt.proto]) + b"\x00\x00"
    ip += _ip4(pkt.src) + _ip4(pkt.dst)
    payload = (pkt.mark_count & 0xFFFF).to_bytes(2, "big")
    frame = eth + ip + payload
    assert len(frame) == FEEDBACK_WIRE_BYTES
    return frame
