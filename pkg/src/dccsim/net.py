"""Packet model, links, ECN-marking drop-tail port queues, switches, hosts.

A port queue CE-marks ECN-capable packets enqueued while the instantaneous
occupancy is at or above the marking threshold; non-ECN packets in the same
situation are dropped. Cumulative per-port mark counters are exposed for
controller polling and are never reset.
"""

from collections import deque

from .engine import SEC

PROTO_TCP = 6
PROTO_UDP = 17
PROTO_FEEDBACK = 253  # hypervisor-to-hypervisor explicit feedback
PROTO_CTRLMSG = 254   # controller-to-shim congestion notification

HEADER_BYTES = 34       # 14 B Ethernet + 20 B IP
DATA_PACKET_BYTES = 1500

ENQUEUED = 0
MARKED = 1
DROPPED = 2


class Packet:
    """Simulated IP datagram. One instance traverses the whole path."""

    __slots__ = ("src", "dst", "proto", "payload_len", "header_len", "flow_id",
                 "seq", "ack", "sack", "ecn_echo", "ect", "ce", "ipr", "ident",
                 "mark_count", "tx_ns")

    def __init__(self, src, dst, proto, payload_len, flow_id=-1, seq=0,
                 ect=False, header_len=HEADER_BYTES):
        self.src = src
        self.dst = dst
        self.proto = proto
        self.payload_len = payload_len
        self.header_len = header_len
        self.flow_id = flow_id
        self.seq = seq
        self.ack = None          # cumulative ack (pure/piggyback ack packets)
        self.sack = None         # tuple of (start, end) received-above ranges
        self.ecn_echo = False    # transport-level echo of a CE observation
        self.ect = ect
        self.ce = False
        self.ipr = False
        self.ident = 0
        self.mark_count = 0      # 2-byte payload value of FEEDBACK/CTRLMSG
        self.tx_ns = 0

    @property
    def size(self) -> int:
        return self.header_len + self.payload_len

    def __repr__(self):
        return (f"Packet({self.src}->{self.dst} proto={self.proto} "
                f"len={self.size} seq={self.seq} ack={self.ack})")


class RoutingError(Exception):
    """A packet reached a switch with no route for its destination."""


class OutPort:
    """Output port: drop-tail queue plus the serializing transmitter.

    Occupancy counts packets waiting behind the one in service. capacity and
    mark_threshold are in packets. The attached link is described by
    rate_bps and one-way delay_ns.
    """

    __slots__ = ("loop", "rate_bps", "delay_ns", "capacity", "threshold",
                 "q", "busy", "peer_recv", "name", "jitter_ns", "jitter_rng",
                 "cum_marks", "cum_drops", "cum_tx_bytes", "cum_enq")

    def __init__(self, loop, rate_bps, delay_ns, capacity, threshold, name="",
                 jitter_ns=0):
        self.loop = loop
        self.rate_bps = rate_bps
        self.delay_ns = delay_ns
        self.capacity = capacity
        self.threshold = threshold
        self.q = deque()
        self.busy = False
        self.peer_recv = None
        self.name = name
        # Sub-packet-time forwarding jitter (host NICs only): breaks the
        # phase lock that equal-rate links otherwise settle into.
        self.jitter_ns = jitter_ns
        self.jitter_rng = loop.rng("linkjitter") if jitter_ns else None
        self.cum_marks = 0
        self.cum_drops = 0
        self.cum_tx_bytes = 0
        self.cum_enq = 0

    def attach(self, peer_recv):
        self.peer_recv = peer_recv

    def ser_ns(self, nbytes: int) -> int:
        bits = nbytes * 8
        return (bits * SEC + self.rate_bps - 1) // self.rate_bps

    @property
    def occupancy(self) -> int:
        return len(self.q)

    def enqueue(self, pkt: Packet) -> int:
        if not self.busy:
            # Idle transmitter implies an empty queue: serve immediately.
            self.busy = True
            self.cum_enq += 1
            self.loop.after(self.ser_ns(pkt.header_len + pkt.payload_len),
                            self._tx_done, pkt)
            return ENQUEUED
        occ = len(self.q)
        if occ >= self.capacity:
            self.cum_drops += 1
            return DROPPED
        if occ >= self.threshold:
            if pkt.ect:
                pkt.ce = True
                self.cum_marks += 1
                self.cum_enq += 1
                self.q.append(pkt)
                return MARKED
            self.cum_drops += 1
            return DROPPED
        self.cum_enq += 1
        self.q.append(pkt)
        return ENQUEUED

    def _tx_done(self, pkt):
        self.cum_tx_bytes += pkt.header_len + pkt.payload_len
        delay = self.delay_ns
        if self.jitter_ns:
            delay += self.jitter_rng.randrange(self.jitter_ns)
        self.loop.after(delay, self.peer_recv, pkt)
        if self.q:
            nxt = self.q.popleft()
            self.loop.after(self.ser_ns(nxt.header_len + nxt.payload_len),
                            self._tx_done, nxt)
        else:
            self.busy = False


class Switch:
    """Static-routing switch with per-destination output ports.

    When a controller hook is installed, the first packet of each
    source-destination pair triggers a packet-in notification and per-pair
    last-seen times are tracked for controller-side aging.
    """

    __slots__ = ("loop", "name", "ports", "fdb", "packet_in_cb",
                 "seen_pairs", "pair_last_seen")

    def __init__(self, loop, name):
        self.loop = loop
        self.name = name
        self.ports = []
        self.fdb = {}
        self.packet_in_cb = None
        self.seen_pairs = set()
        self.pair_last_seen = {}

    def add_port(self, port: OutPort) -> int:
        self.ports.append(port)
        return len(self.ports) - 1

    def set_route(self, dst, port_idx: int):
        self.fdb[dst] = port_idx

    def receive(self, pkt: Packet):
        fdb = self.fdb
        out = fdb.get(pkt.dst)
        if out is None:
            raise RoutingError(f"switch {self.name}: no route for {pkt.dst}")
        cb = self.packet_in_cb
        if cb is not None:
            pair = (pkt.src, pkt.dst)
            self.pair_last_seen[pair] = self.loop.now
            if pair not in self.seen_pairs:
                self.seen_pairs.add(pair)
                in_port = fdb.get(pkt.src, -1)
                cb(self, pkt.src, pkt.dst, in_port, out)
        self.ports[out].enqueue(pkt)

    def read_marks(self) -> tuple:
        """Snapshot of cumulative per-port CE-mark counters (never reset)."""
        return tuple(p.cum_marks for p in self.ports)


class Vm:
    """Local endpoint attachment point: demuxes delivered packets by flow id.

    Tracks transparency violations: packets delivered while still carrying a
    CE or reserved-bit mark, or control-plane packets that should have been
    intercepted by the hypervisor layer.
    """

    __slots__ = ("addr", "host", "handlers", "transparency_violations")

    def __init__(self, addr, host):
        self.addr = addr
        self.host = host
        self.handlers = {}
        self.transparency_violations = 0

    def on_packet(self, pkt: Packet):
        if pkt.ce or pkt.ipr or pkt.proto == PROTO_FEEDBACK or pkt.proto == PROTO_CTRLMSG:
            self.transparency_violations += 1
        h = self.handlers.get(pkt.flow_id)
        if h is not None:
            h(pkt)

    def send(self, pkt: Packet):
        self.host.send(pkt)


class Host:
    """End host: one uplink NIC port, a set of local VMs, an optional shim.

    The shim sees every packet entering (ingress, may consume) and leaving
    (egress, may drop) the host; hypervisor-originated packets are injected
    past the egress rate limiters.
    """

    __slots__ = ("loop", "name", "uplink", "vms", "shim")

    def __init__(self, loop, name):
        self.loop = loop
        self.name = name
        self.uplink = None
        self.vms = {}
        self.shim = None

    def add_vm(self, addr) -> Vm:
        vm = Vm(addr, self)
        self.vms[addr] = vm
        return vm

    def receive(self, pkt: Packet):
        shim = self.shim
        if shim is not None:
            pkt = shim.ingress(pkt)
            if pkt is None:
                return
        vm = self.vms.get(pkt.dst)
        if vm is not None:
            vm.on_packet(pkt)

    def send(self, pkt: Packet):
        shim = self.shim
        if shim is not None and not shim.egress(pkt):
            return False
        self.uplink.enqueue(pkt)
        return True

    def inject(self, pkt: Packet):
        """Transmit a hypervisor-originated packet, bypassing VM rate limits."""
        self.uplink.enqueue(pkt)
