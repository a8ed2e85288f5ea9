"""Baseline traffic endpoints: TCP NewReno, DCTCP, UDP CBR, mice exchanges.

The TCP model is a desk-scale behavioral one: no handshakes, delayed ACKs or
SACK block encoding. Receivers acknowledge every data packet with the
cumulative point plus their out-of-order ranges, and senders retransmit
exactly the segments known to be missing. Fairness outcomes ride on the
AIMD/ECN reaction laws, which are implemented as stated below.
"""

from .engine import MS, SEC
from .net import HEADER_BYTES, PROTO_TCP, PROTO_UDP, Packet

MSS = 1466                      # payload bytes; +34 B headers = 1500 on the wire
DEFAULT_RTO_MIN_NS = 200 * MS   # TCP minimum retransmission timeout
MAX_RTO_NS = 60 * SEC

SEG_OUT = 0
SEG_SACKED = 1
SEG_LOST = 2


class TcpSender:
    """NewReno sender with exact retransmission of known-lost segments.

    cwnd/ssthresh are byte counts. Loss detection: a segment is deemed lost
    once three segments' worth of data above it has been selectively
    acknowledged, or on the classic third duplicate ACK for the head of the
    window. ECN reaction: at most one halving per RTT.
    """

    def __init__(self, loop, vm, dst, flow_id, *, ect=False, ecn_enabled=False,
                 start_ns=0, stop_ns=None, total_bytes=None, mss=MSS,
                 rto_min_ns=DEFAULT_RTO_MIN_NS, on_done=None):
        self.loop = loop
        self.vm = vm
        self.src = vm.addr
        self.dst = dst
        self.flow_id = flow_id
        self.ect = ect
        self.ecn_enabled = ecn_enabled
        self.mss = mss
        self.start_ns = start_ns
        self.stop_ns = stop_ns
        self.total_bytes = total_bytes
        self.on_done = on_done
        self.done = False

        self.cwnd = 10.0 * mss
        self.ssthresh = float(1 << 48)
        self.rwnd = 1 << 24
        self.snd_una = 0
        self.snd_nxt = 0
        self.pipe = 0
        self.dup_acks = 0
        self.in_recovery = False
        self.recovery_point = 0
        self.highest_sacked = 0

        self.srtt = None
        self.rttvar = 0
        self.rto_min_ns = rto_min_ns
        self.rto_ns = rto_min_ns
        self.rto_deadline = None
        self._rto_ev = None
        self.timeouts = 0
        self.fast_recoveries = 0
        # Tail-loss probe: rate limiters drop the end of a burst, which
        # duplicate ACKs can never reveal; probes retransmit the tail after
        # a couple of RTTs of silence instead of waiting for the full RTO.
        self._pto_ev = None
        self.probes_left = 2
        self.tail_probes = 0
        # Time-based loss detection: a segment counts as lost once something
        # transmitted sufficiently later has been delivered.
        self.rack_mtime = 0

        self.cwnd_reduced_this_rtt = False
        self._ecn_guard = 0

        self.segs = {}          # seq -> [length, tx_ns, rex, state, nxt_at_tx]
        self.out_order = []     # seqs in original transmit order
        self.head = 0
        self.rtx_queue = []

        vm.handlers[flow_id] = self._dispatch

    # -- app side -------------------------------------------------------

    def start(self):
        self.loop.schedule(self.start_ns, lambda _: self._try_send())

    def _app_window(self) -> int:
        """Bytes of new data the application still offers."""
        if self.total_bytes is not None:
            return self.total_bytes - self.snd_nxt
        if self.stop_ns is not None and self.loop.now >= self.stop_ns:
            return 0
        return 1 << 40

    # -- receive path ----------------------------------------------------

    def _dispatch(self, pkt):
        if pkt.ack is not None:
            self.on_ack(pkt)

    def on_ack(self, pkt):
        now = self.loop.now
        ack = pkt.ack
        if pkt.ecn_echo and self.ecn_enabled:
            self._ecn_reduce()
        if pkt.sack:
            self._process_sack(pkt.sack)
        if ack > self.snd_una:
            self._advance_una(ack, now)
        elif ack == self.snd_una and self.pipe > 0:
            self.dup_acks += 1
            if self.dup_acks == 3 and not self.in_recovery:
                st = self.segs.get(self.snd_una)
                if st is not None and st[3] == SEG_OUT and st[2] == 0:
                    self._mark_lost(self.snd_una, st)
                self._enter_recovery()
        self._rack_sweep()
        self._check_done()
        self._try_send()

    def _rack_sweep(self):
        """Mark segments lost that were sent a reorder window before the
        newest delivered transmission."""
        if not self.rack_mtime:
            return
        window = (self.srtt or 1_000_000) // 4
        cutoff = self.rack_mtime - window
        order, segs = self.out_order, self.segs
        for i in range(self.head, len(order)):
            st = segs.get(order[i])
            if st is None:
                continue
            if st[3] == SEG_OUT and st[1] < cutoff:
                self._mark_lost(order[i], st)
                if not self.in_recovery:
                    self._enter_recovery()

    def _advance_una(self, ack, now):
        order, segs = self.out_order, self.segs
        head = self.head
        sample = None
        while head < len(order):
            seq = order[head]
            st = segs.get(seq)
            if st is None:
                head += 1
                continue
            if seq + st[0] <= ack:
                if st[3] == SEG_OUT:
                    self.pipe -= st[0]
                if st[2] == 0:
                    sample = now - st[1]
                if st[1] > self.rack_mtime:
                    self.rack_mtime = st[1]
                del segs[seq]
                head += 1
            else:
                break
        self.head = head
        if head > 4096:
            del order[:head]
            self.head = 0
        newly = ack - self.snd_una
        self.snd_una = ack
        self.dup_acks = 0
        self.probes_left = 2
        if sample is not None:
            self._rtt_update(sample)
        self.rto_deadline = now + self.rto_ns
        if self.cwnd_reduced_this_rtt and ack >= self._ecn_guard:
            self.cwnd_reduced_this_rtt = False
        if self.in_recovery:
            if ack >= self.recovery_point:
                self.in_recovery = False
                self.cwnd = self.ssthresh
        else:
            self._grow_cwnd(newly)

    def _grow_cwnd(self, newly_acked):
        if self.cwnd < self.ssthresh:
            self.cwnd += self.mss
        else:
            self.cwnd += self.mss * self.mss / self.cwnd

    def _process_sack(self, sack):
        hs = sack[-1][1]
        if hs > self.highest_sacked:
            self.highest_sacked = hs
        hs = self.highest_sacked
        lost_below = hs - 3 * self.mss
        order, segs = self.out_order, self.segs
        i = self.head
        n = len(order)
        while i < n:
            seq = order[i]
            i += 1
            st = segs.get(seq)
            if st is None:
                continue
            if seq >= hs:
                break
            if st[3] != SEG_OUT:
                continue
            end = seq + st[0]
            sacked = False
            for lo, hi in sack:
                if seq >= lo and end <= hi:
                    sacked = True
                    break
            if sacked:
                st[3] = SEG_SACKED
                self.pipe -= st[0]
                if st[1] > self.rack_mtime:
                    self.rack_mtime = st[1]
            elif end <= lost_below and hs > st[4]:
                # A retransmitted segment is only re-marked lost once data
                # sent after the retransmission has been sacked.
                self._mark_lost(seq, st)
                if not self.in_recovery:
                    self._enter_recovery()

    def _mark_lost(self, seq, st):
        st[3] = SEG_LOST
        self.pipe -= st[0]
        self.rtx_queue.append(seq)

    def _enter_recovery(self):
        self.fast_recoveries += 1
        self.ssthresh = max(2.0 * self.mss, self.cwnd / 2.0)
        self.cwnd = self.ssthresh
        self.in_recovery = True
        self.recovery_point = self.snd_nxt

    def _ecn_reduce(self):
        if self.cwnd_reduced_this_rtt or self.in_recovery:
            return
        self.cwnd = max(float(self.mss), self.cwnd / 2.0)
        self.ssthresh = self.cwnd
        self.cwnd_reduced_this_rtt = True
        self._ecn_guard = self.snd_nxt

    # -- RTT / RTO --------------------------------------------------------

    def _rtt_update(self, sample_ns):
        if self.srtt is None:
            self.srtt = sample_ns
            self.rttvar = sample_ns // 2
        else:
            err = sample_ns - self.srtt
            self.rttvar = (3 * self.rttvar + abs(err)) // 4
            self.srtt = (7 * self.srtt + sample_ns) // 8
        self.rto_ns = max(self.rto_min_ns, self.srtt + 4 * self.rttvar)

    def _pto_ns(self):
        srtt = self.srtt if self.srtt is not None else 5_000_000
        return max(2 * srtt, 1_000_000)

    def _arm_rto(self):
        if self.rto_deadline is None:
            return
        if self._rto_ev is None:
            at = max(self.rto_deadline, self.loop.now)
            self._rto_ev = self.loop.schedule(at, self._rto_fire)
        if self._pto_ev is None and self.probes_left > 0:
            self._pto_ev = self.loop.after(self._pto_ns(), self._pto_fire)

    def _pto_fire(self, _):
        self._pto_ev = None
        if self.done or self.snd_una >= self.snd_nxt:
            return
        now = self.loop.now
        quiet = now - (self.rto_deadline - self.rto_ns)
        if quiet < self._pto_ns():
            self._pto_ev = self.loop.schedule(
                self.rto_deadline - self.rto_ns + self._pto_ns(), self._pto_fire)
            return
        if self.probes_left <= 0:
            return
        # Retransmit the highest outstanding segment; re-arm for one retry.
        order, segs = self.out_order, self.segs
        for i in range(len(order) - 1, self.head - 1, -1):
            st = segs.get(order[i])
            if st is not None and st[3] == SEG_OUT:
                self.probes_left -= 1
                self.tail_probes += 1
                self._transmit(order[i], st[0], st)
                break
        if self.probes_left > 0:
            self._pto_ev = self.loop.after(self._pto_ns(), self._pto_fire)

    def _rto_fire(self, _):
        self._rto_ev = None
        if self.snd_una >= self.snd_nxt:
            self.rto_deadline = None
            return
        now = self.loop.now
        if now < self.rto_deadline:
            self._arm_rto()
            return
        # Timeout: collapse the window and retransmit everything outstanding.
        self.timeouts += 1
        self.ssthresh = max(2.0 * self.mss, self.pipe / 2.0)
        self.cwnd = float(self.mss)
        self.in_recovery = False
        self.dup_acks = 0
        self.rtx_queue = []
        order, segs = self.out_order, self.segs
        for i in range(self.head, len(order)):
            st = segs.get(order[i])
            if st is None:
                continue
            if st[3] == SEG_OUT:
                self.pipe -= st[0]
            if st[3] != SEG_LOST:
                st[3] = SEG_LOST
            self.rtx_queue.append(order[i])
        self.pipe = 0
        self.rto_ns = min(self.rto_ns * 2, MAX_RTO_NS)
        self.rto_deadline = now + self.rto_ns
        self.probes_left = 2
        self._try_send()

    # -- send path --------------------------------------------------------

    def _try_send(self):
        if self.done:
            return
        wnd = min(self.cwnd, float(self.rwnd))
        while self.rtx_queue:
            seq = self.rtx_queue[0]
            st = self.segs.get(seq)
            if st is None or st[3] != SEG_LOST:
                self.rtx_queue.pop(0)
                continue
            if self.pipe + st[0] > wnd:
                break
            self.rtx_queue.pop(0)
            self._transmit(seq, st[0], st)
        while True:
            avail = self._app_window()
            if avail <= 0:
                break
            length = self.mss if avail >= self.mss else avail
            if self.pipe + length > wnd:
                break
            seq = self.snd_nxt
            self.snd_nxt = seq + length
            st = self.segs[seq] = [length, 0, -1, SEG_LOST, 0]
            self.out_order.append(seq)
            self._transmit(seq, length, st)
        self._arm_rto()

    def _transmit(self, seq, length, st):
        now = self.loop.now
        pkt = Packet(self.src, self.dst, PROTO_TCP, length, self.flow_id, seq,
                     ect=self.ect)
        pkt.tx_ns = now
        st[1] = now
        st[2] += 1
        if st[3] != SEG_OUT:          # probes resend segments still in flight
            self.pipe += length
        st[3] = SEG_OUT
        st[4] = self.snd_nxt
        if self.rto_deadline is None:
            self.rto_deadline = now + self.rto_ns
        self.vm.send(pkt)

    def _check_done(self):
        if (not self.done and self.total_bytes is not None
                and self.snd_una >= self.total_bytes):
            self.done = True
            if self._rto_ev is not None:
                self.loop.cancel(self._rto_ev)
                self._rto_ev = None
            if self._pto_ev is not None:
                self.loop.cancel(self._pto_ev)
                self._pto_ev = None
            if self.on_done is not None:
                self.on_done(self.loop.now)


class DctcpSender(TcpSender):
    """DCTCP: an EWMA of the marked-byte fraction drives the window cut.

    alpha <- (1-g)*alpha + g*F once per window of acknowledged data. A window
    that sees any marks shrinks cwnd once by (1 - alpha/2), using the alpha
    estimate in force when the window started. Loss handling is inherited.
    """

    DCTCP_G = 1.0 / 16.0

    def __init__(self, *args, g=DCTCP_G, **kwargs):
        kwargs.setdefault("ect", True)
        kwargs.setdefault("ecn_enabled", True)
        super().__init__(*args, **kwargs)
        self.g = g
        self.alpha = 0.0
        self.marked_bytes = 0
        self.total_bytes_win = 0
        self.window_end = 0
        self._cut_this_window = False

    def _ecn_reduce(self):
        # First mark exits slow start; the proportional cut happens at most
        # once per window with the current alpha.
        if self.ssthresh > self.cwnd:
            self.ssthresh = self.cwnd
        if not self._cut_this_window:
            self._cut_this_window = True
            if self.alpha > 0.0:
                self.cwnd = max(float(self.mss),
                                self.cwnd * (1.0 - self.alpha / 2.0))
                self.ssthresh = self.cwnd

    def on_ack(self, pkt):
        prev_una = self.snd_una
        super().on_ack(pkt)
        newly = self.snd_una - prev_una
        if newly > 0:
            self.total_bytes_win += newly
            if pkt.ecn_echo:
                self.marked_bytes += newly
            if self.snd_una >= self.window_end:
                self._window_update()

    def _window_update(self):
        if self.total_bytes_win > 0:
            f = self.marked_bytes / self.total_bytes_win
            self.alpha = (1.0 - self.g) * self.alpha + self.g * f
        self.marked_bytes = 0
        self.total_bytes_win = 0
        self.window_end = self.snd_nxt
        self._cut_this_window = False


class TcpSink:
    """Receive side: cumulative ACK + out-of-order ranges on every data packet.

    Goodput is credited when the in-order frontier advances, so duplicates
    and retransmissions of already-delivered ranges count zero.
    """

    def __init__(self, loop, vm, peer, flow_id, metrics=None, *,
                 expected_bytes=None, on_complete=None, ack_ect=False):
        self.loop = loop
        self.vm = vm
        self.peer = peer
        self.flow_id = flow_id
        self.metrics = metrics
        self.expected_bytes = expected_bytes
        self.on_complete = on_complete
        self.ack_ect = ack_ect
        self.rcv_nxt = 0
        self.ooo = []            # sorted disjoint (start, end) above rcv_nxt
        self.delivered = 0
        self.completed = False
        vm.handlers[flow_id] = self._dispatch

    def _dispatch(self, pkt):
        if pkt.ack is None:
            self.on_data(pkt)

    def on_data(self, pkt):
        start, end = pkt.seq, pkt.seq + pkt.payload_len
        advanced = 0
        if start <= self.rcv_nxt:
            if end > self.rcv_nxt:
                advanced = end - self.rcv_nxt
                self.rcv_nxt = end
                advanced += self._drain_ooo()
        else:
            self._insert_ooo(start, end)
        if advanced and self.metrics is not None:
            self.metrics.credit(self.flow_id, advanced, self.loop.now)
        self.delivered += advanced
        self._send_ack(pkt)
        if (not self.completed and self.expected_bytes is not None
                and self.rcv_nxt >= self.expected_bytes):
            self.completed = True
            if self.on_complete is not None:
                self.on_complete(self.loop.now)

    def _drain_ooo(self) -> int:
        gained = 0
        while self.ooo and self.ooo[0][0] <= self.rcv_nxt:
            s, e = self.ooo.pop(0)
            if e > self.rcv_nxt:
                gained += e - self.rcv_nxt
                self.rcv_nxt = e
        return gained

    def _insert_ooo(self, start, end):
        ranges = self.ooo
        ranges.append((start, end))
        ranges.sort()
        merged = [ranges[0]]
        for s, e in ranges[1:]:
            ls, le = merged[-1]
            if s <= le:
                if e > le:
                    merged[-1] = (ls, e)
            else:
                merged.append((s, e))
        self.ooo = merged

    def _send_ack(self, data_pkt):
        ack = Packet(self.vm.addr, self.peer, PROTO_TCP, 0, self.flow_id,
                     ect=self.ack_ect)
        ack.ack = self.rcv_nxt
        if self.ooo:
            # Exact received-range report; the model carries no SACK block
            # encoding limit, so new deliveries are always visible.
            ack.sack = tuple(self.ooo)
        ack.ecn_echo = data_pkt.ce
        self.vm.send(ack)


class UdpCbrSender:
    """Constant-bit-rate UDP source; never reacts to loss or marks.

    Emission times form an exact arithmetic progression in rational time:
    the k-th packet leaves at start + floor(k * packet_bits * 1e9 / rate).
    """

    def __init__(self, loop, vm, dst, flow_id, rate_bps, *,
                 payload=MSS, start_ns=0, stop_ns=None, ect=False):
        self.loop = loop
        self.vm = vm
        self.dst = dst
        self.flow_id = flow_id
        self.rate_bps = int(rate_bps)
        self.payload = payload
        self.bits = (payload + HEADER_BYTES) * 8
        self.start_ns = start_ns
        self.stop_ns = stop_ns
        self.ect = ect
        self.k = 0
        self.emitted = 0

    def start(self):
        self.loop.schedule(self.start_ns, self._emit)

    def _emit(self, _):
        now = self.loop.now
        if self.stop_ns is not None and now >= self.stop_ns:
            return
        pkt = Packet(self.vm.addr, self.dst, PROTO_UDP, self.payload,
                     self.flow_id, self.k, ect=self.ect)
        pkt.tx_ns = now
        self.vm.send(pkt)
        self.emitted += 1
        self.k += 1
        nxt = self.start_ns + (self.k * self.bits * SEC) // self.rate_bps
        self.loop.schedule(nxt, self._emit)


class UdpSink:
    """Credits every delivered payload byte; duplicates cannot occur."""

    def __init__(self, loop, vm, flow_id, metrics=None):
        self.loop = loop
        self.flow_id = flow_id
        self.metrics = metrics
        self.received = 0
        vm.handlers[flow_id] = self.on_data

    def on_data(self, pkt):
        self.received += 1
        if self.metrics is not None:
            self.metrics.credit(self.flow_id, pkt.payload_len, self.loop.now)


class MiceFlow:
    """One request/response exchange: short request, 11.5 KB-class response.

    The client sends the request over its own reliable mini-connection; the
    server answers with the response bytes on the reverse direction of the
    same flow id. FCT runs from request emission to the last response byte.
    """

    def __init__(self, loop, metrics, flow_id, client_vm, server_vm, *,
                 request_bytes=100, response_bytes=11776, start_ns=0,
                 ect=False, ecn_enabled=False, rto_min_ns=DEFAULT_RTO_MIN_NS):
        self.loop = loop
        self.metrics = metrics
        self.flow_id = flow_id
        self.client_vm = client_vm
        self.server_vm = server_vm
        self.request_bytes = request_bytes
        self.response_bytes = response_bytes
        self.start_ns = start_ns
        self.ect = ect
        self.ecn_enabled = ecn_enabled
        self.rto_min_ns = rto_min_ns
        self.completion_ns = None

        self.request_sender = TcpSender(
            loop, _RoleVm(client_vm, flow_id, self._client_packet), server_vm.addr,
            flow_id, ect=ect, ecn_enabled=ecn_enabled, start_ns=start_ns,
            total_bytes=request_bytes, rto_min_ns=rto_min_ns)
        self.request_sink = TcpSink(
            loop, _RoleVm(server_vm, flow_id, self._server_packet), client_vm.addr,
            flow_id, None, expected_bytes=request_bytes,
            on_complete=self._on_request_complete)
        self.response_sender = None
        self.response_sink = TcpSink(
            loop, _RoleVm(client_vm, flow_id, None), server_vm.addr, flow_id,
            metrics, expected_bytes=response_bytes, on_complete=self._on_response)
        client_vm.handlers[flow_id] = self._client_packet
        server_vm.handlers[flow_id] = self._server_packet

    def start(self):
        self.request_sender.start()

    def _client_packet(self, pkt):
        if pkt.ack is not None:
            self.request_sender.on_ack(pkt)
        else:
            self.response_sink.on_data(pkt)

    def _server_packet(self, pkt):
        if pkt.ack is not None:
            if self.response_sender is not None:
                self.response_sender.on_ack(pkt)
        else:
            self.request_sink.on_data(pkt)

    def _on_request_complete(self, _now):
        if self.response_sender is None:
            self.response_sender = TcpSender(
                self.loop, _RoleVm(self.server_vm, self.flow_id, None),
                self.client_vm.addr, self.flow_id, ect=self.ect,
                ecn_enabled=self.ecn_enabled, start_ns=self.loop.now,
                total_bytes=self.response_bytes, rto_min_ns=self.rto_min_ns)
            self.response_sender._try_send()

    def _on_response(self, now):
        self.completion_ns = now
        if self.metrics is not None:
            self.metrics.record_fct(self.flow_id, self.start_ns, now - self.start_ns)

    @property
    def fct_ns(self):
        if self.completion_ns is None:
            return None
        return self.completion_ns - self.start_ns


class _RoleVm:
    """Thin VM facade letting two directions of one flow share a flow id."""

    __slots__ = ("vm", "flow_id", "cb")

    def __init__(self, vm, flow_id, cb):
        self.vm = vm
        self.flow_id = flow_id
        self.cb = cb

    @property
    def addr(self):
        return self.vm.addr

    @property
    def handlers(self):
        return {}

    def send(self, pkt):
        self.vm.send(pkt)
