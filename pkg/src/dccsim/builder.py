"""Instantiate a runnable simulation from a ScenarioConfig.

Dumbbell topologies place every elephant source VM on its own sender host
unless the flow names a src_host (grouped hosts share one NIC and therefore
one shim); all destination VMs and mice clients live on the receiver host
behind the single bottleneck port.
"""

from collections import deque

from .config import ConfigError, ScenarioConfig
from .engine import EventLoop, Periodic, ns_from_ms, ns_from_s, ns_from_us
from .hygenicc import HygeniccShim
from .metrics import FlowMeta, Metrics
from .net import Host, OutPort, Switch
from .sdngcc import SdngccController, SdngccShim
from .tokenbucket import StaticShim
from .transport import DctcpSender, MiceFlow, TcpSender, TcpSink, UdpCbrSender, UdpSink

RECV_HOST = "recv"


class Sim:
    """A built scenario: event loop, topology, endpoints, metrics."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.loop = EventLoop(cfg.seed)
        self.duration_ns = ns_from_s(cfg.duration_s)
        self.metrics = Metrics(self.duration_ns, ns_from_ms(cfg.params.goodput_bin_ms))
        self.hosts = {}
        self.switches = []
        self.controller = None
        self.flow_objs = []
        self.host_of_vm = {}
        self.bottleneck = None

    def run(self):
        self.loop.run_until(self.duration_ns)
        self._sample_queues()
        return self.metrics

    def _sample_queues(self):
        t = self.loop.now
        for sw in self.switches:
            for i, p in enumerate(sw.ports):
                self.metrics.sample_queue(t, sw.name, i, p.occupancy,
                                          p.cum_marks, p.cum_drops)


def build(cfg: ScenarioConfig) -> Sim:
    cfg.validate()
    sim = Sim(cfg)
    if cfg.topo.kind == "dumbbell":
        _build_dumbbell(sim)
    else:
        _build_custom(sim)
    _wire_variant(sim)
    _build_flows(sim)
    sample_ns = ns_from_ms(cfg.params.queue_sample_ms)
    Periodic(sim.loop, sample_ns, sim._sample_queues)
    return sim


# -- topology -----------------------------------------------------------------


def _vm_placement(cfg: ScenarioConfig):
    """host -> [vm...] for senders, plus the receiver host's VM list."""
    sender_hosts = {}
    recv_vms = []
    auto_idx = 0
    placed = {}

    def place(vm, host):
        if vm in placed:
            if placed[vm] != host:
                raise ConfigError([f"vm {vm}: conflicting host placement "
                                   f"({placed[vm]} vs {host})"])
            return
        placed[vm] = host
        if host == RECV_HOST:
            recv_vms.append(vm)
        else:
            sender_hosts.setdefault(host, []).append(vm)

    for f in cfg.flows:
        if f.kind == "mice":
            place(f.src, f.src_host or RECV_HOST)
            if f.dst_host is None:
                raise ConfigError([f"mice flow {f.src}->{f.dst}: dst_host required"])
            place(f.dst, f.dst_host)
        else:
            host = f.src_host
            if host is None:
                host = f"h{auto_idx}"
                auto_idx += 1
            place(f.src, host)
            place(f.dst, f.dst_host or RECV_HOST)
    return sender_hosts, recv_vms


def _build_dumbbell(sim: Sim):
    cfg = sim.cfg
    loop = sim.loop
    rate = int(cfg.topo.link_rate_mbps * 1e6)
    delay = ns_from_us(cfg.topo.base_rtt_us) // 4
    cap, thr = cfg.topo.queue_capacity_pkts, cfg.topo.mark_threshold_pkts
    hq = cfg.topo.host_queue_pkts

    sw = Switch(loop, "sw0")
    sim.switches.append(sw)
    sender_hosts, recv_vms = _vm_placement(cfg)
    jitter = ns_from_us(cfg.params.host_jitter_us)

    def connect(host):
        up = OutPort(loop, rate, delay, hq, hq, name=f"{host.name}->sw0",
                     jitter_ns=jitter)
        up.attach(sw.receive)
        host.uplink = up
        down = OutPort(loop, rate, delay, cap, thr, name=f"sw0->{host.name}")
        down.attach(host.receive)
        return sw.add_port(down)

    for hname, vms in sender_hosts.items():
        host = Host(loop, hname)
        sim.hosts[hname] = host
        port = connect(host)
        for vm in vms:
            host.add_vm(vm)
            sw.set_route(vm, port)
            sim.host_of_vm[vm] = host

    recv = Host(loop, RECV_HOST)
    sim.hosts[RECV_HOST] = recv
    recv_port = connect(recv)
    for vm in recv_vms:
        recv.add_vm(vm)
        sw.set_route(vm, recv_port)
        sim.host_of_vm[vm] = recv
    sim.bottleneck = sw.ports[recv_port]


def _build_custom(sim: Sim):
    cfg = sim.cfg
    loop = sim.loop
    cap, thr = cfg.topo.queue_capacity_pkts, cfg.topo.mark_threshold_pkts
    hq = cfg.topo.host_queue_pkts

    nodes = {}
    for name, kind in cfg.topo.nodes:
        if kind == "switch":
            sw = Switch(loop, name)
            nodes[name] = sw
            sim.switches.append(sw)
        else:
            nodes[name] = sim.hosts.setdefault(name, Host(loop, name))

    adjacency = {}
    for a, b, rate_mbps, delay_us in cfg.topo.links:
        if a not in nodes or b not in nodes:
            raise ConfigError([f"link {a}-{b}: unknown node"])
        rate = int(rate_mbps * 1e6)
        delay = ns_from_us(delay_us)
        for src, dst in ((a, b), (b, a)):
            n_src, n_dst = nodes[src], nodes[dst]
            if isinstance(n_src, Switch):
                port = OutPort(loop, rate, delay, cap, thr, name=f"{src}->{dst}")
                port.attach(n_dst.receive)
                idx = n_src.add_port(port)
                adjacency.setdefault(src, []).append((dst, idx))
            else:
                port = OutPort(loop, rate, delay, hq, hq, name=f"{src}->{dst}")
                port.attach(n_dst.receive)
                if n_src.uplink is not None:
                    raise ConfigError([f"host {src}: multiple links unsupported"])
                n_src.uplink = port
                adjacency.setdefault(src, []).append((dst, 0))

    # Place VMs, then run a BFS per host to fill every switch's routing table.
    vm_host = {}
    for f in cfg.flows:
        for vm, host in ((f.src, f.src_host), (f.dst, f.dst_host)):
            if host is None:
                raise ConfigError([f"vm {vm}: host placement required for "
                                   f"custom topologies"])
            vm_host[vm] = host
    for vm, hname in vm_host.items():
        host = sim.hosts[hname]
        host.add_vm(vm)
        sim.host_of_vm[vm] = host

    for vm, hname in vm_host.items():
        # BFS from the destination host backwards over the adjacency graph.
        prev = {hname: None}
        q = deque([hname])
        while q:
            cur = q.popleft()
            for nbr, _ in adjacency.get(cur, ()):
                if nbr not in prev:
                    prev[nbr] = cur
                    q.append(nbr)
        for sw in sim.switches:
            if sw.name not in prev:
                raise ConfigError([f"switch {sw.name}: no path to host {hname}"])
            nxt = prev[sw.name]
            for nbr, idx in adjacency[sw.name]:
                if nbr == nxt:
                    sw.set_route(vm, idx)
                    break


# -- variant wiring -------------------------------------------------------------


def _wire_variant(sim: Sim):
    cfg = sim.cfg
    v = cfg.variant
    if v.startswith("baseline"):
        return
    p = cfg.params
    if v == "static-limit":
        rate = p.static_limit_mbps
        if rate is None:
            n = len({f.src for f in cfg.flows if f.kind != "mice"})
            rate = cfg.topo.link_rate_mbps / max(1, n)
        for host in sim.hosts.values():
            host.shim = StaticShim(sim.loop, host, int(rate * 1e6))
        return
    scale = p.scale_bps_for(v)
    if v == "hygenicc":
        for host in sim.hosts.values():
            host.shim = HygeniccShim(
                sim.loop, host, host.uplink.rate_bps,
                update_interval_ns=ns_from_us(p.hg_update_interval_us),
                congestion_timeout_ns=ns_from_ms(p.hg_congestion_timeout_ms),
                feedback_timeout_ns=ns_from_us(p.hg_feedback_timeout_us),
                inactivity_ns=ns_from_s(p.inactivity_timeout_s),
                scale_bps=scale, k_fast=p.k_fast)
        return
    if v == "sdngcc":
        for host in sim.hosts.values():
            host.shim = SdngccShim(
                sim.loop, host, host.uplink.rate_bps,
                monitor_interval_ns=ns_from_ms(p.monitor_interval_ms),
                grace_multiple=p.grace_multiple,
                inactivity_ns=ns_from_s(p.inactivity_timeout_s),
                rmin_fraction=p.rmin_fraction,
                scale_bps=scale, k_fast=p.k_fast,
                clear_marks=p.clear_marks_on_deliver)
        sim.controller = SdngccController(
            sim.loop, sim.switches, sim.host_of_vm,
            monitor_interval_ns=ns_from_ms(p.monitor_interval_ms),
            control_delay_ns=ns_from_us(p.control_delay_us))
        return
    raise ConfigError([f"scenario.variant: unhandled '{v}'"])


# -- flows ---------------------------------------------------------------------


def _endpoint_flags(variant: str, kind: str):
    """(ect, ecn_enabled) as seen by the tenant transport."""
    if kind == "dctcp":
        return True, True
    if kind == "udp":
        return False, False
    if variant == "baseline-ecn":
        return True, True
    return False, False


def _build_flows(sim: Sim):
    cfg = sim.cfg
    loop = sim.loop
    rto_min = ns_from_ms(cfg.params.rto_min_ms)
    jitter_ns = ns_from_us(cfg.params.start_jitter_us)
    rng = loop.rng("flows")
    mice_rng = loop.rng("mice")
    spread_ns = ns_from_ms(cfg.params.mice_spread_ms)

    for fid, f in enumerate(cfg.flows):
        start = ns_from_s(f.start_s)
        if jitter_ns and f.kind != "mice":
            start += rng.randrange(jitter_ns + 1)
        stop = ns_from_s(f.stop_s if f.stop_s is not None else cfg.duration_s)
        src_vm = sim.host_of_vm[f.src].vms[f.src]
        dst_vm = sim.host_of_vm[f.dst].vms[f.dst]
        meta = FlowMeta(fid, f.kind, f.src, f.dst, f.start_s,
                        f.stop_s if f.stop_s is not None else cfg.duration_s,
                        f.tagged)
        sim.metrics.register_flow(meta)
        ect, ecn = _endpoint_flags(cfg.variant, f.kind)

        if f.kind in ("tcp", "dctcp"):
            cls = DctcpSender if f.kind == "dctcp" else TcpSender
            sender = cls(loop, src_vm, f.dst, fid, ect=ect, ecn_enabled=ecn,
                         start_ns=start, stop_ns=stop, rto_min_ns=rto_min)
            sink = TcpSink(loop, dst_vm, f.src, fid, sim.metrics)
            sender.start()
            sim.flow_objs.append((sender, sink))
        elif f.kind == "udp":
            sender = UdpCbrSender(loop, src_vm, f.dst, fid,
                                  int(f.rate_mbps * 1e6), start_ns=start,
                                  stop_ns=stop, ect=ect)
            sink = UdpSink(loop, dst_vm, fid, sim.metrics)
            sender.start()
            sim.flow_objs.append((sender, sink))
        else:  # mice
            mice_start = start + (mice_rng.randrange(spread_ns + 1)
                                  if spread_ns else 0)
            mf = MiceFlow(loop, sim.metrics, fid, src_vm, dst_vm,
                          request_bytes=f.request_bytes,
                          response_bytes=f.response_bytes,
                          start_ns=mice_start, ect=ect, ecn_enabled=ecn,
                          rto_min_ns=rto_min)
            mf.start()
            sim.flow_objs.append(mf)
