"""Scenario configuration: flat INI sections with units in the key names.

A scenario file looks like:

    [scenario]
    name = fourflow
    variant = sdngcc
    seed = 1
    duration_s = 30
    periods_s = 0,10,20,30

    [topology]
    kind = dumbbell
    senders = 4
    link_rate_mbps = 1000
    base_rtt_us = 100
    queue_capacity_pkts = 100
    mark_threshold_pkts = 20

    [params]
    monitor_interval_ms = 5
    ...

    [flow.0]
    kind = tcp
    src = t0
    dst = r0
    start_s = 10
    stop_s = 30
    tagged = true

Flow kinds: tcp | dctcp | udp | mice. UDP flows take rate_mbps; mice flows
take request_bytes/response_bytes. parse/serialize round-trip preserves the
scenario semantically.
"""

import configparser
import io
from dataclasses import dataclass, field, fields

VARIANTS = ("baseline-noecn", "baseline-ecn", "static-limit", "hygenicc", "sdngcc")
FLOW_KINDS = ("tcp", "dctcp", "udp", "mice")


class ConfigError(Exception):
    """Invalid scenario configuration; message lists the offending fields."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid scenario config: " + "; ".join(self.problems))


@dataclass
class FlowSpec:
    kind: str
    src: str
    dst: str
    start_s: float = 0.0
    stop_s: float | None = None
    rate_mbps: float | None = None       # udp only
    tagged: bool = False
    request_bytes: int = 100             # mice only
    response_bytes: int = 11776          # mice only
    src_host: str | None = None          # custom topologies
    dst_host: str | None = None


@dataclass
class TopoSpec:
    kind: str = "dumbbell"
    senders: int = 4
    link_rate_mbps: float = 1000.0
    base_rtt_us: float = 100.0
    queue_capacity_pkts: int = 100
    mark_threshold_pkts: int = 20
    host_queue_pkts: int = 100
    nodes: list = field(default_factory=list)   # custom: (name, "host"|"switch")
    links: list = field(default_factory=list)   # custom: (a, b, rate_mbps, delay_us)


@dataclass
class Params:
    hg_update_interval_us: float = 500.0
    hg_congestion_timeout_ms: float = 5.0
    hg_feedback_timeout_us: float = 500.0
    monitor_interval_ms: float = 5.0
    grace_multiple: float = 2.0
    inactivity_timeout_s: float = 1.0
    rmin_fraction: float = 0.01
    # Reference RTT of the rate step (one 1000-byte packet per RTT_ref);
    # None picks the per-variant default tuned for the mechanism's control
    # cadence: 16 ms (0.5 Mb/s) for the 500 us distributed timer, 4 ms
    # (2 Mb/s) for the 5 ms controller loop.
    scale_rtt_ref_ms: float | None = None
    k_fast: int = 5
    control_delay_us: float = 250.0
    static_limit_mbps: float | None = None
    clear_marks_on_deliver: bool = True
    goodput_bin_ms: float = 100.0
    queue_sample_ms: float = 100.0
    mice_spread_ms: float = 100.0
    start_jitter_us: float = 0.0
    host_jitter_us: float = 2.0
    rto_min_ms: float = 200.0

    HG_SCALE_RTT_REF_MS = 16.0
    SG_SCALE_RTT_REF_MS = 4.0

    def scale_bps_for(self, variant: str) -> int:
        """Rate step: one 1000-byte packet per reference RTT."""
        ref = self.scale_rtt_ref_ms
        if ref is None:
            ref = (self.HG_SCALE_RTT_REF_MS if variant == "hygenicc"
                   else self.SG_SCALE_RTT_REF_MS)
        return int(round(1000 * 8 / (ref / 1000.0)))


@dataclass
class ScenarioConfig:
    name: str
    variant: str
    seed: int = 1
    duration_s: float = 30.0
    periods_s: list = field(default_factory=lambda: [0.0, 10.0, 20.0, 30.0])
    topo: TopoSpec = field(default_factory=TopoSpec)
    flows: list = field(default_factory=list)
    params: Params = field(default_factory=Params)

    # -- validation ---------------------------------------------------------

    def validate(self):
        problems = []
        if self.variant not in VARIANTS:
            problems.append(f"scenario.variant: unknown '{self.variant}', "
                            f"expected one of {', '.join(VARIANTS)}")
        if self.duration_s <= 0:
            problems.append("scenario.duration_s: must be positive")
        if self.seed < 0:
            problems.append("scenario.seed: must be non-negative")
        if sorted(self.periods_s) != self.periods_s:
            problems.append("scenario.periods_s: must be non-decreasing")
        if self.periods_s and self.periods_s[-1] > self.duration_s + 1e-9:
            problems.append("scenario.periods_s: exceeds duration_s")
        if self.topo.kind not in ("dumbbell", "custom"):
            problems.append(f"topology.kind: unknown '{self.topo.kind}'")
        if self.topo.kind == "dumbbell" and self.topo.senders < 1:
            problems.append("topology.senders: must be >= 1")
        if self.topo.queue_capacity_pkts < 1:
            problems.append("topology.queue_capacity_pkts: must be >= 1")
        if not (0 <= self.topo.mark_threshold_pkts <= self.topo.queue_capacity_pkts):
            problems.append("topology.mark_threshold_pkts: must lie in "
                            "[0, queue_capacity_pkts]")
        if self.params.grace_multiple <= 0:
            problems.append("params.grace_multiple: must be positive")
        if self.params.inactivity_timeout_s * 1000.0 <= \
                self.params.grace_multiple * self.params.monitor_interval_ms:
            problems.append("params.inactivity_timeout_s: must exceed the "
                            "congestion grace period")
        if not self.flows:
            problems.append("flows: at least one flow required")
        if sum(1 for f in self.flows if f.tagged) > 1:
            problems.append("flows: at most one tagged flow")
        vm_hosts = known_vms(self) if self.topo.kind == "custom" else None
        for i, f in enumerate(self.flows):
            tag = f"flow.{i}"
            if f.kind not in FLOW_KINDS:
                problems.append(f"{tag}.kind: unknown '{f.kind}'")
            if f.kind == "udp" and (f.rate_mbps is None or f.rate_mbps <= 0):
                problems.append(f"{tag}.rate_mbps: required positive value for udp")
            if f.start_s < 0 or f.start_s > self.duration_s:
                problems.append(f"{tag}.start_s: outside [0, duration_s]")
            stop = f.stop_s if f.stop_s is not None else self.duration_s
            if stop < f.start_s or stop > self.duration_s + 1e-9:
                problems.append(f"{tag}.stop_s: outside [start_s, duration_s]")
            if vm_hosts is not None:
                for end, host in ((f.src, f.src_host), (f.dst, f.dst_host)):
                    if host is None:
                        problems.append(f"{tag}: src_host/dst_host required "
                                        f"for custom topologies")
                    elif host not in vm_hosts:
                        problems.append(f"{tag}: unknown host '{host}'")
        if problems:
            raise ConfigError(problems)
        return self


def known_vms(cfg: ScenarioConfig):
    hosts = {name for name, kind in cfg.topo.nodes if kind == "host"}
    return hosts


# -- INI round-trip ----------------------------------------------------------

def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize(cfg: ScenarioConfig) -> str:
    cp = configparser.ConfigParser()
    cp["scenario"] = {
        "name": cfg.name,
        "variant": cfg.variant,
        "seed": str(cfg.seed),
        "duration_s": _fmt(cfg.duration_s),
        "periods_s": ",".join(_fmt(p) for p in cfg.periods_s),
    }
    topo = {"kind": cfg.topo.kind}
    for f in fields(TopoSpec):
        if f.name in ("kind", "nodes", "links"):
            continue
        topo[f.name] = _fmt(getattr(cfg.topo, f.name))
    if cfg.topo.kind == "custom":
        topo["nodes"] = ";".join(f"{n}:{k}" for n, k in cfg.topo.nodes)
        topo["links"] = ";".join(f"{a},{b},{_fmt(r)},{_fmt(d)}"
                                 for a, b, r, d in cfg.topo.links)
    cp["topology"] = topo
    params = {}
    for f in fields(Params):
        v = getattr(cfg.params, f.name)
        if v is not None:
            params[f.name] = _fmt(v)
    cp["params"] = params
    for i, fl in enumerate(cfg.flows):
        sect = {"kind": fl.kind, "src": fl.src, "dst": fl.dst,
                "start_s": _fmt(fl.start_s)}
        if fl.stop_s is not None:
            sect["stop_s"] = _fmt(fl.stop_s)
        if fl.rate_mbps is not None:
            sect["rate_mbps"] = _fmt(fl.rate_mbps)
        if fl.tagged:
            sect["tagged"] = "true"
        if fl.kind == "mice":
            sect["request_bytes"] = str(fl.request_bytes)
            sect["response_bytes"] = str(fl.response_bytes)
        if fl.src_host:
            sect["src_host"] = fl.src_host
        if fl.dst_host:
            sect["dst_host"] = fl.dst_host
        cp[f"flow.{i}"] = sect
    out = io.StringIO()
    cp.write(out)
    return out.getvalue()


def _get_typed(section, key, typ, default=None, problems=None, where=""):
    raw = section.get(key)
    if raw is None:
        return default
    try:
        if typ is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return typ(raw)
    except ValueError:
        if problems is not None:
            problems.append(f"{where}.{key}: cannot parse '{raw}'")
        return default


def parse(text: str) -> ScenarioConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"file: {exc}"]) from exc
    problems = []
    if "scenario" not in cp:
        raise ConfigError(["scenario: missing section"])
    sc = cp["scenario"]
    name = sc.get("name", "unnamed")
    variant = sc.get("variant", "baseline-ecn")
    seed = _get_typed(sc, "seed", int, 1, problems, "scenario")
    duration = _get_typed(sc, "duration_s", float, 30.0, problems, "scenario")
    periods_raw = sc.get("periods_s", "")
    periods = []
    if periods_raw.strip():
        try:
            periods = [float(p) for p in periods_raw.split(",")]
        except ValueError:
            problems.append(f"scenario.periods_s: cannot parse '{periods_raw}'")

    topo = TopoSpec()
    if "topology" in cp:
        tp = cp["topology"]
        topo.kind = tp.get("kind", "dumbbell")
        for f in fields(TopoSpec):
            if f.name in ("kind", "nodes", "links"):
                continue
            typ = type(getattr(topo, f.name))
            setattr(topo, f.name,
                    _get_typed(tp, f.name, typ, getattr(topo, f.name),
                               problems, "topology"))
        if topo.kind == "custom":
            nodes_raw = tp.get("nodes", "")
            for item in filter(None, (s.strip() for s in nodes_raw.split(";"))):
                if ":" not in item:
                    problems.append(f"topology.nodes: bad entry '{item}'")
                    continue
                n, k = item.split(":", 1)
                topo.nodes.append((n.strip(), k.strip()))
            links_raw = tp.get("links", "")
            for item in filter(None, (s.strip() for s in links_raw.split(";"))):
                parts = [p.strip() for p in item.split(",")]
                if len(parts) != 4:
                    problems.append(f"topology.links: bad entry '{item}'")
                    continue
                try:
                    topo.links.append((parts[0], parts[1],
                                       float(parts[2]), float(parts[3])))
                except ValueError:
                    problems.append(f"topology.links: bad entry '{item}'")

    params = Params()
    if "params" in cp:
        pp = cp["params"]
        for f in fields(Params):
            current = getattr(params, f.name)
            typ = float if current is None else type(current)
            setattr(params, f.name,
                    _get_typed(pp, f.name, typ, current, problems, "params"))

    flows = []
    idx = 0
    while f"flow.{idx}" in cp:
        fs = cp[f"flow.{idx}"]
        where = f"flow.{idx}"
        flow = FlowSpec(
            kind=fs.get("kind", "tcp"),
            src=fs.get("src", f"s{idx}"),
            dst=fs.get("dst", "r0"),
            start_s=_get_typed(fs, "start_s", float, 0.0, problems, where),
            stop_s=_get_typed(fs, "stop_s", float, None, problems, where),
            rate_mbps=_get_typed(fs, "rate_mbps", float, None, problems, where),
            tagged=_get_typed(fs, "tagged", bool, False, problems, where),
            request_bytes=_get_typed(fs, "request_bytes", int, 100, problems, where),
            response_bytes=_get_typed(fs, "response_bytes", int, 11776, problems, where),
            src_host=fs.get("src_host"),
            dst_host=fs.get("dst_host"),
        )
        flows.append(flow)
        idx += 1

    if problems:
        raise ConfigError(problems)
    cfg = ScenarioConfig(name=name, variant=variant, seed=seed,
                         duration_s=duration,
                         periods_s=periods or [0.0, duration],
                         topo=topo, flows=flows, params=params)
    return cfg


def load(path: str) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse(fh.read())
