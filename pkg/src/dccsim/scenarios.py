"""Built-in scenario catalog.

fourflow[-tcp|-dctcp|-udp]  one tagged NewReno flow joining 3 competitors on
                            a 1 Gb/s dumbbell; competitors run [0,20] s, the
                            tagged flow [10,30] s. Plain `fourflow` uses UDP
                            competitors.
scale-8|16|32               tagged NewReno vs 7/15/31 UDP competitors, all
                            active until the end of the run.
delay-sweep-1ms|10ms|50ms   fourflow with the monitor interval at 1/10/50 ms
                            (centralized variant); `delay-sweep` is the
                            three-point meta scenario.
incast-mice                 3 sender groups with 7 TCP + 7 UDP elephants
                            each, plus 126 short request/response flows
                            hitting at t=10 s.
homogeneous                 4 identical NewReno flows, all active [0,15] s.
"""

from .config import FlowSpec, Params, ScenarioConfig, TopoSpec

LINE_RATE_MBPS = 1000.0


def _udp_rate(n_udp: int, line_rate=LINE_RATE_MBPS) -> float:
    """Default oversubscribed CBR rate: 1.5x the per-sender equal split."""
    return line_rate * 1.5 / n_udp


def fourflow(variant: str, seed: int = 1, competitor: str = "udp",
             monitor_interval_ms: float | None = None) -> ScenarioConfig:
    flows = [FlowSpec(kind="tcp", src="t0", dst="r0", start_s=10.0, stop_s=30.0,
                      tagged=True)]
    rate = _udp_rate(3) if competitor == "udp" else None
    for i in range(1, 4):
        flows.append(FlowSpec(kind=competitor, src=f"s{i}", dst="r0",
                              start_s=0.0, stop_s=20.0, rate_mbps=rate))
    params = Params()
    if monitor_interval_ms is not None:
        params.monitor_interval_ms = monitor_interval_ms
    if variant == "static-limit":
        params.static_limit_mbps = LINE_RATE_MBPS / 4
    name = "fourflow" if competitor == "udp" else f"fourflow-{competitor}"
    return ScenarioConfig(
        name=name, variant=variant, seed=seed, duration_s=30.0,
        periods_s=[0.0, 10.0, 20.0, 30.0],
        topo=TopoSpec(senders=4), flows=flows, params=params)


def scale(n_senders: int, variant: str, seed: int = 1,
          competitor: str = "udp") -> ScenarioConfig:
    n_comp = n_senders - 1
    flows = [FlowSpec(kind="tcp", src="t0", dst="r0", start_s=10.0, stop_s=30.0,
                      tagged=True)]
    rate = _udp_rate(n_comp) if competitor == "udp" else None
    for i in range(1, n_senders):
        flows.append(FlowSpec(kind=competitor, src=f"s{i}", dst="r0",
                              start_s=0.0, stop_s=30.0, rate_mbps=rate))
    if variant == "static-limit":
        params = Params(static_limit_mbps=LINE_RATE_MBPS / n_senders)
    else:
        params = Params()
    return ScenarioConfig(
        name=f"scale-{n_senders}", variant=variant, seed=seed, duration_s=30.0,
        periods_s=[0.0, 10.0, 25.0, 30.0],
        topo=TopoSpec(senders=n_senders), flows=flows, params=params)


def incast_mice(variant: str, seed: int = 1, groups: int = 3,
                per_group: int = 7, clients: int = 6,
                udp_rate_mbps: float | None = None) -> ScenarioConfig:
    """Elephants [0,20] s; one burst of short flows at t=10 s.

    Each sender group holds per_group servers; every server hosts one TCP
    elephant, one UDP elephant, and one web VM, and every web VM answers
    one request from each of the `clients` client VMs at the receiver.
    UDP elephants blast at 99.5% of line rate by default: an aggressive
    congestion-agnostic load that leaves the co-located TCP and web VMs
    only a sliver of uplink to fight over.
    """
    rate = udp_rate_mbps if udp_rate_mbps is not None else 0.995 * LINE_RATE_MBPS
    flows = []
    hosts = [(g, i) for g in range(groups) for i in range(per_group)]
    for g, i in hosts:
        flows.append(FlowSpec(kind="tcp", src=f"g{g}e{i}", dst="r0",
                              start_s=0.0, stop_s=20.0, src_host=f"g{g}s{i}"))
    for g, i in hosts:
        flows.append(FlowSpec(kind="udp", src=f"g{g}u{i}", dst="r0",
                              start_s=0.0, stop_s=20.0, rate_mbps=rate,
                              src_host=f"g{g}s{i}"))
    for g, i in hosts:
        for c in range(clients):
            flows.append(FlowSpec(kind="mice", src=f"c{c}", dst=f"g{g}w{i}",
                                  start_s=10.0, dst_host=f"g{g}s{i}"))
    return ScenarioConfig(
        name="incast-mice", variant=variant, seed=seed, duration_s=20.0,
        periods_s=[0.0, 10.0, 20.0],
        topo=TopoSpec(kind="dumbbell", senders=groups * per_group),
        flows=flows, params=Params())


def homogeneous(variant: str = "baseline-ecn", seed: int = 1,
                n: int = 4, rate_mbps: float = LINE_RATE_MBPS) -> ScenarioConfig:
    flows = [FlowSpec(kind="tcp", src=f"s{i}", dst="r0", start_s=0.0, stop_s=15.0,
                      tagged=(i == 0)) for i in range(n)]
    return ScenarioConfig(
        name="homogeneous", variant=variant, seed=seed, duration_s=15.0,
        periods_s=[0.0, 10.0, 15.0],
        topo=TopoSpec(senders=n, link_rate_mbps=rate_mbps), flows=flows,
        params=Params())


_DELAY_POINTS = {"1ms": 1.0, "10ms": 10.0, "50ms": 50.0}


def builtin_names():
    names = ["fourflow", "fourflow-tcp", "fourflow-dctcp", "fourflow-udp",
             "scale-8", "scale-16", "scale-32", "delay-sweep", "incast-mice",
             "homogeneous"]
    names.extend(f"delay-sweep-{k}" for k in _DELAY_POINTS)
    return names


def is_meta(name: str) -> bool:
    return name == "delay-sweep"


def meta_points(name: str):
    if name != "delay-sweep":
        raise KeyError(name)
    return [f"delay-sweep-{k}" for k in _DELAY_POINTS]


def build(name: str, variant: str, seed: int = 1) -> ScenarioConfig:
    if name in ("fourflow", "fourflow-udp"):
        return fourflow(variant, seed, "udp")
    if name == "fourflow-tcp":
        return fourflow(variant, seed, "tcp")
    if name == "fourflow-dctcp":
        return fourflow(variant, seed, "dctcp")
    if name.startswith("scale-"):
        return scale(int(name.split("-")[1]), variant, seed)
    if name.startswith("delay-sweep-"):
        key = name.split("delay-sweep-")[1]
        cfg = fourflow(variant, seed, "udp",
                       monitor_interval_ms=_DELAY_POINTS[key])
        cfg.name = name
        return cfg
    if name == "incast-mice":
        return incast_mice(variant, seed)
    if name == "homogeneous":
        return homogeneous(variant, seed)
    raise KeyError(f"unknown built-in scenario '{name}'")
