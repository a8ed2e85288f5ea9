"""Per-flow goodput accounting, FCT records, queue traces, Jain index."""

from dataclasses import dataclass

from .engine import SEC


@dataclass
class FlowMeta:
    flow_id: int
    kind: str
    src: str
    dst: str
    start_s: float
    stop_s: float
    tagged: bool = False


class Metrics:
    """Collects everything a run emits; all time arguments are integer ns."""

    def __init__(self, duration_ns: int, bin_ns: int):
        self.duration_ns = duration_ns
        self.bin_ns = bin_ns
        self.nbins = -(-duration_ns // bin_ns)
        self.flows = {}
        self.bins = {}
        self.delivered_bytes = {}
        self.fct = []              # (flow_id, start_ns, fct_ns)
        self.queue_samples = []    # (t_ns, switch, port, occupancy, marks, drops)

    def register_flow(self, meta: FlowMeta):
        self.flows[meta.flow_id] = meta
        self.bins[meta.flow_id] = [0] * self.nbins
        self.delivered_bytes[meta.flow_id] = 0

    def credit(self, flow_id: int, nbytes: int, t_ns: int):
        idx = t_ns // self.bin_ns
        if idx >= self.nbins:
            idx = self.nbins - 1
        self.bins[flow_id][idx] += nbytes
        self.delivered_bytes[flow_id] += nbytes

    def record_fct(self, flow_id: int, start_ns: int, fct_ns: int):
        self.fct.append((flow_id, start_ns, fct_ns))

    def sample_queue(self, t_ns, switch, port_idx, occupancy, marks, drops):
        self.queue_samples.append((t_ns, switch, port_idx, occupancy, marks, drops))

    # -- derived -----------------------------------------------------------

    def bin_mbps(self, flow_id: int) -> list:
        scale = 8.0 * SEC / self.bin_ns / 1e6
        return [b * scale for b in self.bins[flow_id]]

    def mean_mbps(self, flow_id: int, t0_ns: int, t1_ns: int) -> float:
        """Mean goodput over [t0, t1); boundaries must align to bins."""
        b0 = t0_ns // self.bin_ns
        b1 = -(-t1_ns // self.bin_ns)
        total = sum(self.bins[flow_id][b0:b1])
        return total * 8.0 / ((t1_ns - t0_ns) / SEC) / 1e6

    def jain(self, flow_ids, t0_ns: int, t1_ns: int) -> float:
        xs = [self.mean_mbps(f, t0_ns, t1_ns) for f in flow_ids]
        if not xs:
            return 1.0
        s = sum(xs)
        sq = sum(x * x for x in xs)
        if sq == 0.0:
            return 1.0
        return (s * s) / (len(xs) * sq)

    def fct_stats_ms(self):
        """Mean and population stddev of recorded FCTs, in milliseconds."""
        if not self.fct:
            return 0.0, 0.0
        vals = [f[2] / 1e6 for f in self.fct]
        mean = sum(vals) / len(vals)
        var = sum((v - mean) ** 2 for v in vals) / len(vals)
        return mean, var ** 0.5
