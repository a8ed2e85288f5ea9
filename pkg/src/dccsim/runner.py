"""Run scenarios and materialize their outputs.

Output files (column order is part of the interface):
  goodput.csv   bin_start_s,flow_id,variant,goodput_mbps
  periods.csv   flow_id,period,mean_mbps
  fct.csv       flow_id,start_s,fct_ms
  queues.csv    time_s,switch,port,occupancy,cum_marks,cum_drops
  summary.txt   scenario echo, parameter echo, headline means, Jain indices

Outputs are byte-identical across runs with the same config and seed.
"""

import os
from dataclasses import fields

from .builder import build
from .config import ScenarioConfig
from .engine import SEC, ns_from_s
from .metrics import Metrics


def run_scenario(cfg: ScenarioConfig, out_dir: str | None = None):
    sim = build(cfg)
    metrics = sim.run()
    if out_dir is not None:
        write_outputs(cfg, metrics, out_dir)
    return metrics, sim


def period_windows(cfg: ScenarioConfig):
    """Labeled [t0, t1) windows: numbered periods, 'all', and 'last5'."""
    bounds = cfg.periods_s
    wins = []
    for i in range(len(bounds) - 1):
        wins.append((str(i + 1), bounds[i], bounds[i + 1]))
    wins.append(("all", 0.0, cfg.duration_s))
    if cfg.duration_s > 5.0:
        wins.append(("last5", cfg.duration_s - 5.0, cfg.duration_s))
    return wins


def write_outputs(cfg: ScenarioConfig, metrics: Metrics, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    variant = cfg.variant
    bin_s = metrics.bin_ns / SEC

    lines = ["bin_start_s,flow_id,variant,goodput_mbps"]
    for fid in sorted(metrics.flows):
        meta = metrics.flows[fid]
        series = metrics.bin_mbps(fid)
        b0 = int(ns_from_s(meta.start_s) // metrics.bin_ns)
        if meta.kind == "mice":
            nonzero = [i for i, v in enumerate(series) if v > 0]
            b1 = (nonzero[-1] + 1) if nonzero else (b0 + 1)
        else:
            b1 = min(len(series), -(-ns_from_s(meta.stop_s) // metrics.bin_ns))
        for i in range(b0, b1):
            lines.append(f"{i * bin_s:.3f},{fid},{variant},{series[i]:.6f}")
    _write(out_dir, "goodput.csv", lines)

    lines = ["flow_id,period,mean_mbps"]
    for fid in sorted(metrics.flows):
        for label, t0, t1 in period_windows(cfg):
            mean = metrics.mean_mbps(fid, ns_from_s(t0), ns_from_s(t1))
            lines.append(f"{fid},{label},{mean:.6f}")
    _write(out_dir, "periods.csv", lines)

    lines = ["flow_id,start_s,fct_ms"]
    for fid, start_ns, fct_ns in sorted(metrics.fct):
        lines.append(f"{fid},{start_ns / SEC:.6f},{fct_ns / 1e6:.6f}")
    _write(out_dir, "fct.csv", lines)

    lines = ["time_s,switch,port,occupancy,cum_marks,cum_drops"]
    for t, sw, port, occ, marks, drops in metrics.queue_samples:
        lines.append(f"{t / SEC:.3f},{sw},{port},{occ},{marks},{drops}")
    _write(out_dir, "queues.csv", lines)

    _write(out_dir, "summary.txt", _summary_lines(cfg, metrics))


def _summary_lines(cfg: ScenarioConfig, metrics: Metrics):
    out = [f"scenario = {cfg.name}",
           f"variant = {cfg.variant}",
           f"seed = {cfg.seed}",
           f"duration_s = {cfg.duration_s:g}",
           ""]
    out.append("[parameters]")
    for f in fields(cfg.params):
        v = getattr(cfg.params, f.name)
        out.append(f"{f.name} = {v if v is not None else 'auto'}")
    out.append("")
    out.append("[flows]")
    for fid in sorted(metrics.flows):
        m = metrics.flows[fid]
        tag = " tagged" if m.tagged else ""
        out.append(f"flow {fid}: {m.kind} {m.src}->{m.dst} "
                   f"[{m.start_s:g},{m.stop_s:g}]s{tag}")
    out.append("")
    out.append("[headline]")
    elephants = [fid for fid, m in metrics.flows.items() if m.kind != "mice"]
    for label, t0, t1 in period_windows(cfg):
        t0_ns, t1_ns = ns_from_s(t0), ns_from_s(t1)
        for fid in sorted(metrics.flows):
            if metrics.flows[fid].kind == "mice":
                continue
            mean = metrics.mean_mbps(fid, t0_ns, t1_ns)
            out.append(f"mean_mbps flow={fid} period={label} = {mean:.6f}")
        if elephants:
            out.append(f"jain period={label} = "
                       f"{metrics.jain(elephants, t0_ns, t1_ns):.6f}")
    if metrics.fct:
        mean_ms, std_ms = metrics.fct_stats_ms()
        out.append(f"fct_count = {len(metrics.fct)}")
        out.append(f"fct_mean_ms = {mean_ms:.6f}")
        out.append(f"fct_std_ms = {std_ms:.6f}")
    return out


def _write(out_dir, name, lines):
    path = os.path.join(out_dir, name)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IOError(f"cannot write {path}: {exc}") from exc
