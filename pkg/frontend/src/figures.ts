import * as fs from 'fs';
import * as path from 'path';
import { Table, column, numericColumn, readCsv, requireColumns } from './csv';

export type FigureKind = 'goodput-overlay' | 'fct-bars' | 'queue-trace';

export interface FigureSpec {
  inputDirs: string[];
  kind: FigureKind;
  output: string;
  flows?: number[];      // goodput-overlay: restrict to these flow ids
  port?: number;         // queue-trace: restrict to one port
}

const W = 960;
const H = 480;
const MARGIN = { left: 70, right: 260, top: 50, bottom: 45 };
const COLORS = ['#1f77b4', '#d62728', '#2ca02c', '#ff7f0e', '#9467bd',
  '#8c564b', '#e377c2', '#7f7f7f', '#bcbd22', '#17becf'];

function esc(s: string): string {
  return s.replace(/&/g, '&amp;').replace(/</g, '&lt;').replace(/>/g, '&gt;');
}

/** scenario/variant/seed echo from summary.txt, for figure provenance. */
export function readProvenance(dir: string): string {
  const file = path.join(dir, 'summary.txt');
  if (!fs.existsSync(file)) {
    return path.basename(dir);
  }
  const fields: Record<string, string> = {};
  for (const line of fs.readFileSync(file, 'utf-8').split('\n')) {
    const m = line.match(/^(scenario|variant|seed) = (.*)$/);
    if (m) {
      fields[m[1]] = m[2];
    }
  }
  return `${fields['scenario'] ?? '?'} / ${fields['variant'] ?? '?'} / seed ${fields['seed'] ?? '?'}`;
}

interface Scale {
  x(v: number): number;
  y(v: number): number;
}

function makeScale(xMax: number, yMax: number): Scale {
  const plotW = W - MARGIN.left - MARGIN.right;
  const plotH = H - MARGIN.top - MARGIN.bottom;
  return {
    x: (v) => MARGIN.left + (xMax > 0 ? (v / xMax) * plotW : 0),
    y: (v) => H - MARGIN.bottom - (yMax > 0 ? (v / yMax) * plotH : 0),
  };
}

function axes(xMax: number, yMax: number, xLabel: string, yLabel: string,
  s: Scale): string {
  const parts: string[] = [];
  parts.push(`<line x1="${MARGIN.left}" y1="${H - MARGIN.bottom}" x2="${W - MARGIN.right}" y2="${H - MARGIN.bottom}" stroke="black"/>`);
  parts.push(`<line x1="${MARGIN.left}" y1="${MARGIN.top}" x2="${MARGIN.left}" y2="${H - MARGIN.bottom}" stroke="black"/>`);
  const xTicks = 6;
  for (let i = 0; i <= xTicks; i++) {
    const v = (xMax * i) / xTicks;
    parts.push(`<text x="${s.x(v)}" y="${H - MARGIN.bottom + 18}" font-size="11" text-anchor="middle">${v.toFixed(1)}</text>`);
  }
  const yTicks = 5;
  for (let i = 0; i <= yTicks; i++) {
    const v = (yMax * i) / yTicks;
    parts.push(`<text x="${MARGIN.left - 6}" y="${s.y(v) + 4}" font-size="11" text-anchor="end">${v.toFixed(0)}</text>`);
    parts.push(`<line x1="${MARGIN.left}" y1="${s.y(v)}" x2="${W - MARGIN.right}" y2="${s.y(v)}" stroke="#dddddd"/>`);
  }
  parts.push(`<text x="${(MARGIN.left + W - MARGIN.right) / 2}" y="${H - 8}" font-size="13" text-anchor="middle">${esc(xLabel)}</text>`);
  parts.push(`<text x="16" y="${(MARGIN.top + H - MARGIN.bottom) / 2}" font-size="13" text-anchor="middle" transform="rotate(-90 16 ${(MARGIN.top + H - MARGIN.bottom) / 2})">${esc(yLabel)}</text>`);
  return parts.join('\n');
}

function svgDoc(title: string, body: string): string {
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${W}" height="${H}" viewBox="0 0 ${W} ${H}">`,
    `<rect width="${W}" height="${H}" fill="white"/>`,
    `<text x="${W / 2}" y="24" font-size="15" text-anchor="middle">${esc(title)}</text>`,
    body,
    '</svg>',
  ].join('\n');
}

/**
 * Per-flow goodput time series with legend means taken verbatim from
 * periods.csv (never recomputed from pixels or bins).
 */
export function renderGoodputOverlay(spec: FigureSpec): string {
  const dir = spec.inputDirs[0];
  const goodput = readCsv(path.join(dir, 'goodput.csv'));
  requireColumns(goodput, ['bin_start_s', 'flow_id', 'variant', 'goodput_mbps']);
  const periods = readCsv(path.join(dir, 'periods.csv'));
  requireColumns(periods, ['flow_id', 'period', 'mean_mbps']);
  if (goodput.rows.length === 0) {
    throw new Error(`${goodput.file}: no data rows`);
  }

  const times = numericColumn(goodput, 'bin_start_s');
  const fids = numericColumn(goodput, 'flow_id');
  const values = numericColumn(goodput, 'goodput_mbps');

  const series = new Map<number, Array<[number, number]>>();
  for (let i = 0; i < fids.length; i++) {
    if (spec.flows && spec.flows.indexOf(fids[i]) < 0) {
      continue;
    }
    if (!series.has(fids[i])) {
      series.set(fids[i], []);
    }
    series.get(fids[i])!.push([times[i], values[i]]);
  }
  if (series.size === 0) {
    throw new Error(`${goodput.file}: no rows for requested flows`);
  }

  // Legend means, verbatim strings from periods.csv.
  const perFlow = new Map<number, string[]>();
  const pFids = numericColumn(periods, 'flow_id');
  const pNames = column(periods, 'period');
  const pMeans = column(periods, 'mean_mbps');
  for (let i = 0; i < pFids.length; i++) {
    if (!series.has(pFids[i])) {
      continue;
    }
    if (!perFlow.has(pFids[i])) {
      perFlow.set(pFids[i], []);
    }
    perFlow.get(pFids[i])!.push(`p${pNames[i]}=${pMeans[i]}`);
  }

  const xMax = Math.max(...times);
  const yMax = Math.max(...values, 1);
  const s = makeScale(xMax, yMax);
  const parts: string[] = [axes(xMax, yMax, 'time (s)', 'goodput (Mb/s)', s)];
  let ci = 0;
  let ly = MARGIN.top + 10;
  for (const [fid, pts] of series) {
    const color = COLORS[ci % COLORS.length];
    ci += 1;
    const line = pts.map(([t, v]) => `${s.x(t).toFixed(1)},${s.y(v).toFixed(1)}`).join(' ');
    parts.push(`<polyline points="${line}" fill="none" stroke="${color}" stroke-width="1.2"/>`);
    parts.push(`<rect x="${W - MARGIN.right + 10}" y="${ly - 9}" width="10" height="10" fill="${color}"/>`);
    const means = (perFlow.get(fid) ?? []).join(' ');
    parts.push(`<text x="${W - MARGIN.right + 25}" y="${ly}" font-size="10">flow ${fid}: ${esc(means)}</text>`);
    ly += 16;
  }
  return svgDoc(`goodput overlay (${readProvenance(dir)})`, parts.join('\n'));
}

function meanStd(values: number[]): [number, number] {
  if (values.length === 0) {
    return [0, 0];
  }
  const mean = values.reduce((a, b) => a + b, 0) / values.length;
  const varc = values.reduce((a, b) => a + (b - mean) * (b - mean), 0) / values.length;
  return [mean, Math.sqrt(varc)];
}

/** FCT mean with a stddev whisker, one bar per input directory. */
export function renderFctBars(spec: FigureSpec): string {
  const bars: Array<{ label: string; mean: number; std: number }> = [];
  for (const dir of spec.inputDirs) {
    const fct = readCsv(path.join(dir, 'fct.csv'));
    requireColumns(fct, ['flow_id', 'start_s', 'fct_ms']);
    const values = numericColumn(fct, 'fct_ms');
    if (values.length === 0) {
      throw new Error(`${fct.file}: no data rows`);
    }
    const [mean, std] = meanStd(values);
    bars.push({ label: readProvenance(dir), mean, std });
  }
  const yMax = Math.max(...bars.map((b) => b.mean + b.std), 1);
  const s = makeScale(bars.length, yMax);
  const parts: string[] = [axes(bars.length, yMax, '', 'FCT (ms)', s)];
  const plotW = W - MARGIN.left - MARGIN.right;
  const slot = plotW / bars.length;
  bars.forEach((b, i) => {
    const cx = MARGIN.left + slot * (i + 0.5);
    const barW = Math.min(80, slot * 0.5);
    const y = s.y(b.mean);
    parts.push(`<rect x="${cx - barW / 2}" y="${y}" width="${barW}" height="${H - MARGIN.bottom - y}" fill="${COLORS[i % COLORS.length]}" fill-opacity="0.7"/>`);
    parts.push(`<line x1="${cx}" y1="${s.y(Math.max(0, b.mean - b.std))}" x2="${cx}" y2="${s.y(b.mean + b.std)}" stroke="black"/>`);
    parts.push(`<text x="${cx}" y="${H - MARGIN.bottom + 32}" font-size="10" text-anchor="middle">${esc(b.label)}</text>`);
    parts.push(`<text x="${cx}" y="${y - 6}" font-size="10" text-anchor="middle">${b.mean.toFixed(2)}±${b.std.toFixed(2)}</text>`);
  });
  return svgDoc('mice flow completion time', parts.join('\n'));
}

/** Queue occupancy over time, one series per switch port. */
export function renderQueueTrace(spec: FigureSpec): string {
  const dir = spec.inputDirs[0];
  const queues = readCsv(path.join(dir, 'queues.csv'));
  requireColumns(queues, ['time_s', 'switch', 'port', 'occupancy',
    'cum_marks', 'cum_drops']);
  if (queues.rows.length === 0) {
    throw new Error(`${queues.file}: no data rows`);
  }
  const times = numericColumn(queues, 'time_s');
  const switches = column(queues, 'switch');
  const ports = numericColumn(queues, 'port');
  const occ = numericColumn(queues, 'occupancy');
  const series = new Map<string, Array<[number, number]>>();
  for (let i = 0; i < times.length; i++) {
    if (spec.port !== undefined && ports[i] !== spec.port) {
      continue;
    }
    const key = `${switches[i]}:${ports[i]}`;
    if (!series.has(key)) {
      series.set(key, []);
    }
    series.get(key)!.push([times[i], occ[i]]);
  }
  if (series.size === 0) {
    throw new Error(`${queues.file}: no rows for requested port`);
  }
  const xMax = Math.max(...times);
  const yMax = Math.max(...occ, 1);
  const s = makeScale(xMax, yMax);
  const parts: string[] = [axes(xMax, yMax, 'time (s)', 'occupancy (pkts)', s)];
  let ci = 0;
  let ly = MARGIN.top + 10;
  for (const [key, pts] of series) {
    const color = COLORS[ci % COLORS.length];
    ci += 1;
    const line = pts.map(([t, v]) => `${s.x(t).toFixed(1)},${s.y(v).toFixed(1)}`).join(' ');
    parts.push(`<polyline points="${line}" fill="none" stroke="${color}" stroke-width="1.2"/>`);
    parts.push(`<text x="${W - MARGIN.right + 10}" y="${ly}" font-size="10" fill="${color}">${esc(key)}</text>`);
    ly += 14;
  }
  return svgDoc(`queue occupancy (${readProvenance(dir)})`, parts.join('\n'));
}

export function render(spec: FigureSpec): string {
  let svg: string;
  switch (spec.kind) {
    case 'goodput-overlay':
      svg = renderGoodputOverlay(spec);
      break;
    case 'fct-bars':
      svg = renderFctBars(spec);
      break;
    case 'queue-trace':
      svg = renderQueueTrace(spec);
      break;
    default:
      throw new Error(`unknown figure kind '${spec.kind}'`);
  }
  fs.mkdirSync(path.dirname(path.resolve(spec.output)), { recursive: true });
  fs.writeFileSync(spec.output, svg);
  return svg;
}
