import * as fs from 'fs';

/** Error raised when an input CSV is missing a required column. */
export class ColumnError extends Error {
  constructor(public readonly file: string, public readonly column: string) {
    super(`${file}: missing required column '${column}'`);
    this.name = 'ColumnError';
  }
}

export interface Table {
  file: string;
  header: string[];
  /** Raw string fields, one array per data row, aligned with header. */
  rows: string[][];
}

export function parseCsv(file: string, text: string): Table {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new Error(`${file}: empty CSV`);
  }
  const header = lines[0].split(',');
  const rows = lines.slice(1).map((l) => l.split(','));
  return { file, header, rows };
}

export function readCsv(path: string): Table {
  return parseCsv(path, fs.readFileSync(path, 'utf-8'));
}

/** Column accessor that keeps the raw strings; throws ColumnError if absent. */
export function column(table: Table, name: string): string[] {
  const idx = table.header.indexOf(name);
  if (idx < 0) {
    throw new ColumnError(table.file, name);
  }
  return table.rows.map((r) => r[idx] ?? '');
}

export function numericColumn(table: Table, name: string): number[] {
  return column(table, name).map((v) => Number(v));
}

export function requireColumns(table: Table, names: string[]): void {
  for (const n of names) {
    if (table.header.indexOf(n) < 0) {
      throw new ColumnError(table.file, n);
    }
  }
}
