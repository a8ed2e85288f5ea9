#!/usr/bin/env node
import { ColumnError } from './csv';
import { FigureKind, FigureSpec, render } from './figures';

function usage(): never {
  console.error(
    'Usage: dccsim-plots --input-dir <dir> [--input-dir <dir> ...] ' +
    '--kind goodput-overlay|fct-bars|queue-trace --out <file.svg> ' +
    '[--flows 0,1,2] [--port N]');
  process.exit(2);
}

export function parseArgs(argv: string[]): FigureSpec {
  const inputDirs: string[] = [];
  let kind: FigureKind | undefined;
  let output: string | undefined;
  let flows: number[] | undefined;
  let port: number | undefined;
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    const next = () => {
      i += 1;
      if (i >= argv.length) {
        usage();
      }
      return argv[i];
    };
    if (a === '--input-dir') {
      inputDirs.push(next());
    } else if (a === '--kind') {
      const k = next();
      if (k !== 'goodput-overlay' && k !== 'fct-bars' && k !== 'queue-trace') {
        usage();
      }
      kind = k;
    } else if (a === '--out') {
      output = next();
    } else if (a === '--flows') {
      flows = next().split(',').map((s) => Number(s.trim()));
    } else if (a === '--port') {
      port = Number(next());
    } else {
      usage();
    }
  }
  if (inputDirs.length === 0 || !kind || !output) {
    usage();
  }
  return { inputDirs, kind, output, flows, port };
}

function main(): void {
  const spec = parseArgs(process.argv.slice(2));
  try {
    render(spec);
    console.log(`wrote ${spec.output}`);
  } catch (err) {
    if (err instanceof ColumnError) {
      console.error(`column error: ${err.message}`);
      process.exit(3);
    }
    console.error(String(err instanceof Error ? err.message : err));
    process.exit(1);
  }
}

if (require.main === module) {
  main();
}
