import { spawnSync } from 'node:child_process';
import { mkdtempSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';

/** argv prefix that runs the harmonizer CLI without relying on PATH. */
export const CLI = ['python3', '-m', 'flowharmony.cli'];

export function runPython(code: string): string {
  const proc = spawnSync('python3', ['-c', code], { encoding: 'utf8' });
  if (proc.status !== 0) {
    throw new Error(`python helper failed:\n${proc.stderr}`);
  }
  return proc.stdout;
}

export function tempDir(): string {
  return mkdtempSync(join(tmpdir(), 'fh-bridge-test-'));
}

/** Deterministic pseudo-random float64 stream for fixtures. */
export function randomArray(n: number, seed: number): Float64Array {
  let state = BigInt(seed) * 2862933555777941757n + 3037000493n;
  const out = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    state = (state * 6364136223846793005n + 1442695040888963407n) & 0xffffffffffffffffn;
    out[i] = Number(state >> 11n) / 2 ** 53 - 0.5;
  }
  return out;
}

/** Write trajectory codes for a horizontally translating texture. */
export function makeCodes(dir: string, t: number, h: number, w: number): string {
  const codesPath = join(dir, 'codes.mdtn');
  runPython(`
import numpy as np
from flowharmony import FlowField, OcclusionMask, flow_code
from flowharmony import io_formats as iof
t, h, w = ${t}, ${h}, ${w}
flows = np.zeros((t - 1, h, w, 2))
flows[..., 1] = -1.0  # backward flow of a texture translating right
enc = flow_code(FlowField(flows), OcclusionMask.none(t, h, w))
iof.write_codes(${JSON.stringify(codesPath)}, enc)
`);
  return codesPath;
}
