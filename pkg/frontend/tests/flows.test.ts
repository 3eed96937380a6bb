import { readFileSync } from 'node:fs';
import { join } from 'node:path';
import { describe, expect, it } from 'vitest';

import { ShapeError, encodeFlo, exportFlows } from '../src/flows.js';
import { Tensor, readTensor } from '../src/tensor.js';
import { runPython, tempDir } from './helpers.js';

function flowTensor(n: number, h: number, w: number,
                    fill: (i: number, j: number) => [number, number]): Tensor {
  const data = new Float64Array(n * h * w * 2);
  for (let s = 0; s < n; s++) {
    for (let p = 0; p < h * w; p++) {
      const [u, v] = fill(s, p);
      data[(s * h * w + p) * 2] = u;
      data[(s * h * w + p) * 2 + 1] = v;
    }
  }
  return { dtype: 'float64', shape: [n, h, w, 2], data };
}

describe('flow export', () => {
  it('writes .flo files the primary reads back bit-identically', () => {
    const dir = tempDir();
    const flows = flowTensor(2, 3, 4, (s, p) => [s + p * 0.25, -p * 0.5]);
    exportFlows(flows, join(dir, 'flows'), join(dir, 'masks'),
                { occlusions: undefined, warn: () => {} });
    const echoed = join(dir, 'echo.mdtn');
    runPython(`
import numpy as np
from flowharmony import io_formats as iof
field = iof.read_flow_dir(${JSON.stringify(join(dir, 'flows'))})
# back to file order (u, v) for comparison
iof.write_tensor(${JSON.stringify(echoed)},
                 field.flows[..., ::-1].astype(np.float32))
`);
    const back = readTensor(echoed);
    expect(back.shape).toEqual([2, 3, 4, 2]);
    const expected = new Float32Array(flows.data as Float64Array);
    expect([...(back.data as Float32Array)]).toEqual([...expected]);
  });

  it('u-only flow imports as horizontal displacement', () => {
    const dir = tempDir();
    const flows = flowTensor(1, 2, 2, () => [1.5, 0]);
    exportFlows(flows, join(dir, 'flows'), join(dir, 'masks'), { warn: () => {} });
    const out = runPython(`
from flowharmony import io_formats as iof
field = iof.read_flow_dir(${JSON.stringify(join(dir, 'flows'))})
dy, dx = field.flows[0, 0, 0]
print(f"{dy} {dx}")
`).trim();
    expect(out).toBe('0.0 1.5');
  });

  it('writes all-visible masks with a warning when occlusions are missing', () => {
    const dir = tempDir();
    const warnings: string[] = [];
    exportFlows(flowTensor(2, 3, 3, () => [0, 0]), join(dir, 'flows'),
                join(dir, 'masks'), { warn: (m) => warnings.push(m) });
    expect(warnings).toHaveLength(1);
    expect(warnings[0]).toMatch(/all-visible/);
    const out = runPython(`
from flowharmony import io_formats as iof
occ = iof.read_masks(${JSON.stringify(join(dir, 'masks'))})
print(int(occ.masks.sum()))
`).trim();
    expect(out).toBe('0');
  });

  it('round-trips occlusion flags through the mask PNGs', () => {
    const dir = tempDir();
    const occ: Tensor = { dtype: 'uint8', shape: [1, 2, 2],
                          data: Uint8Array.of(1, 0, 0, 1) };
    exportFlows(flowTensor(1, 2, 2, () => [0, 0]), join(dir, 'flows'),
                join(dir, 'masks'), { occlusions: occ });
    const out = runPython(`
from flowharmony import io_formats as iof
occ = iof.read_masks(${JSON.stringify(join(dir, 'masks'))})
print(occ.masks.astype(int).ravel().tolist())
`).trim();
    expect(out).toBe('[1, 0, 0, 1]');
  });

  it('rejects mismatched shapes', () => {
    expect(() => encodeFlo(new Float32Array(10), 2, 2)).toThrow(ShapeError);
    const flows = flowTensor(1, 2, 2, () => [0, 0]);
    const occ: Tensor = { dtype: 'uint8', shape: [2, 2, 2],
                          data: new Uint8Array(8) };
    expect(() => exportFlows(flows, '/tmp/x', '/tmp/y', { occlusions: occ }))
      .toThrow(ShapeError);
  });

  it('names files in frame order', () => {
    const dir = tempDir();
    exportFlows(flowTensor(3, 2, 2, () => [0, 0]), join(dir, 'flows'),
                join(dir, 'masks'), { warn: () => {} });
    for (const name of ['0001.flo', '0002.flo', '0003.flo']) {
      expect(readFileSync(join(dir, 'flows', name)).length).toBe(12 + 2 * 2 * 2 * 4);
    }
  });
});
