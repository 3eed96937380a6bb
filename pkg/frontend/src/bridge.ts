/**
 * Per-step harmonization callback for an external denoising pipeline.
 *
 * The wrapped pipeline hands the bridge its predicted noise after every
 * denoising step.  The bridge forms the predicted clean sample, decodes it
 * with the pipeline's autoencoder, ships the decoded frames to the
 * harmonizer CLI through tensor-container files, re-encodes the harmonized
 * frames, converts back to a noise prediction, and blends it with the
 * original using weight w.  One exchange per step, strictly sequential.
 */

import { spawnSync } from 'node:child_process';
import { mkdtempSync, rmSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';

import { Tensor, readTensor, readTensorHeader, writeTensor } from './tensor.js';

export class ValidationError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'ValidationError';
  }
}

export class SubprocessError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'SubprocessError';
  }
}

export interface Autoencoder {
  /** observation (T, C, H, W) -> latent */
  encode(x: Tensor): Tensor;
  /** latent -> observation (T, C, H, W) */
  decode(z: Tensor): Tensor;
}

/** Hook invoked with every noise prediction; returns the one to use. */
export type StepHook = (
  epsPred: Tensor,
  xT: Tensor,
  t: number,
  alphaBar: number,
) => Tensor;

export interface PipelineHandle {
  autoencoder: Autoencoder;
  /** (T, C, H, W) of the decoded observation space. */
  observationShape: number[];
  setStepHook(hook: StepHook | null): void;
  run(init: Tensor): Tensor;
}

export interface BridgeConfig {
  /** Guidance weight in [0, 1]. */
  w: number;
  /** Harmonizer CLI argv; default spawns `flowharmony`. */
  command?: string[];
  /** Scratch directory for the exchange files; default: a fresh temp dir. */
  workDir?: string;
}

function assertFloat64(t: Tensor, what: string): Float64Array {
  if (t.dtype !== 'float64') {
    throw new ValidationError(`${what} must be float64, got ${t.dtype}`);
  }
  return t.data as Float64Array;
}

/** x0 = (x_t - sqrt(1 - ab) * eps) / sqrt(ab) */
export function predictX0(xT: Tensor, eps: Tensor, alphaBar: number): Tensor {
  const x = assertFloat64(xT, 'x_t');
  const e = assertFloat64(eps, 'eps');
  const sa = Math.sqrt(alphaBar);
  const sb = Math.sqrt(1 - alphaBar);
  const out = new Float64Array(x.length);
  for (let i = 0; i < x.length; i++) out[i] = (x[i] - sb * e[i]) / sa;
  return { dtype: 'float64', shape: xT.shape.slice(), data: out };
}

/** eps = (x_t - sqrt(ab) * x0) / sqrt(1 - ab) */
export function epsFromX0(xT: Tensor, x0: Tensor, alphaBar: number): Tensor {
  const x = assertFloat64(xT, 'x_t');
  const c = assertFloat64(x0, 'x0');
  const sa = Math.sqrt(alphaBar);
  const sb = Math.sqrt(1 - alphaBar);
  const out = new Float64Array(x.length);
  for (let i = 0; i < x.length; i++) out[i] = (x[i] - sa * c[i]) / sb;
  return { dtype: 'float64', shape: xT.shape.slice(), data: out };
}

function blend(a: Tensor, b: Tensor, w: number): Tensor {
  const pa = assertFloat64(a, 'blend input');
  const pb = assertFloat64(b, 'blend input');
  const out = new Float64Array(pa.length);
  for (let i = 0; i < pa.length; i++) out[i] = (1 - w) * pa[i] + w * pb[i];
  return { dtype: 'float64', shape: a.shape.slice(), data: out };
}

/** Record of one file exchange, mirroring what crossed the boundary. */
export interface StepExchange {
  stepIndex: number;
  alphaBar: number;
  latentPath: string;
  decodedPath: string;
  harmonizedPath: string;
}

export class HarmonizerBridge {
  private readonly command: string[];
  private readonly workDir: string;
  private readonly ownsWorkDir: boolean;
  readonly exchanges: StepExchange[] = [];

  constructor(
    private readonly codesPath: string,
    private readonly config: BridgeConfig,
  ) {
    if (!(config.w >= 0 && config.w <= 1)) {
      throw new ValidationError(`w must be in [0, 1], got ${config.w}`);
    }
    this.command = config.command ?? ['flowharmony'];
    this.ownsWorkDir = config.workDir === undefined;
    this.workDir = config.workDir ?? mkdtempSync(join(tmpdir(), 'fh-bridge-'));
  }

  /** Raise before the first step if the codes file cannot cover the video. */
  validateAgainst(observationShape: number[]): void {
    const { dtype, shape } = readTensorHeader(this.codesPath);
    if (dtype !== 'uint64' || shape.length !== 3) {
      throw new ValidationError(
        `codes file must be a (T, H, W) uint64 tensor, got ${dtype} (${shape})`,
      );
    }
    const [t, , h, w] = observationShape;
    if (shape[0] !== t || shape[1] !== h || shape[2] !== w) {
      throw new ValidationError(
        `codes shape (${shape}) does not match video frames ` +
        `(${t}, ${h}, ${w})`,
      );
    }
  }

  /** One full exchange: harmonize the predicted noise for step t. */
  step(epsPred: Tensor, xT: Tensor, t: number, alphaBar: number,
       ae: Autoencoder): Tensor {
    if (this.config.w === 0) return epsPred; // no-op wrap, skip the exchange
    const x0 = predictX0(xT, epsPred, alphaBar);
    const decoded = ae.decode(x0);
    const decodedPath = join(this.workDir, `step-${t}-decoded.mdtn`);
    const harmonizedPath = join(this.workDir, `step-${t}-harmonized.mdtn`);
    const latentPath = join(this.workDir, `step-${t}-latent.mdtn`);
    writeTensor(latentPath, xT);
    writeTensor(decodedPath, decoded);
    const argv = [
      ...this.command.slice(1),
      'harmonize',
      '--video-tensor', decodedPath,
      '--codes', this.codesPath,
      '--out-tensor', harmonizedPath,
    ];
    const proc = spawnSync(this.command[0], argv, { encoding: 'utf8' });
    if (proc.error !== undefined || proc.status !== 0) {
      const detail = proc.error?.message ?? proc.stderr?.trim() ?? 'unknown failure';
      throw new SubprocessError(`harmonizer failed at step t=${t}: ${detail}`);
    }
    const harmonized = readTensor(harmonizedPath);
    this.exchanges.push({ stepIndex: t, alphaBar, latentPath, decodedPath,
                          harmonizedPath });
    const epsHarm = epsFromX0(xT, ae.encode(harmonized), alphaBar);
    return blend(epsPred, epsHarm, this.config.w);
  }

  dispose(): void {
    if (this.ownsWorkDir) rmSync(this.workDir, { recursive: true, force: true });
  }
}

/**
 * Install the harmonization hook on a pipeline.  Validates the codes file
 * against the pipeline's observation shape before the first step and
 * returns the same handle with the hook attached.
 */
export function attachCallback(
  pipeline: PipelineHandle,
  codesPath: string,
  config: BridgeConfig,
): { pipeline: PipelineHandle; bridge: HarmonizerBridge } {
  const bridge = new HarmonizerBridge(codesPath, config);
  bridge.validateAgainst(pipeline.observationShape);
  pipeline.setStepHook((eps, xT, t, alphaBar) =>
    bridge.step(eps, xT, t, alphaBar, pipeline.autoencoder));
  return { pipeline, bridge };
}
