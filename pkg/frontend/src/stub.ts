/**
 * Minimal in-process denoising pipeline used to exercise the bridge
 * without shipping any model weights.  Deterministic DDIM updates with a
 * pluggable noise model and a post-noise-prediction step hook — the same
 * hook granularity the bridge targets.
 */

import { Tensor } from './tensor.js';
import { Autoencoder, PipelineHandle, StepHook, predictX0 } from './bridge.js';

export class IdentityAutoencoder implements Autoencoder {
  encode(x: Tensor): Tensor {
    return { dtype: x.dtype, shape: x.shape.slice(), data: x.data.slice() as Tensor['data'] };
  }

  decode(z: Tensor): Tensor {
    return this.encode(z);
  }
}

/** eps-prediction model: (x_t, t, alphaBar) -> predicted noise. */
export type NoiseModel = (xT: Tensor, t: number, alphaBar: number) => Tensor;

/** Oracle that knows the clean target, as used by the desk-scale tests. */
export function exactNoiseOracle(target: Float64Array): NoiseModel {
  return (xT, _t, alphaBar) => {
    const x = xT.data as Float64Array;
    const out = new Float64Array(x.length);
    if (alphaBar >= 1) {
      return { dtype: 'float64', shape: xT.shape.slice(), data: out };
    }
    const sa = Math.sqrt(alphaBar);
    const sb = Math.sqrt(1 - alphaBar);
    for (let i = 0; i < x.length; i++) out[i] = (x[i] - sa * target[i]) / sb;
    return { dtype: 'float64', shape: xT.shape.slice(), data: out };
  };
}

/** Linear variance schedule matching the primary's default construction. */
export function linearAlphaBar(T = 1000, betaStart = 1e-4, betaEnd = 2e-2): Float64Array {
  const ab = new Float64Array(T + 1);
  ab[0] = 1;
  for (let t = 1; t <= T; t++) {
    const beta = betaStart + ((betaEnd - betaStart) * (t - 1)) / (T - 1);
    ab[t] = ab[t - 1] * (1 - beta);
  }
  return ab;
}

export class StubPipeline implements PipelineHandle {
  private hook: StepHook | null = null;

  constructor(
    readonly autoencoder: Autoencoder,
    readonly observationShape: number[],
    private readonly model: NoiseModel,
    private readonly alphaBar: Float64Array,
    private readonly timesteps: number[],
  ) {}

  setStepHook(hook: StepHook | null): void {
    this.hook = hook;
  }

  run(init: Tensor): Tensor {
    let x = init;
    const ts = this.timesteps;
    for (let i = 0; i < ts.length - 1; i++) {
      const t = ts[i];
      const tPrev = ts[i + 1];
      const ab = this.alphaBar[t];
      let eps = this.model(x, t, ab);
      if (this.hook !== null) eps = this.hook(eps, x, t, ab);
      x = this.ddimStep(x, eps, ab, this.alphaBar[tPrev]);
    }
    return x;
  }

  private ddimStep(xT: Tensor, eps: Tensor, ab: number, abPrev: number): Tensor {
    const x0 = predictX0(xT, eps, ab);
    const sa = Math.sqrt(abPrev);
    const sb = Math.sqrt(1 - abPrev);
    const x = x0.data as Float64Array;
    const e = eps.data as Float64Array;
    const out = new Float64Array(x.length);
    for (let i = 0; i < x.length; i++) out[i] = sa * x[i] + sb * e[i];
    return { dtype: 'float64', shape: xT.shape.slice(), data: out };
  }
}

/** Evenly spaced descending timesteps T .. 0 for a run of `steps` updates. */
export function timestepSequence(T: number, steps: number): number[] {
  const ts = new Set<number>();
  for (let i = 0; i <= steps; i++) ts.add(Math.round(T - (T * i) / steps));
  return [...ts].sort((a, b) => b - a);
}
