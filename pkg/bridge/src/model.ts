// Score model registry.  A model maps (state image, step index) to a score
// image of identical shape.  Built-in analytic models cover testing and
// guidance-only experiments; tfjs:DIR loads a pretrained TensorFlow.js
// layers checkpoint from disk.

import { readFile } from 'node:fs/promises';
import { join } from 'node:path';

export interface ScoreModel {
  /** Human-readable description, reported on startup. */
  readonly name: string;
  evaluate(
    state: Float32Array,
    height: number,
    width: number,
    step: number,
  ): Promise<Float32Array>;
}

class ZeroModel implements ScoreModel {
  readonly name = 'zero score';
  async evaluate(state: Float32Array): Promise<Float32Array> {
    return new Float32Array(state.length);
  }
}

class GaussianModel implements ScoreModel {
  readonly name: string;
  constructor(
    private mean: number,
    private std: number,
  ) {
    if (!(std > 0)) throw new Error('gaussian model needs std > 0');
    this.name = `gaussian clean score (mean ${mean}, std ${std})`;
  }
  async evaluate(state: Float32Array): Promise<Float32Array> {
    const out = new Float32Array(state.length);
    const inv = 1 / (this.std * this.std);
    for (let i = 0; i < state.length; i++) {
      out[i] = (this.mean - state[i]) * inv;
    }
    return out;
  }
}

class SmoothnessModel implements ScoreModel {
  readonly name: string;
  constructor(private weight: number) {
    if (!(weight >= 0)) throw new Error('smoothness weight must be >= 0');
    this.name = `quadratic smoothness score (weight ${weight})`;
  }
  async evaluate(state: Float32Array, height: number, width: number): Promise<Float32Array> {
    const out = new Float32Array(state.length);
    const at = (r: number, c: number) => {
      // reflecting boundary
      const rr = r < 0 ? 0 : r >= height ? height - 1 : r;
      const cc = c < 0 ? 0 : c >= width ? width - 1 : c;
      return state[rr * width + cc];
    };
    for (let r = 0; r < height; r++) {
      for (let c = 0; c < width; c++) {
        const lap =
          at(r - 1, c) + at(r + 1, c) + at(r, c - 1) + at(r, c + 1) - 4 * at(r, c);
        out[r * width + c] = this.weight * lap;
      }
    }
    return out;
  }
}

/**
 * TensorFlow.js layers checkpoint.  Expects the standard on-disk layout
 * (model.json with a weightsManifest naming sibling weight files).  The
 * model must take two inputs, the state as [1, H, W, 1] and the step index
 * as [1, 1], and return [1, H, W, 1]; adapt checkpoints with a different
 * noise-level parameterization (sigma or alpha instead of the raw step) by
 * wrapping them in a model that does the conversion.
 */
class TfjsModel implements ScoreModel {
  readonly name: string;
  private constructor(
    private tf: any,
    private model: any,
    dir: string,
  ) {
    this.name = `tfjs layers model from ${dir}`;
  }

  static async load(dir: string): Promise<TfjsModel> {
    let tf: any;
    try {
      tf = await import('@tensorflow/tfjs');
    } catch {
      throw new Error(
        'tfjs model requested but @tensorflow/tfjs is not installed',
      );
    }
    const manifest = JSON.parse(await readFile(join(dir, 'model.json'), 'utf-8'));
    const weightSpecs: any[] = [];
    const buffers: Buffer[] = [];
    for (const group of manifest.weightsManifest ?? []) {
      weightSpecs.push(...group.weights);
      for (const path of group.paths) {
        buffers.push(await readFile(join(dir, path)));
      }
    }
    const weightBlob = Buffer.concat(buffers);
    const weightData = weightBlob.buffer.slice(
      weightBlob.byteOffset,
      weightBlob.byteOffset + weightBlob.byteLength,
    );
    const model = await tf.loadLayersModel({
      load: async () => ({
        modelTopology: manifest.modelTopology,
        format: manifest.format,
        weightSpecs,
        weightData,
      }),
    });
    return new TfjsModel(tf, model, dir);
  }

  async evaluate(
    state: Float32Array,
    height: number,
    width: number,
    step: number,
  ): Promise<Float32Array> {
    const tf = this.tf;
    const out = tf.tidy(() => {
      const image = tf.tensor4d(state, [1, height, width, 1]);
      const k = tf.tensor2d([[step]], [1, 1]);
      const inputs = this.model.inputs.length > 1 ? [image, k] : image;
      return this.model.predict(inputs);
    });
    const data = await out.data();
    out.dispose();
    if (data.length !== state.length) {
      throw new Error(
        `model returned ${data.length} values for ${state.length} pixels`,
      );
    }
    return Float32Array.from(data);
  }
}

export async function loadModel(spec: string): Promise<ScoreModel> {
  const sep = spec.indexOf(':');
  const kind = sep < 0 ? spec : spec.slice(0, sep);
  const rest = sep < 0 ? '' : spec.slice(sep + 1);
  switch (kind) {
    case 'zero':
      return new ZeroModel();
    case 'gaussian': {
      const parts = rest.split(',').map(Number);
      if (parts.length !== 2 || parts.some(Number.isNaN)) {
        throw new Error(`bad gaussian model spec: ${spec}`);
      }
      return new GaussianModel(parts[0], parts[1]);
    }
    case 'smooth': {
      const weight = Number(rest);
      if (Number.isNaN(weight)) throw new Error(`bad smoothness spec: ${spec}`);
      return new SmoothnessModel(weight);
    }
    case 'tfjs':
      if (!rest) throw new Error('tfjs model needs a checkpoint directory');
      return TfjsModel.load(rest);
    default:
      throw new Error(
        `unknown model kind ${kind} (use zero, gaussian:MEAN,STD, smooth:W, tfjs:DIR)`,
      );
  }
}
