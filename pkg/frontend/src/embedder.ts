// Image-to-embedding backends. The production backend wraps a CLIP-family
// vision model; tests inject a deterministic stub so the pipeline logic is
// verifiable without model weights.

import { createHash } from 'node:crypto';
import { promises as fs } from 'node:fs';

export class ModelLoadFailure extends Error {}
export class DecodeFailure extends Error {}

export interface Embedder {
  readonly dim: number;
  /** One unit-norm embedding for the image at `path`. */
  embed(path: string): Promise<Float32Array>;
}

export function normalizeInPlace(vec: Float32Array): Float32Array {
  let sq = 0;
  for (let i = 0; i < vec.length; i++) sq += vec[i] * vec[i];
  const norm = Math.sqrt(sq);
  if (!(norm > 0) || !Number.isFinite(norm)) {
    throw new DecodeFailure('embedding has non-finite or zero norm');
  }
  for (let i = 0; i < vec.length; i++) vec[i] = vec[i] / norm;
  return vec;
}

/**
 * CLIP-family backend via transformers.js. The dependency and its weights
 * load lazily on first use; environments without the model get a
 * ModelLoadFailure instead of a crash at import time.
 */
export class ClipEmbedder implements Embedder {
  readonly dim: number;
  private pipe: any = null;

  constructor(private readonly modelId: string, dim = 512) {
    this.dim = dim;
  }

  private async load(): Promise<any> {
    if (this.pipe) return this.pipe;
    try {
      const { pipeline } = await import('@xenova/transformers');
      this.pipe = await pipeline('image-feature-extraction', this.modelId, {
        quantized: true,
      });
    } catch (err) {
      throw new ModelLoadFailure(`cannot load model ${this.modelId}: ${String(err)}`);
    }
    return this.pipe;
  }

  async embed(path: string): Promise<Float32Array> {
    const pipe = await this.load();
    let out: any;
    try {
      out = await pipe(path, { pooling: 'none' });
    } catch (err) {
      throw new DecodeFailure(`${path}: ${String(err)}`);
    }
    const data = Float32Array.from(out.data ?? out[0]?.data ?? []);
    if (data.length < this.dim) {
      throw new DecodeFailure(`${path}: model returned ${data.length} values, expected ${this.dim}`);
    }
    return normalizeInPlace(data.slice(0, this.dim));
  }
}

/**
 * Deterministic test backend: the embedding is a hash-seeded unit vector of
 * the file's bytes, so identical files embed identically and any byte change
 * moves the vector. Zero-length files fail like undecodable images.
 */
export class StubEmbedder implements Embedder {
  constructor(readonly dim = 512) {}

  async embed(path: string): Promise<Float32Array> {
    const bytes = await fs.readFile(path);
    if (bytes.length === 0) {
      throw new DecodeFailure(`${path}: empty file`);
    }
    const vec = new Float32Array(this.dim);
    let counter = 0;
    let filled = 0;
    while (filled < this.dim) {
      const digest = createHash('sha256')
        .update(bytes)
        .update(String(counter++))
        .digest();
      for (let i = 0; i + 4 <= digest.length && filled < this.dim; i += 4) {
        // map 32 hash bits onto [-1, 1)
        vec[filled++] = digest.readUInt32LE(i) / 2 ** 31 - 1;
      }
    }
    return normalizeInPlace(vec);
  }
}
