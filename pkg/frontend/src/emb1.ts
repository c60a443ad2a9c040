// EMB1 embedding interchange format, little-endian:
//   magic "EMB1" | u32 version=1 | u32 dim | u32 count | u8 hasLabels
//   count*dim f32 row-major | count*u32 labels (only if hasLabels)
// A file is one or more records back to back; each record is one batch.

import { promises as fs } from 'node:fs';
import { dirname, join } from 'node:path';
import { randomBytes } from 'node:crypto';

export const EMB_MAGIC = 'EMB1';
export const EMB_VERSION = 1;

export interface EmbRecord {
  dim: number;
  vectors: Float32Array; // count * dim, row-major
  labels?: Uint32Array; // one per row
}

export function recordCount(rec: EmbRecord): number {
  return rec.vectors.length / rec.dim;
}

export function encodeRecord(rec: EmbRecord): Buffer {
  const count = recordCount(rec);
  if (!Number.isInteger(count) || count < 1) {
    throw new Error(`vector data of length ${rec.vectors.length} is not a multiple of dim ${rec.dim}`);
  }
  if (rec.labels && rec.labels.length !== count) {
    throw new Error(`${rec.labels.length} labels for ${count} rows`);
  }
  const header = Buffer.alloc(17);
  header.write(EMB_MAGIC, 0, 'ascii');
  header.writeUInt32LE(EMB_VERSION, 4);
  header.writeUInt32LE(rec.dim, 8);
  header.writeUInt32LE(count, 12);
  header.writeUInt8(rec.labels ? 1 : 0, 16);

  const body = Buffer.alloc(4 * rec.vectors.length);
  for (let i = 0; i < rec.vectors.length; i++) {
    body.writeFloatLE(rec.vectors[i], 4 * i);
  }
  if (!rec.labels) return Buffer.concat([header, body]);
  const tail = Buffer.alloc(4 * count);
  for (let i = 0; i < count; i++) {
    tail.writeUInt32LE(rec.labels[i], 4 * i);
  }
  return Buffer.concat([header, body, tail]);
}

export function encodeFile(records: EmbRecord[]): Buffer {
  return Buffer.concat(records.map(encodeRecord));
}

/** Decoder used by the test suite to validate emitted files. */
export function decodeFile(data: Buffer): EmbRecord[] {
  const records: EmbRecord[] = [];
  let offset = 0;
  while (offset < data.length) {
    if (data.length - offset < 17) {
      throw new Error(`truncated record header at byte ${offset}`);
    }
    const magic = data.toString('ascii', offset, offset + 4);
    if (magic !== EMB_MAGIC) {
      throw new Error(`bad magic ${JSON.stringify(magic)} at byte ${offset}`);
    }
    const version = data.readUInt32LE(offset + 4);
    if (version !== EMB_VERSION) {
      throw new Error(`unsupported version ${version}`);
    }
    const dim = data.readUInt32LE(offset + 8);
    const count = data.readUInt32LE(offset + 12);
    const hasLabels = data.readUInt8(offset + 16) === 1;
    offset += 17;

    const vecBytes = 4 * dim * count;
    if (data.length - offset < vecBytes) {
      throw new Error(`truncated vector section at byte ${data.length}`);
    }
    const vectors = new Float32Array(count * dim);
    for (let i = 0; i < vectors.length; i++) {
      vectors[i] = data.readFloatLE(offset + 4 * i);
    }
    offset += vecBytes;

    let labels: Uint32Array | undefined;
    if (hasLabels) {
      const labBytes = 4 * count;
      if (data.length - offset < labBytes) {
        throw new Error(`truncated label section at byte ${data.length}`);
      }
      labels = new Uint32Array(count);
      for (let i = 0; i < count; i++) {
        labels[i] = data.readUInt32LE(offset + 4 * i);
      }
      offset += labBytes;
    }
    records.push({ dim, vectors, labels });
  }
  return records;
}

/** Atomic write: temp file in the target directory, then rename. */
export async function writeFileAtomic(path: string, data: Buffer): Promise<void> {
  const tmp = join(dirname(path), `.${randomBytes(8).toString('hex')}.tmp`);
  try {
    await fs.writeFile(tmp, data);
    await fs.rename(tmp, path);
  } catch (err) {
    await fs.rm(tmp, { force: true });
    throw err;
  }
}
