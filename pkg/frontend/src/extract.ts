// Folder-to-EMB1 extraction: walk the image tree in sorted order, embed
// every image, and write one EMB1 record per batch. Embedding work may run
// concurrently; output order is fixed by the sorted file list, not by
// completion order.

import { promises as fs } from 'node:fs';
import { join, relative, sep } from 'node:path';

import { EmbRecord, encodeFile, writeFileAtomic } from './emb1.js';
import { DecodeFailure, Embedder } from './embedder.js';

export class NoImages extends Error {}

const IMAGE_EXTENSIONS = new Set(['.jpg', '.jpeg', '.png', '.webp', '.bmp', '.gif']);

export interface ExtractOptions {
  imagesDir: string;
  outPath: string;
  embedder: Embedder;
  batchSize?: number;
  labelsFromDirs?: boolean;
  concurrency?: number;
  log?: (line: string) => void;
}

export interface ExtractSummary {
  embedded: number;
  skipped: { path: string; reason: string }[];
  batches: number;
}

interface ImageEntry {
  path: string;
  label?: number;
}

function hasImageExtension(name: string): boolean {
  const dot = name.lastIndexOf('.');
  return dot >= 0 && IMAGE_EXTENSIONS.has(name.slice(dot).toLowerCase());
}

async function walkSorted(root: string): Promise<string[]> {
  const out: string[] = [];
  async function recurse(dir: string) {
    const entries = await fs.readdir(dir, { withFileTypes: true });
    entries.sort((a, b) => (a.name < b.name ? -1 : a.name > b.name ? 1 : 0));
    for (const entry of entries) {
      const full = join(dir, entry.name);
      if (entry.isDirectory()) await recurse(full);
      else if (entry.isFile() && hasImageExtension(entry.name)) out.push(full);
    }
  }
  await recurse(root);
  return out;
}

/** Sorted image list; with labelsFromDirs, the label is the index of the
 * top-level subdirectory in sorted order. */
export async function listImages(root: string, labelsFromDirs: boolean): Promise<ImageEntry[]> {
  const files = await walkSorted(root);
  if (files.length === 0) {
    throw new NoImages(`no decodable images under ${root}`);
  }
  if (!labelsFromDirs) return files.map((path) => ({ path }));

  const dirIndex = new Map<string, number>();
  const entries: ImageEntry[] = [];
  for (const path of files) {
    const rel = relative(root, path);
    const top = rel.split(sep)[0];
    const key = rel.includes(sep) ? top : '';
    if (!dirIndex.has(key)) dirIndex.set(key, dirIndex.size);
    entries.push({ path, label: dirIndex.get(key)! });
  }
  return entries;
}

async function mapLimited<T, R>(
  items: T[],
  limit: number,
  fn: (item: T, index: number) => Promise<R>,
): Promise<R[]> {
  const results = new Array<R>(items.length);
  let next = 0;
  async function worker() {
    while (next < items.length) {
      const index = next++;
      results[index] = await fn(items[index], index);
    }
  }
  await Promise.all(Array.from({ length: Math.min(limit, items.length) }, worker));
  return results;
}

export async function extract(options: ExtractOptions): Promise<ExtractSummary> {
  const {
    imagesDir,
    outPath,
    embedder,
    batchSize = 200,
    labelsFromDirs = false,
    concurrency = 4,
    log = () => {},
  } = options;
  if (batchSize < 1) throw new Error(`batchSize must be >= 1, got ${batchSize}`);

  const images = await listImages(imagesDir, labelsFromDirs);
  const embedded = await mapLimited(images, concurrency, async (entry) => {
    try {
      return { entry, vector: await embedder.embed(entry.path) };
    } catch (err) {
      if (err instanceof DecodeFailure) {
        log(`skip ${entry.path}: ${err.message}`);
        return { entry, vector: null, reason: err.message };
      }
      throw err;
    }
  });

  const kept = embedded.filter((e) => e.vector !== null);
  const skipped = embedded
    .filter((e) => e.vector === null)
    .map((e) => ({ path: e.entry.path, reason: (e as { reason?: string }).reason ?? 'decode failure' }));
  if (kept.length === 0) {
    throw new NoImages(`every image under ${imagesDir} failed to decode`);
  }

  const dim = embedder.dim;
  const records: EmbRecord[] = [];
  for (let start = 0; start < kept.length; start += batchSize) {
    const chunk = kept.slice(start, start + batchSize);
    const vectors = new Float32Array(chunk.length * dim);
    chunk.forEach((e, i) => vectors.set(e.vector!, i * dim));
    const record: EmbRecord = { dim, vectors };
    if (labelsFromDirs) {
      record.labels = Uint32Array.from(chunk.map((e) => e.entry.label ?? 0));
    }
    records.push(record);
  }
  await writeFileAtomic(outPath, encodeFile(records));
  return { embedded: kept.length, skipped, batches: records.length };
}
