#!/usr/bin/env node
// extract --images <dir> --model <id> --out <file.emb> [--labels-from-dirs]
//         [--batch-size N] [--concurrency N]

import { parseArgs } from 'node:util';

import { ClipEmbedder, ModelLoadFailure } from './embedder.js';
import { NoImages, extract } from './extract.js';

const DEFAULT_MODEL = 'Xenova/clip-vit-base-patch32';

function usage(): string {
  return [
    'usage: embed-extract extract --images <dir> --out <file.emb>',
    '                      [--model <id>] [--labels-from-dirs]',
    '                      [--batch-size N] [--concurrency N]',
    '',
    `default model: ${DEFAULT_MODEL} (512-d image embeddings)`,
  ].join('\n');
}

export async function main(argv: string[]): Promise<number> {
  if (argv[0] !== 'extract') {
    console.error(usage());
    return 2;
  }
  let values;
  try {
    ({ values } = parseArgs({
      args: argv.slice(1),
      options: {
        images: { type: 'string' },
        model: { type: 'string', default: DEFAULT_MODEL },
        out: { type: 'string' },
        'labels-from-dirs': { type: 'boolean', default: false },
        'batch-size': { type: 'string', default: '200' },
        concurrency: { type: 'string', default: '4' },
      },
    }));
  } catch (err) {
    console.error(String(err));
    console.error(usage());
    return 2;
  }
  if (!values.images || !values.out) {
    console.error(usage());
    return 2;
  }

  const embedder = new ClipEmbedder(values.model!);
  try {
    const summary = await extract({
      imagesDir: values.images,
      outPath: values.out,
      embedder,
      batchSize: Number(values['batch-size']),
      labelsFromDirs: values['labels-from-dirs'],
      concurrency: Number(values.concurrency),
      log: (line) => console.error(line),
    });
    console.log(
      `embedded ${summary.embedded} images into ${summary.batches} batches -> ${values.out}`,
    );
    if (summary.skipped.length > 0) {
      console.error(`skipped ${summary.skipped.length} undecodable files`);
      return 1;
    }
    return 0;
  } catch (err) {
    if (err instanceof ModelLoadFailure || err instanceof NoImages) {
      console.error(err.message);
      return 2;
    }
    throw err;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined && import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (invokedDirectly) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
