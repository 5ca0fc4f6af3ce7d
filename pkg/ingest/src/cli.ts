#!/usr/bin/env node
/**
 * convert --source <dir> --dataset <name> --out <dir> [--kind planetoid|tu]
 *
 * Converts an upstream archive into the canonical dataset layout and
 * writes a conversion manifest (source/emitted checksums, counts,
 * warnings) into the output directory. Re-running on the same input is
 * byte-identical.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { parseArgs } from "node:util";

import { ConversionManifest, sha256File, sortedJson, writeGraphDataset, writeNodeDataset } from "./canonical.js";
import { assemblePlanetoid, ConversionError, loadPlanetoid } from "./planetoid.js";
import { loadTu } from "./tu.js";

export function detectKind(sourceDir: string, dataset: string): "planetoid" | "tu" {
  if (fs.existsSync(path.join(sourceDir, `ind.${dataset}.x`))) return "planetoid";
  if (fs.existsSync(path.join(sourceDir, `${dataset}_A.txt`))) return "tu";
  throw new ConversionError(
    `cannot detect archive kind for ${dataset} under ${sourceDir}`,
  );
}

export function convert(
  sourceDir: string,
  dataset: string,
  outDir: string,
  kind?: "planetoid" | "tu",
): ConversionManifest {
  const resolved = kind ?? detectKind(sourceDir, dataset);
  let manifest: ConversionManifest;
  if (resolved === "planetoid") {
    const raw = loadPlanetoid(sourceDir, dataset);
    const assembled = assemblePlanetoid(raw);
    const emitted = writeNodeDataset(outDir, assembled);
    manifest = {
      dataset,
      kind: "planetoid",
      source_files: Object.fromEntries(
        raw.sourceFiles.map((p) => [path.basename(p), sha256File(p)]),
      ),
      emitted_files: emitted,
      counts: {
        nodes: assembled.nNodes,
        features: assembled.nFeatures,
        classes: assembled.nClasses,
        undirected_edges: assembled.edges.length,
        raw_link_entries: assembled.rawLinkEntries,
        self_loops_dropped: assembled.selfLoopsDropped,
        train: assembled.masks.train.length,
        val: assembled.masks.val.length,
        test: assembled.masks.test.length,
        unlabeled: assembled.unlabeled.filter(Boolean).length,
      },
      node_mapping: "identity",
      warnings: assembled.warnings,
    };
  } else {
    const tu = loadTu(sourceDir, dataset);
    const emitted = writeGraphDataset(outDir, tu);
    const nodeCounts = tu.graphs.map((g) => g.features.length);
    manifest = {
      dataset,
      kind: "tu",
      source_files: Object.fromEntries(
        tu.sourceFiles.map((p) => [path.basename(p), sha256File(p)]),
      ),
      emitted_files: emitted,
      counts: {
        graphs: tu.graphs.length,
        classes: tu.nClasses,
        features: tu.graphs[0].features[0].length,
        total_nodes: nodeCounts.reduce((a, b) => a + b, 0),
        total_edges: tu.graphs.reduce((a, g) => a + g.edges.length, 0),
        train: tu.masks.train.length,
        val: tu.masks.val.length,
        test: tu.masks.test.length,
      },
      node_mapping: "compacted-per-graph-in-order-of-appearance",
      warnings: tu.warnings,
    };
  }
  fs.writeFileSync(path.join(outDir, "conversion_manifest.json"), sortedJson(manifest));
  return manifest;
}

function main(argv: string[]): number {
  const { values, positionals } = parseArgs({
    args: argv,
    allowPositionals: true,
    options: {
      source: { type: "string" },
      dataset: { type: "string" },
      out: { type: "string" },
      kind: { type: "string" },
    },
  });
  if (positionals[0] !== "convert" || !values.source || !values.dataset || !values.out) {
    console.error(
      "usage: convert --source <dir> --dataset <name> --out <dir> [--kind planetoid|tu]",
    );
    return 2;
  }
  if (values.kind && values.kind !== "planetoid" && values.kind !== "tu") {
    console.error(`unknown --kind ${values.kind}`);
    return 2;
  }
  try {
    const manifest = convert(
      values.source,
      values.dataset,
      values.out,
      values.kind as "planetoid" | "tu" | undefined,
    );
    const counts = Object.entries(manifest.counts)
      .map(([k, v]) => `${k}=${v}`)
      .join(" ");
    console.log(`converted ${values.dataset} (${manifest.kind}): ${counts}`);
    for (const warning of manifest.warnings) console.warn(`warning: ${warning}`);
    return 0;
  } catch (err) {
    if (err instanceof ConversionError) {
      console.error(`conversion failed: ${err.message}`);
      return 1;
    }
    throw err;
  }
}

if (process.argv[1] && path.basename(process.argv[1]).startsWith("cli")) {
  process.exit(main(process.argv.slice(2)));
}
