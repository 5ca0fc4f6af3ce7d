/**
 * Canonical dataset writer.
 *
 * Layout consumed by the training engine's loader: meta.json plus
 * edges/features/targets/masks CSVs with SHA-256 checksums of every data
 * file recorded in the metadata. Output is byte-deterministic: fixed row
 * ordering, shortest round-trip number formatting, sorted JSON keys, no
 * timestamps.
 */

import * as crypto from "node:crypto";
import * as fs from "node:fs";
import * as path from "node:path";

import { AssembledNodeDataset } from "./planetoid.js";
import { TuDataset } from "./tu.js";

export interface ConversionManifest {
  dataset: string;
  kind: "planetoid" | "tu";
  source_files: Record<string, string>;
  emitted_files: Record<string, string>;
  counts: Record<string, number>;
  node_mapping: string;
  warnings: string[];
}

export function sha256File(p: string): string {
  return crypto.createHash("sha256").update(fs.readFileSync(p)).digest("hex");
}

function fmt(v: number): string {
  return String(v);
}

export function sortedJson(value: unknown): string {
  const normalize = (v: unknown): unknown => {
    if (Array.isArray(v)) return v.map(normalize);
    if (v !== null && typeof v === "object") {
      const entries = Object.entries(v as Record<string, unknown>).sort(([a], [b]) =>
        a < b ? -1 : a > b ? 1 : 0,
      );
      return Object.fromEntries(entries.map(([k, val]) => [k, normalize(val)]));
    }
    return v;
  };
  return JSON.stringify(normalize(value), null, 2) + "\n";
}

const FILES = {
  edges: "edges.csv",
  features: "features.csv",
  targets: "targets.csv",
  masks: "masks.csv",
};

function writeMasksCsv(
  outDir: string,
  header: string,
  masks: { train: number[]; val: number[]; test: number[] },
): void {
  const lines = [header];
  for (const split of ["train", "val", "test"] as const) {
    for (const id of masks[split]) lines.push(`${id},${split}`);
  }
  fs.writeFileSync(path.join(outDir, FILES.masks), lines.join("\n") + "\n");
}

function checksums(outDir: string): Record<string, string> {
  const sums: Record<string, string> = {};
  for (const fname of Object.values(FILES)) {
    sums[fname] = sha256File(path.join(outDir, fname));
  }
  return sums;
}

export function writeNodeDataset(outDir: string, d: AssembledNodeDataset): Record<string, string> {
  fs.mkdirSync(outDir, { recursive: true });

  const edgeLines = ["src,dst,weight"];
  for (const [u, v] of d.edges) edgeLines.push(`${u},${v},1`);
  fs.writeFileSync(path.join(outDir, FILES.edges), edgeLines.join("\n") + "\n");

  const featLines = ["node,feature,value"];
  d.featureRows.forEach((row, node) => {
    for (const [col, value] of row) featLines.push(`${node},${col},${fmt(value)}`);
  });
  fs.writeFileSync(path.join(outDir, FILES.features), featLines.join("\n") + "\n");

  const targetLines = ["target", ...d.labels.map((l) => String(l))];
  fs.writeFileSync(path.join(outDir, FILES.targets), targetLines.join("\n") + "\n");

  writeMasksCsv(outDir, "node_id,split", d.masks);

  const meta = {
    format_version: 1,
    name: d.name,
    task: "node_classification",
    n_nodes: d.nNodes,
    n_features: d.nFeatures,
    n_classes: d.nClasses,
    directed: false,
    features_format: "triplet",
    files: FILES,
    sha256: checksums(outDir),
    raw_link_entries: d.rawLinkEntries,
    undirected_edges: d.edges.length,
    unlabeled_nodes: d.unlabeled.filter(Boolean).length,
  };
  fs.writeFileSync(path.join(outDir, "meta.json"), sortedJson(meta));
  return meta.sha256;
}

export function writeGraphDataset(outDir: string, d: TuDataset): Record<string, string> {
  fs.mkdirSync(outDir, { recursive: true });

  const edgeLines = ["graph_id,src,dst,weight"];
  d.graphs.forEach((graph, gid) => {
    for (const [u, v] of graph.edges) edgeLines.push(`${gid},${u},${v},1`);
  });
  fs.writeFileSync(path.join(outDir, FILES.edges), edgeLines.join("\n") + "\n");

  const width = d.graphs[0].features[0].length;
  const featLines = [["graph_id", ...Array.from({ length: width }, (_, j) => `f${j}`)].join(",")];
  d.graphs.forEach((graph, gid) => {
    for (const row of graph.features) {
      featLines.push([gid, ...row.map(fmt)].join(","));
    }
  });
  fs.writeFileSync(path.join(outDir, FILES.features), featLines.join("\n") + "\n");

  const targetLines = ["graph_id,target", ...d.labels.map((l, gid) => `${gid},${l}`)];
  fs.writeFileSync(path.join(outDir, FILES.targets), targetLines.join("\n") + "\n");

  writeMasksCsv(outDir, "graph_id,split", d.masks);

  const meta = {
    format_version: 1,
    name: d.name,
    task: "graph_classification",
    n_graphs: d.graphs.length,
    n_features: width,
    n_classes: d.nClasses,
    directed: false,
    features_format: "dense",
    files: FILES,
    sha256: checksums(outDir),
    label_values: d.labelValues,
  };
  fs.writeFileSync(path.join(outDir, "meta.json"), sortedJson(meta));
  return meta.sha256;
}
