/**
 * Graph-kernel benchmark format reader (<NAME>_A.txt and friends).
 *
 * Edges are 1-based global node pairs; graph membership comes from the
 * indicator file. Emitted node features are [degree, clustering
 * coefficient] followed by a one-hot of the node label (when present) and
 * any raw node attributes. Graph labels are compacted to 0..C-1 with the
 * original values recorded.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { ConversionError } from "./planetoid.js";

export interface TuGraph {
  edges: Array<[number, number]>; // local indices, src < dst
  features: number[][];
}

export interface TuDataset {
  name: string;
  graphs: TuGraph[];
  labels: number[];
  labelValues: number[];
  nClasses: number;
  masks: { train: number[]; val: number[]; test: number[] };
  sourceFiles: string[];
  warnings: string[];
}

function readIntLines(p: string): number[] {
  return fs
    .readFileSync(p, "utf8")
    .split(/\r?\n/)
    .filter((line) => line.trim().length > 0)
    .map((line) => {
      const v = parseInt(line.trim(), 10);
      if (Number.isNaN(v)) throw new ConversionError(`${path.basename(p)}: bad line ${line}`);
      return v;
    });
}

function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function clusteringCoefficient(neighbors: Set<number>[], node: number): number {
  const nbrs = [...neighbors[node]];
  const deg = nbrs.length;
  if (deg < 2) return 0;
  let triangles = 0;
  for (let i = 0; i < deg; i++) {
    for (let j = i + 1; j < deg; j++) {
      if (neighbors[nbrs[i]].has(nbrs[j])) triangles += 1;
    }
  }
  return triangles / ((deg * (deg - 1)) / 2);
}

export function loadTu(sourceDir: string, name: string): TuDataset {
  const req = (suffix: string) => {
    const p = path.join(sourceDir, `${name}_${suffix}.txt`);
    if (!fs.existsSync(p)) throw new ConversionError(`missing source file: ${p}`);
    return p;
  };
  const opt = (suffix: string) => {
    const p = path.join(sourceDir, `${name}_${suffix}.txt`);
    return fs.existsSync(p) ? p : null;
  };

  const aPath = req("A");
  const indicatorPath = req("graph_indicator");
  const labelsPath = req("graph_labels");
  const nodeLabelsPath = opt("node_labels");
  const attrPath = opt("node_attributes");
  const sourceFiles = [aPath, indicatorPath, labelsPath, nodeLabelsPath, attrPath].filter(
    (p): p is string => p !== null,
  );

  const indicator = readIntLines(indicatorPath); // per global node, 1-based graph id
  const nNodes = indicator.length;
  const graphIds = indicator.map((g) => g - 1);
  const nGraphs = Math.max(...indicator);

  // local index of each global node within its graph (order of appearance)
  const localIndex = new Array<number>(nNodes);
  const graphSize = new Array<number>(nGraphs).fill(0);
  for (let i = 0; i < nNodes; i++) {
    localIndex[i] = graphSize[graphIds[i]];
    graphSize[graphIds[i]] += 1;
  }

  const neighbors: Set<number>[] = Array.from({ length: nNodes }, () => new Set());
  const edgeSets: Set<number>[] = Array.from({ length: nGraphs }, () => new Set());
  const edgeLines = fs
    .readFileSync(aPath, "utf8")
    .split(/\r?\n/)
    .filter((line) => line.trim().length > 0);
  for (const line of edgeLines) {
    const parts = line.split(",").map((s) => parseInt(s.trim(), 10));
    if (parts.length !== 2 || parts.some(Number.isNaN)) {
      throw new ConversionError(`bad edge line: ${line}`);
    }
    const u = parts[0] - 1;
    const v = parts[1] - 1;
    if (u < 0 || v < 0 || u >= nNodes || v >= nNodes) {
      throw new ConversionError(`edge (${parts[0]}, ${parts[1]}) out of range`);
    }
    if (graphIds[u] !== graphIds[v]) {
      throw new ConversionError(`edge (${parts[0]}, ${parts[1]}) crosses graphs`);
    }
    if (u === v) continue;
    neighbors[u].add(v);
    neighbors[v].add(u);
    const gid = graphIds[u];
    const a = Math.min(localIndex[u], localIndex[v]);
    const b = Math.max(localIndex[u], localIndex[v]);
    edgeSets[gid].add(a * graphSize[gid] + b);
  }

  const rawGraphLabels = readIntLines(labelsPath);
  if (rawGraphLabels.length !== nGraphs) {
    throw new ConversionError(
      `graph label count ${rawGraphLabels.length} != graph count ${nGraphs}`,
    );
  }
  const labelValues = [...new Set(rawGraphLabels)].sort((a, b) => a - b);
  const labels = rawGraphLabels.map((l) => labelValues.indexOf(l));

  const nodeLabels = nodeLabelsPath ? readIntLines(nodeLabelsPath) : null;
  if (nodeLabels && nodeLabels.length !== nNodes) {
    throw new ConversionError("node label count mismatch");
  }
  const nodeLabelValues = nodeLabels ? [...new Set(nodeLabels)].sort((a, b) => a - b) : [];
  const attributes = attrPath
    ? fs
        .readFileSync(attrPath, "utf8")
        .split(/\r?\n/)
        .filter((line) => line.trim().length > 0)
        .map((line) => line.split(",").map((s) => parseFloat(s.trim())))
    : null;
  if (attributes && attributes.length !== nNodes) {
    throw new ConversionError("node attribute count mismatch");
  }

  const graphs: TuGraph[] = [];
  const nodesOfGraph: number[][] = Array.from({ length: nGraphs }, () => []);
  for (let i = 0; i < nNodes; i++) nodesOfGraph[graphIds[i]].push(i);
  for (let gid = 0; gid < nGraphs; gid++) {
    const size = graphSize[gid];
    const edges: Array<[number, number]> = [...edgeSets[gid]]
      .sort((p, q) => p - q)
      .map((code) => [Math.floor(code / size), code % size]);
    const features = nodesOfGraph[gid].map((globalId) => {
      const row = [neighbors[globalId].size, clusteringCoefficient(neighbors, globalId)];
      if (nodeLabels) {
        for (const value of nodeLabelValues) {
          row.push(nodeLabels[globalId] === value ? 1 : 0);
        }
      }
      if (attributes) row.push(...attributes[globalId]);
      return row;
    });
    graphs.push({ edges, features });
  }

  // deterministic 80/10/10 split, fixed shuffle seed
  const order = Array.from({ length: nGraphs }, (_, i) => i);
  const rand = mulberry32(42);
  for (let i = order.length - 1; i > 0; i--) {
    const j = Math.floor(rand() * (i + 1));
    [order[i], order[j]] = [order[j], order[i]];
  }
  const nTest = Math.max(1, Math.floor(nGraphs * 0.1));
  const nVal = Math.max(1, Math.floor(nGraphs * 0.1));
  const test = order.slice(0, nTest).sort((a, b) => a - b);
  const val = order.slice(nTest, nTest + nVal).sort((a, b) => a - b);
  const train = order.slice(nTest + nVal).sort((a, b) => a - b);

  return {
    name,
    graphs,
    labels,
    labelValues,
    nClasses: labelValues.length,
    masks: { train, val, test },
    sourceFiles,
    warnings: [],
  };
}
