/**
 * Citation-network archive reader (ind.<name>.* files).
 *
 * The archive splits node features and one-hot labels into a labeled
 * block (x/y), an extended block covering all non-test nodes (allx/ally),
 * and a test block (tx/ty) whose row k belongs to the k-th entry of the
 * shuffled test-index file. The adjacency lives in a pickled dict of
 * neighbor lists. Gaps in the test-index range (isolated test nodes that
 * were dropped upstream) become zero-feature, unlabeled nodes.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { toMatrix } from "./numpy.js";
import { CsrMatrixObj, NDArrayObj, PValue, unpickle } from "./pickle.js";
import { toNumbers } from "./numpy.js";

export class ConversionError extends Error {}

export interface SparseRows {
  nRows: number;
  nCols: number;
  rows: Array<Array<[number, number]>>; // per-row (column, value) pairs
}

export interface PlanetoidRaw {
  name: string;
  x: SparseRows;
  y: number[][];
  tx: SparseRows;
  ty: number[][];
  allx: SparseRows;
  ally: number[][];
  graph: Map<number, number[]>;
  testIdx: number[];
  sourceFiles: string[];
}

export interface AssembledNodeDataset {
  name: string;
  nNodes: number;
  nFeatures: number;
  nClasses: number;
  featureRows: Array<Array<[number, number]>>;
  labels: number[];
  unlabeled: boolean[];
  edges: Array<[number, number]>; // src < dst, weight 1
  masks: { train: number[]; val: number[]; test: number[] };
  rawLinkEntries: number;
  selfLoopsDropped: number;
  warnings: string[];
}

const EXPECTED: Record<string, { nodes: number; features: number; classes: number }> = {
  cora: { nodes: 2708, features: 1433, classes: 7 },
  citeseer: { nodes: 3327, features: 3703, classes: 6 },
  pubmed: { nodes: 19717, features: 500, classes: 3 },
};

const VAL_SIZE = 500;

function sparseFromCsr(obj: PValue, what: string): SparseRows {
  if (!(obj instanceof CsrMatrixObj)) {
    throw new ConversionError(`${what}: expected a CSR matrix pickle`);
  }
  const indptr = toNumbers(obj.indptr);
  const indices = toNumbers(obj.indices);
  const values = toNumbers(obj.data);
  const rows: Array<Array<[number, number]>> = [];
  for (let r = 0; r < obj.nRows; r++) {
    const row: Array<[number, number]> = [];
    for (let k = indptr[r]; k < indptr[r + 1]; k++) {
      row.push([indices[k], values[k]]);
    }
    rows.push(row);
  }
  return { nRows: obj.nRows, nCols: obj.nCols, rows };
}

function denseFromPickle(obj: PValue, what: string): number[][] {
  if (!(obj instanceof NDArrayObj)) {
    throw new ConversionError(`${what}: expected an ndarray pickle`);
  }
  return toMatrix(obj);
}

function graphFromPickle(obj: PValue): Map<number, number[]> {
  if (!(obj instanceof Map)) {
    throw new ConversionError("graph: expected a dict of neighbor lists");
  }
  const out = new Map<number, number[]>();
  for (const [key, value] of obj) {
    if (typeof key !== "number" || !Array.isArray(value)) {
      throw new ConversionError("graph: keys must be ints and values lists");
    }
    out.set(
      key,
      value.map((v) => {
        if (typeof v !== "number") throw new ConversionError("graph: non-int neighbor");
        return v;
      }),
    );
  }
  return out;
}

export function loadPlanetoid(sourceDir: string, name: string): PlanetoidRaw {
  const filenames = ["x", "y", "tx", "ty", "allx", "ally", "graph"].map(
    (part) => `ind.${name}.${part}`,
  );
  filenames.push(`ind.${name}.test.index`);
  const paths = filenames.map((f) => path.join(sourceDir, f));
  for (const p of paths) {
    if (!fs.existsSync(p)) throw new ConversionError(`missing source file: ${p}`);
  }
  const load = (part: string): PValue =>
    unpickle(fs.readFileSync(path.join(sourceDir, `ind.${name}.${part}`)));
  const testText = fs.readFileSync(path.join(sourceDir, `ind.${name}.test.index`), "utf8");
  const testIdx = testText
    .split(/\r?\n/)
    .filter((line) => line.trim().length > 0)
    .map((line) => {
      const v = parseInt(line, 10);
      if (Number.isNaN(v)) throw new ConversionError(`bad test index line: ${line}`);
      return v;
    });
  return {
    name,
    x: sparseFromCsr(load("x"), "x"),
    y: denseFromPickle(load("y"), "y"),
    tx: sparseFromCsr(load("tx"), "tx"),
    ty: denseFromPickle(load("ty"), "ty"),
    allx: sparseFromCsr(load("allx"), "allx"),
    ally: denseFromPickle(load("ally"), "ally"),
    graph: graphFromPickle(load("graph")),
    testIdx,
    sourceFiles: paths,
  };
}

function argmaxRow(row: number[]): { label: number; unlabeled: boolean } {
  let best = 0;
  let bestVal = row[0];
  let total = 0;
  for (let i = 0; i < row.length; i++) {
    total += Math.abs(row[i]);
    if (row[i] > bestVal) {
      best = i;
      bestVal = row[i];
    }
  }
  return { label: best, unlabeled: total === 0 };
}

export function assemblePlanetoid(raw: PlanetoidRaw): AssembledNodeDataset {
  const nAllx = raw.allx.nRows;
  const nFeatures = raw.allx.nCols;
  const nClasses = raw.y[0]?.length ?? 0;
  const warnings: string[] = [];
  if (raw.testIdx.length !== raw.tx.nRows) {
    throw new ConversionError(
      `test index count ${raw.testIdx.length} != tx rows ${raw.tx.nRows}`,
    );
  }
  const minTest = Math.min(...raw.testIdx);
  const maxTest = Math.max(...raw.testIdx);
  if (minTest < nAllx) {
    throw new ConversionError(`test index ${minTest} overlaps the allx block`);
  }
  const nNodes = maxTest + 1;

  const featureRows: Array<Array<[number, number]>> = [];
  const labels = new Array<number>(nNodes).fill(0);
  const unlabeled = new Array<boolean>(nNodes).fill(false);
  for (let i = 0; i < nNodes; i++) {
    featureRows.push(i < nAllx ? raw.allx.rows[i] : []);
    if (i < nAllx) {
      const { label, unlabeled: none } = argmaxRow(raw.ally[i]);
      labels[i] = label;
      unlabeled[i] = none;
    } else {
      unlabeled[i] = true; // filled below for present test nodes
    }
  }
  raw.testIdx.forEach((nodeId, k) => {
    featureRows[nodeId] = raw.tx.rows[k];
    const { label, unlabeled: none } = argmaxRow(raw.ty[k]);
    labels[nodeId] = label;
    unlabeled[nodeId] = none;
  });

  let rawLinkEntries = 0;
  let selfLoopsDropped = 0;
  const pairSet = new Set<number>();
  for (const [u, neighbors] of raw.graph) {
    if (u < 0 || u >= nNodes) throw new ConversionError(`graph key ${u} out of range`);
    rawLinkEntries += neighbors.length;
    for (const v of neighbors) {
      if (v < 0 || v >= nNodes) throw new ConversionError(`neighbor ${v} out of range`);
      if (u === v) {
        selfLoopsDropped += 1;
        continue;
      }
      const a = Math.min(u, v);
      const b = Math.max(u, v);
      pairSet.add(a * nNodes + b);
    }
  }
  const edges: Array<[number, number]> = [...pairSet]
    .sort((p, q) => p - q)
    .map((code) => [Math.floor(code / nNodes), code % nNodes]);

  const nTrain = raw.y.length;
  const train: number[] = [];
  for (let i = 0; i < nTrain; i++) if (!unlabeled[i]) train.push(i);
  const val: number[] = [];
  for (let i = nTrain; i < Math.min(nTrain + VAL_SIZE, nAllx); i++) {
    if (!unlabeled[i]) val.push(i);
  }
  const test = [...raw.testIdx].sort((a, b) => a - b).filter((i) => !unlabeled[i]);

  const expected = EXPECTED[raw.name];
  if (expected) {
    if (expected.nodes !== nNodes) {
      warnings.push(`node count ${nNodes} != expected ${expected.nodes}`);
    }
    if (expected.features !== nFeatures) {
      warnings.push(`feature count ${nFeatures} != expected ${expected.features}`);
    }
    if (expected.classes !== nClasses) {
      warnings.push(`class count ${nClasses} != expected ${expected.classes}`);
    }
  }

  return {
    name: raw.name,
    nNodes,
    nFeatures,
    nClasses,
    featureRows,
    labels,
    unlabeled,
    edges,
    masks: { train, val, test },
    rawLinkEntries,
    selfLoopsDropped,
    warnings,
  };
}
