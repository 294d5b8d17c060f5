/** Attention-trace view models.
 *
 * The server exports one stage per attention call with weights shaped
 * [heads][queries][keys]. These helpers flatten a trace into a stage
 * catalog, validate shapes against the labels, and slice out the 2-d
 * grids the heatmap renderer draws.
 */

import type { AttentionStage, TraceLevel, TraceView } from "./api.js";

export const LEVEL_ORDER: readonly TraceLevel[] = ["slot", "domain", "fuse", "generator"];

export interface StageDims {
  heads: number;
  queries: number;
  keys: number;
}

/** Address of one stage inside a trace, plus its checked dimensions. */
export interface StageRef extends StageDims {
  level: TraceLevel;
  block: number;
  stage: number;
  name: string;
}

/** One drawable grid: `cells[row][col]` with a label per row and col. */
export interface Heatmap {
  rows: string[];
  cols: string[];
  cells: number[][];
  max: number;
}

/** Checks that weights form a [heads][queries][keys] box agreeing with
 * the label arrays, and returns those dimensions. */
export function stageDims(stage: AttentionStage): StageDims {
  const heads = stage.weights.length;
  if (heads === 0) throw new Error(`stage ${stage.name}: no heads`);
  const queries = stage.weights[0].length;
  const keys = queries > 0 ? stage.weights[0][0].length : 0;
  for (const head of stage.weights) {
    if (head.length !== queries) {
      throw new Error(`stage ${stage.name}: ragged query axis`);
    }
    for (const row of head) {
      if (row.length !== keys) {
        throw new Error(`stage ${stage.name}: ragged key axis`);
      }
    }
  }
  if (stage.query_labels.length !== queries) {
    throw new Error(
      `stage ${stage.name}: ${stage.query_labels.length} query labels for ${queries} rows`,
    );
  }
  if (stage.key_labels.length !== keys) {
    throw new Error(
      `stage ${stage.name}: ${stage.key_labels.length} key labels for ${keys} columns`,
    );
  }
  return { heads, queries, keys };
}

/** Every row of attention must distribute one unit of mass over the
 * unmasked keys; fully masked rows are all zero. */
export function rowSumsValid(stage: AttentionStage, tol = 1e-3): boolean {
  for (const head of stage.weights) {
    for (const row of head) {
      const sum = row.reduce((a, b) => a + b, 0);
      if (Math.abs(sum - 1) > tol && Math.abs(sum) > tol) return false;
    }
  }
  return true;
}

/** Flattens a trace into a catalog of addressable stages, validating
 * each one. Levels come out in fixed pipeline order. */
export function listStages(trace: TraceView): StageRef[] {
  const out: StageRef[] = [];
  for (const level of LEVEL_ORDER) {
    const blocks = trace.levels[level];
    if (!blocks) continue;
    blocks.forEach((stages, blockIndex) => {
      stages.forEach((stage, stageIndex) => {
        out.push({
          level,
          block: blockIndex,
          stage: stageIndex,
          name: stage.name,
          ...stageDims(stage),
        });
      });
    });
  }
  return out;
}

export function stageAt(trace: TraceView, ref: Pick<StageRef, "level" | "block" | "stage">): AttentionStage {
  const stage = trace.levels[ref.level]?.[ref.block]?.[ref.stage];
  if (!stage) {
    throw new Error(`no stage at ${ref.level}[${ref.block}][${ref.stage}]`);
  }
  return stage;
}

/** The grid for one head, or the mean over heads when `head` is null. */
export function buildHeatmap(stage: AttentionStage, head: number | null): Heatmap {
  const { heads, queries, keys } = stageDims(stage);
  let cells: number[][];
  if (head === null) {
    cells = [];
    for (let q = 0; q < queries; q++) {
      const row = new Array<number>(keys).fill(0);
      for (let h = 0; h < heads; h++) {
        for (let k = 0; k < keys; k++) row[k] += stage.weights[h][q][k];
      }
      cells.push(row.map((v) => v / heads));
    }
  } else {
    if (head < 0 || head >= heads) {
      throw new Error(`head ${head} out of range (${heads} heads)`);
    }
    cells = stage.weights[head].map((row) => row.slice());
  }
  let max = 0;
  for (const row of cells) for (const v of row) if (v > max) max = v;
  return { rows: stage.query_labels.slice(), cols: stage.key_labels.slice(), cells, max };
}

/** Background color for one cell, scaled so the stage's strongest
 * weight saturates. */
export function colorFor(value: number, max: number): string {
  const t = max > 0 ? Math.min(Math.max(value / max, 0), 1) : 0;
  // white to deep blue
  const r = Math.round(255 - 215 * t);
  const g = Math.round(255 - 175 * t);
  const b = Math.round(255 - 75 * t);
  return `rgb(${r}, ${g}, ${b})`;
}
