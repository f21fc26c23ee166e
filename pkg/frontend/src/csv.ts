/** Solution-CSV ingestion for the fixed solver schema. */

import { readFileSync } from "node:fs";
import Papa from "papaparse";

export const SOLUTION_COLUMNS = [
  "road_id",
  "cell_index",
  "x",
  "rho",
  "y",
  "z",
  "v",
  "w",
  "c",
] as const;

export type SolutionColumn = (typeof SOLUTION_COLUMNS)[number];

export interface SolutionRow {
  road_id: number;
  cell_index: number;
  x: number;
  rho: number;
  y: number;
  z: number;
  v: number;
  w: number;
  c: number;
}

export class MissingColumnError extends Error {
  constructor(public readonly columns: string[], file: string) {
    super(`missing column(s) ${columns.join(", ")} in ${file}`);
  }
}

export class EmptyInputError extends Error {
  constructor(file: string) {
    super(`no data rows in ${file}`);
  }
}

/** Parse a solution CSV; rejects files missing schema columns or rows. */
export function readSolutionCsv(path: string): SolutionRow[] {
  const text = readFileSync(path, "utf8");
  const parsed = Papa.parse<Record<string, string>>(text.trim(), {
    header: true,
    skipEmptyLines: true,
  });
  const fields = parsed.meta.fields ?? [];
  const missing = SOLUTION_COLUMNS.filter((c) => !fields.includes(c));
  if (missing.length > 0) {
    throw new MissingColumnError(missing, path);
  }
  if (parsed.data.length === 0) {
    throw new EmptyInputError(path);
  }
  return parsed.data.map((row) => {
    const out = {} as Record<SolutionColumn, number>;
    for (const col of SOLUTION_COLUMNS) {
      out[col] = Number(row[col]);
    }
    return out as SolutionRow;
  });
}

/** Group rows by road id, preserving cell order. */
export function byRoad(rows: SolutionRow[]): Map<number, SolutionRow[]> {
  const map = new Map<number, SolutionRow[]>();
  for (const row of rows) {
    const list = map.get(row.road_id);
    if (list === undefined) {
      map.set(row.road_id, [row]);
    } else {
      list.push(row);
    }
  }
  return map;
}

export interface ConvergenceRow {
  cells: number;
  l1_rho_avg: number;
  l1_rho_quad: number;
}

/** Read a convergence-study report (JSON emitted by the solver CLI). */
export function readConvergence(path: string): ConvergenceRow[] {
  const doc = JSON.parse(readFileSync(path, "utf8"));
  if (!Array.isArray(doc.rows) || doc.rows.length === 0) {
    throw new EmptyInputError(path);
  }
  return doc.rows as ConvergenceRow[];
}
