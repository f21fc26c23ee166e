/** Deterministic SVG rendering of solver outputs via echarts SSR.
 *
 * Rendering never resamples or smooths the data: every CSV row becomes one
 * plotted point.
 */

import * as echarts from "echarts";
import { z } from "zod";
import { byRoad, readConvergence, readSolutionCsv, SOLUTION_COLUMNS } from "./csv";

const quantity = z.enum(["rho", "v", "w", "c", "y", "z"]);

export const figureSpecSchema = z.object({
  kind: z.enum(["profiles", "convergence", "network_grid"]),
  title: z.string().default(""),
  inputs: z.array(z.string()).nonempty(),
  labels: z.array(z.string()).optional(),
  quantities: z.array(quantity).default(["rho", "v"]),
  yscale: z.enum(["linear", "log"]).default("linear"),
  roads: z.array(z.number()).optional(),
  width: z.number().int().positive().default(640),
  height: z.number().int().positive().default(420),
  reference: z.string().optional(),
  slope_guide: z.number().optional(),
});

export type FigureSpec = z.infer<typeof figureSpecSchema>;

const PALETTE = ["#1f6eb4", "#d1495b", "#36845b", "#8a5fb0", "#b8860b", "#444444"];

/** zrender numbers element/class ids with process-global counters; remap
 * every id token in appearance order so identical inputs give
 * byte-identical files. */
function canonicalizeSvg(svg: string): string {
  const map = new Map<string, string>();
  return svg.replace(/zr[0-9]*-[a-z]+-?[0-9]+/g, (tok) => {
    let repl = map.get(tok);
    if (repl === undefined) {
      repl = `zr-id-${map.size}`;
      map.set(tok, repl);
    }
    return repl;
  });
}

function chartToSvg(option: echarts.EChartsOption, width: number, height: number): string {
  const chart = echarts.init(null as unknown as HTMLElement, undefined, {
    renderer: "svg",
    ssr: true,
    width,
    height,
  });
  chart.setOption({ animation: false, ...option });
  const svg = canonicalizeSvg(chart.renderToSVGString());
  chart.dispose();
  return svg;
}

function axis(name: string, log: boolean): object {
  return log
    ? { type: "log", name }
    : { type: "value", name, scale: true };
}

/** One panel per quantity; one series per input CSV (per road if several). */
export function renderProfiles(spec: FigureSpec): Map<string, string> {
  const out = new Map<string, string>();
  const datasets = spec.inputs.map((p) => byRoad(readSolutionCsv(p)));
  const refData = spec.reference ? byRoad(readSolutionCsv(spec.reference)) : undefined;
  for (const q of spec.quantities) {
    const series: echarts.SeriesOption[] = [];
    let colorIx = 0;
    datasets.forEach((roads, i) => {
      for (const [rid, rows] of [...roads.entries()].sort((a, b) => a[0] - b[0])) {
        if (spec.roads && !spec.roads.includes(rid)) continue;
        const label = spec.labels?.[i] ?? spec.inputs[i];
        series.push({
          type: "line",
          name: roads.size > 1 ? `${label} road ${rid}` : label,
          showSymbol: false,
          color: PALETTE[colorIx++ % PALETTE.length],
          data: rows.map((r) => [r.x, r[q]]),
        });
      }
    });
    if (refData) {
      for (const [rid, rows] of [...refData.entries()].sort((a, b) => a[0] - b[0])) {
        if (spec.roads && !spec.roads.includes(rid)) continue;
        series.push({
          type: "line",
          name: refData.size > 1 ? `reference road ${rid}` : "reference",
          showSymbol: false,
          lineStyle: { type: "dashed", color: "#000000" },
          color: "#000000",
          data: rows.map((r) => [r.x, r[q]]),
        });
      }
    }
    const option: echarts.EChartsOption = {
      title: { text: spec.title ? `${spec.title} - ${q}` : q },
      legend: { bottom: 0 },
      xAxis: { type: "value", name: "x", scale: true },
      yAxis: axis(q, spec.yscale === "log"),
      series,
    };
    out.set(q, chartToSvg(option, spec.width, spec.height));
  }
  return out;
}

/** Log-log error plot with an optional slope guide. */
export function renderConvergence(spec: FigureSpec): Map<string, string> {
  const rows = readConvergence(spec.inputs[0]);
  const series: echarts.SeriesOption[] = [
    {
      type: "line",
      name: "L1 error (cell averages)",
      data: rows.map((r) => [r.cells, r.l1_rho_avg]),
      color: PALETTE[0],
    },
    {
      type: "line",
      name: "L1 error (quadrature)",
      data: rows.map((r) => [r.cells, r.l1_rho_quad]),
      color: PALETTE[1],
    },
  ];
  if (spec.slope_guide !== undefined) {
    const p = spec.slope_guide;
    const n0 = rows[0].cells;
    const e0 = rows[0].l1_rho_avg;
    series.push({
      type: "line",
      name: `slope -${p}`,
      lineStyle: { type: "dashed", color: "#000000" },
      color: "#000000",
      showSymbol: false,
      data: rows.map((r) => [r.cells, e0 * Math.pow(n0 / r.cells, -(-p))]),
    });
  }
  const option: echarts.EChartsOption = {
    title: { text: spec.title || "convergence" },
    legend: { bottom: 0 },
    xAxis: { type: "log", name: "cells" },
    yAxis: { type: "log", name: "L1 error" },
    series,
  };
  return new Map([["convergence", chartToSvg(option, spec.width, spec.height)]]);
}

/** One small multiples panel per road of a network solution. */
export function renderNetworkGrid(spec: FigureSpec): Map<string, string> {
  const roads = byRoad(readSolutionCsv(spec.inputs[0]));
  const q = spec.quantities[0];
  const ids = [...roads.keys()].sort((a, b) => a - b).filter(
    (rid) => !spec.roads || spec.roads.includes(rid)
  );
  const cols = Math.ceil(Math.sqrt(ids.length));
  const rowsN = Math.ceil(ids.length / cols);
  const grid: echarts.EChartsOption["grid"] = [];
  const xAxes: object[] = [];
  const yAxes: object[] = [];
  const series: echarts.SeriesOption[] = [];
  ids.forEach((rid, i) => {
    const r = Math.floor(i / cols);
    const c = i % cols;
    grid!.push({
      left: `${(100 * c) / cols + 4}%`,
      top: `${(100 * r) / rowsN + 6}%`,
      width: `${100 / cols - 7}%`,
      height: `${100 / rowsN - 10}%`,
    } as never);
    xAxes.push({ type: "value", gridIndex: i, scale: true });
    yAxes.push({ type: "value", gridIndex: i, scale: true });
    series.push({
      type: "line",
      name: `road ${rid}`,
      xAxisIndex: i,
      yAxisIndex: i,
      showSymbol: false,
      color: PALETTE[i % PALETTE.length],
      data: roads.get(rid)!.map((row) => [row.x, row[q]]),
    });
  });
  const option: echarts.EChartsOption = {
    title: { text: spec.title || `network ${q}` },
    grid,
    xAxis: xAxes as never,
    yAxis: yAxes as never,
    series,
  };
  return new Map([[`network_${q}`, chartToSvg(option, spec.width, Math.max(spec.height, 180 * rowsN))]]);
}

export function render(spec: FigureSpec): Map<string, string> {
  switch (spec.kind) {
    case "profiles":
      return renderProfiles(spec);
    case "convergence":
      return renderConvergence(spec);
    case "network_grid":
      return renderNetworkGrid(spec);
  }
}

export { SOLUTION_COLUMNS };
