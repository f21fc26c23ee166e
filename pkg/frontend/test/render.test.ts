import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";
import { EmptyInputError, MissingColumnError, readSolutionCsv } from "../src/csv";
import { figureSpecSchema, render } from "../src/render";

const HEADER = "road_id,cell_index,x,rho,y,z,v,w,c";

function tempCsv(lines: string[]): string {
  const dir = mkdtempSync(join(tmpdir(), "figs-"));
  const path = join(dir, "sol.csv");
  writeFileSync(path, lines.join("\n") + "\n");
  return path;
}

function sampleCsv(): string {
  const lines = [HEADER];
  for (let j = 0; j < 24; j++) {
    const x = (j + 0.5) / 24;
    const rho = 0.5 + 0.3 * Math.sin(2 * Math.PI * x);
    lines.push([0, j, x, rho, 0.1 * rho, rho, 0.1, 0.1, 1].join(","));
  }
  return tempCsv(lines);
}

describe("csv ingestion", () => {
  it("parses the fixed schema", () => {
    const rows = readSolutionCsv(sampleCsv());
    expect(rows).toHaveLength(24);
    expect(rows[0].road_id).toBe(0);
    expect(rows[3].rho).toBeGreaterThan(0);
  });

  it("rejects missing columns", () => {
    const path = tempCsv(["road_id,x,rho", "0,0.5,0.3"]);
    expect(() => readSolutionCsv(path)).toThrow(MissingColumnError);
  });

  it("rejects empty inputs instead of rendering blank figures", () => {
    const path = tempCsv([HEADER]);
    expect(() => readSolutionCsv(path)).toThrow(EmptyInputError);
  });
});

describe("rendering", () => {
  it("produces non-empty deterministic SVG profile panels", () => {
    const csv = sampleCsv();
    const spec = figureSpecSchema.parse({
      kind: "profiles",
      title: "riemann",
      inputs: [csv],
      quantities: ["rho", "v"],
    });
    const first = render(spec);
    const second = render(spec);
    expect(first.size).toBe(2);
    for (const [panel, svg] of first) {
      expect(svg.length).toBeGreaterThan(500);
      expect(svg).toContain("<svg");
      expect(second.get(panel)).toBe(svg);
    }
  });

  it("renders dashed reference curves", () => {
    const csv = sampleCsv();
    const spec = figureSpecSchema.parse({
      kind: "profiles",
      inputs: [csv],
      reference: csv,
      quantities: ["rho"],
    });
    const svg = render(spec).get("rho")!;
    expect(svg).toContain("stroke-dasharray");
  });

  it("renders log-log convergence plots with a slope guide", () => {
    const dir = mkdtempSync(join(tmpdir(), "figs-"));
    const path = join(dir, "conv.json");
    writeFileSync(
      path,
      JSON.stringify({
        rows: [
          { cells: 10, l1_rho_avg: 1e-4, l1_rho_quad: 3e-4 },
          { cells: 20, l1_rho_avg: 1.2e-5, l1_rho_quad: 4e-5 },
          { cells: 40, l1_rho_avg: 1.5e-6, l1_rho_quad: 5e-6 },
        ],
      })
    );
    const spec = figureSpecSchema.parse({
      kind: "convergence",
      inputs: [path],
      slope_guide: 3,
    });
    const svg = render(spec).get("convergence")!;
    expect(svg).toContain("<svg");
    expect(svg.length).toBeGreaterThan(500);
  });

  it("renders per-road panels for network solutions", () => {
    const lines = [HEADER];
    for (const rid of [1, 2, 3]) {
      for (let j = 0; j < 12; j++) {
        const x = (j + 0.5) / 12;
        lines.push([rid, j, x, 0.1 * rid + 0.01 * j, 0, 0.1, 0.5, 0.5, 1].join(","));
      }
    }
    const csv = tempCsv(lines);
    const spec = figureSpecSchema.parse({
      kind: "network_grid",
      inputs: [csv],
      quantities: ["rho"],
    });
    const svg = render(spec).get("network_rho")!;
    expect(svg).toContain("<svg");
  });

  it("rejects malformed specs", () => {
    expect(() => figureSpecSchema.parse({ kind: "profiles", inputs: [] })).toThrow();
    expect(() => figureSpecSchema.parse({ kind: "nope", inputs: ["x"] })).toThrow();
  });
});
