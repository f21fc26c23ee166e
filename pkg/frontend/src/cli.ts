/** Figure batch tool: read a figure-spec JSON, emit SVG files.
 *
 * Usage: node dist/cli.js <spec.json> [outdir]
 * The spec file holds one figure spec or an array of them.
 */

import { mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { dirname, isAbsolute, join, resolve } from "node:path";
import { figureSpecSchema, render } from "./render";

export function main(argv: string[]): number {
  if (argv.length < 1) {
    console.error("usage: cli <spec.json> [outdir]");
    return 2;
  }
  const specPath = argv[0];
  const outDir = argv[1] ?? ".";
  mkdirSync(outDir, { recursive: true });
  const raw = JSON.parse(readFileSync(specPath, "utf8"));
  const specs = Array.isArray(raw) ? raw : [raw];
  const base = dirname(resolve(specPath));
  const absolutize = (p: string) => (isAbsolute(p) ? p : join(base, p));
  for (const spec of specs) {
    if (Array.isArray(spec.inputs)) {
      spec.inputs = spec.inputs.map(absolutize);
    }
    if (typeof spec.reference === "string") {
      spec.reference = absolutize(spec.reference);
    }
  }
  let count = 0;
  for (const [i, rawSpec] of specs.entries()) {
    const spec = figureSpecSchema.parse(rawSpec);
    const svgs = render(spec);
    for (const [panel, svg] of svgs) {
      if (svg.length === 0) {
        throw new Error(`empty render for panel ${panel}`);
      }
      const name = `${spec.title ? spec.title.replace(/\W+/g, "_") : `figure${i}`}_${panel}.svg`;
      writeFileSync(join(outDir, name), svg);
      console.log(name);
      count += 1;
    }
  }
  console.log(`${count} panel(s) written to ${outDir}`);
  return 0;
}

const entry = process.argv[1] ?? "";
if (entry.endsWith("cli.js") || entry.endsWith("cli.ts")) {
  process.exit(main(process.argv.slice(2)));
}
