import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import {
  buildBenchmarkTable,
  cellKey,
  formatCell,
  renderBenchmarkTable,
  renderEmptyBenchmark,
  sortDatasets,
} from "../src/benchmark.js";
import type { BenchmarkRow } from "../src/types.js";

const fixture = JSON.parse(
  readFileSync(new URL("./fixtures/recorded_api.json", import.meta.url), "utf-8"),
);
const rows: BenchmarkRow[] = fixture.benchmark.rows;

describe("benchmark table", () => {
  it("pivots recorded rows into datasets x tools", () => {
    const table = buildBenchmarkTable(rows);
    expect(table.datasets).toEqual(["alpha", "beta"]);
    expect(table.tools).toEqual(["codegen", "stub"]);
    expect(table.cells[cellKey("alpha", "codegen")]).toBeCloseTo(0.812);
    expect(table.cells[cellKey("beta", "stub")]).toBeNull();
  });

  it("failed cells render as '-' and are excluded from the average", () => {
    const table = buildBenchmarkTable(rows);
    expect(formatCell(table.cells[cellKey("beta", "stub")])).toBe("-");
    const stub = table.toolMeans["stub"];
    expect(stub.n).toBe(1);
    expect(stub.mean).toBeCloseTo(0.74);
    const html = renderBenchmarkTable(table);
    expect(html).toContain('<td class="score">-</td>');
    expect(html).toContain("(n=1)");
  });

  it("shows the Avg row last", () => {
    const html = renderBenchmarkTable(buildBenchmarkTable(rows));
    expect(html).toContain("Avg score");
    const avgIndex = html.indexOf("Avg score");
    for (const ds of ["alpha", "beta"]) {
      expect(html.indexOf(ds)).toBeLessThan(avgIndex);
    }
    const codegenMean = (0.812 + 0.8) / 2;
    expect(html).toContain(codegenMean.toFixed(3));
  });

  it("sorts by dataset name and by tool score, keeping Avg in place", () => {
    const table = buildBenchmarkTable(rows);
    expect(sortDatasets(table, { kind: "dataset" })).toEqual(["alpha", "beta"]);
    expect(sortDatasets(table, { kind: "dataset" }, true)).toEqual(["beta", "alpha"]);
    // by stub score: beta has no score (sorts lowest), ascending
    expect(sortDatasets(table, { kind: "tool", tool: "stub" })).toEqual(["beta", "alpha"]);
    const html = renderBenchmarkTable(table, sortDatasets(table, { kind: "dataset" }, true));
    expect(html.indexOf("beta")).toBeLessThan(html.indexOf("alpha"));
    expect(html.lastIndexOf("Avg score")).toBeGreaterThan(html.indexOf("alpha"));
  });

  it("empty benchmark renders the empty state", () => {
    expect(renderEmptyBenchmark()).toContain("No benchmark rows yet");
  });

  it("is a pure function of the recorded rows", () => {
    const a = renderBenchmarkTable(buildBenchmarkTable(rows));
    const b = renderBenchmarkTable(buildBenchmarkTable(rows));
    expect(a).toEqual(b);
  });
});
