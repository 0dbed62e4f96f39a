import { beforeEach, describe, expect, it, vi } from "vitest";

import type { AgentReplyDoc, PlotDoc } from "../src/api";
import { renderChart } from "../src/chart";
import { renderFindings, renderTable, renderTurn } from "../src/render";

function reply(overrides: Partial<AgentReplyDoc>): AgentReplyDoc {
  return {
    kind: "text",
    summary: "",
    intent: "monitor_query",
    rendered_ir: "",
    table: null,
    plot: null,
    findings: [],
    raw_response: "",
    provenance_task_ids: [],
    ...overrides,
  };
}

describe("renderTable", () => {
  it("renders header and rows", () => {
    const node = renderTable({
      columns: ["bond", "energy"],
      rows: [["C-H_1", 99.1], ["O-H", 105.2]],
      row_count: 2,
    });
    const headers = [...node.querySelectorAll("th")].map((th) => th.textContent);
    expect(headers).toEqual(["bond", "energy"]);
    expect(node.querySelectorAll("tbody tr")).toHaveLength(2);
    expect(node.textContent).toContain("2 row(s)");
  });

  it("paginates beyond 15 rows and shows null markers", () => {
    const rows = Array.from({ length: 40 }, (_, i) => [i, i % 3 === 0 ? null : i * 2]);
    const node = renderTable({ columns: ["i", "v"], rows, row_count: 40 });
    expect(node.querySelectorAll("tbody tr")).toHaveLength(15);
    expect(node.textContent).toContain("page 1/3");
    const next = [...node.querySelectorAll("button")].find((b) => b.textContent === "›")!;
    next.click();
    expect(node.textContent).toContain("page 2/3");
    expect(node.textContent).toContain("∅");
  });

  it("flags truncation", () => {
    const node = renderTable({ columns: ["a"], rows: [[1]], row_count: 2000, truncated: true });
    expect(node.textContent).toContain("truncated");
  });
});

describe("renderChart", () => {
  const plot: PlotDoc = {
    kind: "bar",
    x: "bond_id",
    y: "bd_enthalpy",
    title: "BDE by bond",
    series: { x: ["C-H_1", "C-H_2", "O-H"], y: [99.0, 101.5, 110.2] },
  };

  it("draws one bar per point", () => {
    const svg = renderChart(plot);
    expect(svg.querySelectorAll("rect.chart-bar")).toHaveLength(3);
    expect(svg.textContent).toContain("BDE by bond");
    const bars = [...svg.querySelectorAll("rect.chart-bar")];
    expect(bars.map((b) => b.getAttribute("data-x"))).toEqual(["C-H_1", "C-H_2", "O-H"]);
  });

  it("line charts connect points", () => {
    const svg = renderChart({ ...plot, kind: "line" });
    expect(svg.querySelectorAll("polyline.chart-line")).toHaveLength(1);
    expect(svg.querySelectorAll("circle.chart-dot")).toHaveLength(3);
  });

  it("scatter draws dots only", () => {
    const svg = renderChart({ ...plot, kind: "scatter" });
    expect(svg.querySelectorAll("polyline")).toHaveLength(0);
    expect(svg.querySelectorAll("circle.chart-dot")).toHaveLength(3);
  });

  it("handles empty series", () => {
    const svg = renderChart({ ...plot, series: { x: [], y: [] } });
    expect(svg.textContent).toContain("(no data)");
  });
});

describe("renderTurn", () => {
  beforeEach(() => {
    document.body.innerHTML = "";
  });

  it("shows the generated query in a collapsible block with edit hook", () => {
    const onEdit = vi.fn();
    const node = renderTurn(
      "highest energy?",
      reply({
        kind: "table",
        summary: "1 row",
        rendered_ir: "SELECT * FROM buffer LIMIT 1",
        table: { columns: ["task_id"], rows: [["t1"]], row_count: 1 },
      }),
      { onEdit, onRetry: vi.fn() },
    );
    const code = node.querySelector(".ir-block code")!;
    expect(code.textContent).toBe("SELECT * FROM buffer LIMIT 1");
    (node.querySelector("button.edit-rerun") as HTMLButtonElement).click();
    expect(onEdit).toHaveBeenCalledWith("SELECT * FROM buffer LIMIT 1");
    expect(node.querySelector(".result-table")).toBeTruthy();
  });

  it("error turns list findings and offer retry", () => {
    const onRetry = vi.fn();
    const node = renderTurn(
      "bad question",
      reply({
        kind: "error",
        summary: "could not produce a valid query",
        findings: [{ kind: "unresolved_path", path: "node", detail: "not in schema" }],
      }),
      { onEdit: vi.fn(), onRetry },
    );
    expect(node.querySelector(".findings")!.textContent).toContain("node");
    (node.querySelector("button.retry") as HTMLButtonElement).click();
    expect(onRetry).toHaveBeenCalledWith("bad question");
  });

  it("plot turns embed an svg chart", () => {
    const node = renderTurn(
      "plot it",
      reply({
        kind: "plot",
        summary: "chart",
        rendered_ir: "SELECT ...",
        plot: {
          kind: "bar", x: "b", y: "v", title: "t",
          series: { x: ["a"], y: [1] },
        },
      }),
      { onEdit: vi.fn(), onRetry: vi.fn() },
    );
    expect(node.querySelector("svg.chart-bar, svg.chart")).toBeTruthy();
  });
});

describe("renderFindings", () => {
  it("one list item per finding", () => {
    const node = renderFindings([
      { kind: "unresolved_path", path: "node", detail: "x" },
      { kind: "type_mismatch", path: "label", detail: "y" },
    ]);
    expect(node.querySelectorAll("li")).toHaveLength(2);
  });
});
