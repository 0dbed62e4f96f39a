// DOM builders for chat turns, tables, findings, and panels.

import type { AgentReplyDoc, Finding, GuidelineDoc, SchemaDoc, TableDoc, TaskRecordDoc } from "./api";
import { renderChart } from "./chart";

const PAGE_SIZE = 15;

function div(className: string, text?: string): HTMLDivElement {
  const node = document.createElement("div");
  node.className = className;
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

export function renderTable(doc: TableDoc): HTMLElement {
  const wrap = div("table-wrap");
  const table = document.createElement("table");
  table.className = "result-table";
  const head = table.createTHead().insertRow();
  for (const column of doc.columns) {
    const th = document.createElement("th");
    th.textContent = column;
    head.appendChild(th);
  }
  const body = table.createTBody();
  let page = 0;

  const renderPage = () => {
    body.innerHTML = "";
    const start = page * PAGE_SIZE;
    for (const row of doc.rows.slice(start, start + PAGE_SIZE)) {
      const tr = body.insertRow();
      for (const cell of row) {
        const td = tr.insertCell();
        td.textContent = cell === null || cell === undefined ? "∅" : String(cell);
      }
    }
  };
  renderPage();
  wrap.appendChild(table);

  const pages = Math.ceil(doc.rows.length / PAGE_SIZE);
  const footer = div("table-footer");
  footer.textContent =
    `${doc.row_count} row(s)` + (doc.truncated ? " (truncated to 1000)" : "");
  if (pages > 1) {
    const prev = document.createElement("button");
    prev.textContent = "‹";
    const label = document.createElement("span");
    const next = document.createElement("button");
    next.textContent = "›";
    const update = () => {
      label.textContent = ` page ${page + 1}/${pages} `;
      renderPage();
    };
    prev.onclick = () => { page = Math.max(0, page - 1); update(); };
    next.onclick = () => { page = Math.min(pages - 1, page + 1); update(); };
    update();
    footer.append(" ", prev, label, next);
  }
  wrap.appendChild(footer);
  return wrap;
}

export function renderFindings(findings: Finding[]): HTMLElement {
  const list = document.createElement("ul");
  list.className = "findings";
  for (const finding of findings) {
    const item = document.createElement("li");
    item.textContent = finding.path
      ? `${finding.kind}: ${finding.path} — ${finding.detail}`
      : `${finding.kind}: ${finding.detail}`;
    list.appendChild(item);
  }
  return list;
}

export interface TurnHooks {
  onEdit: (irText: string) => void;
  onRetry: (message: string) => void;
}

export function renderTurn(user: string, reply: AgentReplyDoc, hooks: TurnHooks): HTMLElement {
  const turn = div("turn");
  const bubble = div("bubble user", user);
  turn.appendChild(bubble);

  const answer = div(`bubble agent agent-${reply.kind}`);
  answer.appendChild(div("summary", reply.summary));

  if (reply.kind === "error") {
    if (reply.findings.length) {
      answer.appendChild(renderFindings(reply.findings));
    }
    const retry = document.createElement("button");
    retry.className = "retry";
    retry.textContent = "retry";
    retry.onclick = () => hooks.onRetry(user);
    answer.appendChild(retry);
  }
  if (reply.kind === "plot" && reply.plot) {
    answer.appendChild(renderChart(reply.plot));
  }
  if (reply.table && reply.kind !== "plot") {
    answer.appendChild(renderTable(reply.table));
  }
  if (reply.rendered_ir) {
    const details = document.createElement("details");
    details.className = "ir-block";
    const summary = document.createElement("summary");
    summary.textContent = "generated query";
    const code = document.createElement("code");
    code.textContent = reply.rendered_ir;
    const edit = document.createElement("button");
    edit.className = "edit-rerun";
    edit.textContent = "edit & re-run";
    edit.onclick = () => hooks.onEdit(reply.rendered_ir);
    details.append(summary, code, edit);
    answer.appendChild(details);
  }
  turn.appendChild(answer);
  return turn;
}

export function renderSchema(schema: SchemaDoc): HTMLElement {
  const wrap = div("schema");
  for (const [name, activity] of Object.entries(schema.activities).sort()) {
    const details = document.createElement("details");
    const summary = document.createElement("summary");
    summary.textContent = `${name} (${activity.task_count})`;
    details.appendChild(summary);
    for (const [role, fields] of [["inputs", activity.inputs], ["outputs", activity.outputs]] as const) {
      const keys = Object.keys(fields).sort();
      if (!keys.length) {
        continue;
      }
      const list = document.createElement("ul");
      list.className = `fields fields-${role}`;
      for (const path of keys) {
        const spec = fields[path];
        const item = document.createElement("li");
        item.textContent = `${path}: ${spec.type}` +
          (spec.examples.length ? ` (e.g. ${spec.examples[0]})` : "");
        list.appendChild(item);
      }
      const label = div("role-label", role);
      details.append(label, list);
    }
    wrap.appendChild(details);
  }
  if (!Object.keys(schema.activities).length) {
    wrap.appendChild(div("empty", "no activities observed yet"));
  }
  return wrap;
}

export function renderGuidelines(guidelines: GuidelineDoc[]): HTMLElement {
  const list = document.createElement("ol");
  list.className = "guidelines";
  for (const guideline of guidelines) {
    const item = document.createElement("li");
    item.className = `guideline-${guideline.origin}`;
    item.textContent = guideline.text;
    list.appendChild(item);
  }
  return list;
}

export function renderAnomaly(record: TaskRecordDoc, onClick: (taskId: string) => void): HTMLElement {
  const used = (record.used ?? {}) as Record<string, unknown>;
  const generated = (record.generated ?? {}) as Record<string, unknown>;
  const item = div("anomaly-item");
  const score = typeof generated.score === "number" ? generated.score.toFixed(2) : "?";
  item.textContent = `${used.source_task_id} ${used.path}=${generated.value} (score ${score})`;
  item.onclick = () => onClick(String(used.source_task_id ?? ""));
  return item;
}
