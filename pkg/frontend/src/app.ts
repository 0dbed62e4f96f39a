// Application wiring: binds the API client, state, and live feed to the DOM.
// Exported as a class so integration tests can drive a full UI instance
// against a real server.

import { ApiClient, type Finding } from "./api";
import { renderAnomaly, renderFindings, renderGuidelines, renderSchema, renderTable, renderTurn } from "./render";
import { LiveFeed, wsUrl, type WebSocketFactory } from "./stream";
import { appendTurn, newState, recordEvent, setConnection, type UIState } from "./state";

function must<T extends Element>(root: ParentNode, selector: string): T {
  const node = root.querySelector(selector);
  if (!node) {
    throw new Error(`missing element ${selector}`);
  }
  return node as T;
}

export class App {
  readonly state: UIState;
  readonly api: ApiClient;
  private feed: LiveFeed | null = null;
  private schemaRefresh: number | null = null;

  constructor(
    private root: ParentNode,
    base = "",
    private wsFactory?: WebSocketFactory,
  ) {
    this.api = new ApiClient(base);
    this.state = newState();
    this.bindChat();
    this.bindQueryPanel();
    this.bindGuidelines();
    this.bindDemo();
    void this.refreshSchema();
    void this.refreshGuidelines();
    void this.refreshAnomalies();
    this.startFeed(base);
  }

  // --- chat ---------------------------------------------------------------

  private bindChat(): void {
    const form = must<HTMLFormElement>(this.root, "#chat-form");
    const input = must<HTMLInputElement>(this.root, "#chat-input");
    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      const message = input.value.trim();
      if (message) {
        input.value = "";
        void this.send(message);
      }
    });
  }

  async send(message: string): Promise<void> {
    const turns = must<HTMLElement>(this.root, "#turns");
    try {
      const reply = await this.api.chat(message, this.state.sessionId);
      appendTurn(this.state, message, reply);
      turns.appendChild(renderTurn(message, reply, {
        onEdit: (ir) => this.fillEditor(ir),
        onRetry: (msg) => void this.send(msg),
      }));
    } catch (err) {
      // network failure: keep the input, show an inline error turn
      const input = must<HTMLInputElement>(this.root, "#chat-input");
      input.value = message;
      const reply = {
        kind: "error" as const,
        summary: `network error: ${String(err)}`,
        intent: "other",
        rendered_ir: "",
        table: null,
        plot: null,
        findings: [],
        raw_response: "",
        provenance_task_ids: [],
      };
      appendTurn(this.state, message, reply);
      turns.appendChild(renderTurn(message, reply, {
        onEdit: () => undefined,
        onRetry: (msg) => void this.send(msg),
      }));
    }
    turns.scrollTop = turns.scrollHeight;
  }

  // --- query editor ---------------------------------------------------------

  fillEditor(irText: string): void {
    must<HTMLTextAreaElement>(this.root, "#query-editor").value = irText;
  }

  private bindQueryPanel(): void {
    const run = must<HTMLButtonElement>(this.root, "#query-run");
    run.addEventListener("click", () => void this.runEditorQuery());
    const save = must<HTMLButtonElement>(this.root, "#query-save-guideline");
    save.addEventListener("click", () => void this.saveEditorAsGuideline());
  }

  async runEditorQuery(): Promise<{ ok: boolean; findings?: Finding[] }> {
    const editor = must<HTMLTextAreaElement>(this.root, "#query-editor");
    const out = must<HTMLElement>(this.root, "#query-result");
    out.innerHTML = "";
    const result = await this.api.runQueryText(editor.value.trim());
    if (!result.ok) {
      out.appendChild(renderFindings(result.findings));
      return { ok: false, findings: result.findings };
    }
    out.appendChild(renderTable(result.table));
    return { ok: true };
  }

  private async saveEditorAsGuideline(): Promise<void> {
    const editor = must<HTMLTextAreaElement>(this.root, "#query-editor");
    const text = editor.value.trim();
    if (!text) {
      return;
    }
    await this.api.addGuideline(`For questions like the last one, run: ${text}`);
    await this.refreshGuidelines();
  }

  // --- side panels ------------------------------------------------------------

  async refreshSchema(): Promise<void> {
    const panel = must<HTMLElement>(this.root, "#schema-body");
    const schema = await this.api.schema();
    panel.innerHTML = "";
    panel.appendChild(renderSchema(schema));
  }

  async refreshGuidelines(): Promise<void> {
    const panel = must<HTMLElement>(this.root, "#guidelines-body");
    const guidelines = await this.api.guidelines(this.state.sessionId);
    panel.innerHTML = "";
    panel.appendChild(renderGuidelines(guidelines));
  }

  async refreshAnomalies(): Promise<void> {
    const panel = must<HTMLElement>(this.root, "#anomaly-body");
    const anomalies = await this.api.anomalies();
    panel.innerHTML = "";
    for (const record of anomalies) {
      panel.appendChild(renderAnomaly(record, (taskId) => {
        this.fillEditor(`SELECT * FROM buffer WHERE task_id = ${JSON.stringify(taskId)}`);
      }));
    }
  }

  private bindGuidelines(): void {
    const form = must<HTMLFormElement>(this.root, "#guideline-form");
    const input = must<HTMLInputElement>(this.root, "#guideline-input");
    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      const text = input.value.trim();
      if (!text) {
        return;
      }
      input.value = "";
      void this.api.addGuideline(text, this.state.sessionId).then(() => this.refreshGuidelines());
    });
  }

  private bindDemo(): void {
    must<HTMLButtonElement>(this.root, "#demo-synthetic").addEventListener(
      "click", () => void this.api.demoSynthetic(10),
    );
    must<HTMLButtonElement>(this.root, "#demo-anomaly").addEventListener(
      "click", () => void this.api.demoAnomaly(),
    );
  }

  // --- live feed -----------------------------------------------------------------

  private startFeed(base: string): void {
    const factory = this.wsFactory
      ?? ((url: string) => new WebSocket(url) as unknown as ReturnType<WebSocketFactory>);
    this.feed = new LiveFeed(wsUrl(base, "/api/stream"), {
      onEvent: (event) => {
        const effect = recordEvent(this.state, event);
        if (effect.countChanged) {
          must<HTMLElement>(this.root, "#task-counter").textContent =
            `${this.state.taskCount} tasks`;
          this.scheduleSchemaRefresh();
        }
        if (effect.anomaly) {
          const panel = must<HTMLElement>(this.root, "#anomaly-body");
          panel.prepend(renderAnomaly(effect.anomaly, (taskId) => {
            this.fillEditor(`SELECT * FROM buffer WHERE task_id = ${JSON.stringify(taskId)}`);
          }));
        }
      },
      onStatus: (status) => {
        setConnection(this.state, status);
        const badge = must<HTMLElement>(this.root, "#conn-status");
        badge.textContent = status;
        badge.className = `badge badge-${status}`;
      },
    }, factory);
    this.feed.start();
  }

  private scheduleSchemaRefresh(): void {
    if (this.schemaRefresh !== null) {
      return;
    }
    this.schemaRefresh = setTimeout(() => {
      this.schemaRefresh = null;
      void this.refreshSchema();
    }, 750) as unknown as number;
  }

  stop(): void {
    this.feed?.stop();
    if (this.schemaRefresh !== null) {
      clearTimeout(this.schemaRefresh);
    }
  }
}
