// Typed client for the provenance service. Every UI panel goes through
// these calls; nothing in the browser computes results on its own.

export interface TableDoc {
  columns: string[];
  rows: unknown[][];
  row_count: number;
  truncated?: boolean;
}

export interface PlotDoc {
  kind: "bar" | "line" | "scatter";
  x: string;
  y: string;
  title: string;
  series: { x: unknown[]; y: number[] };
}

export interface Finding {
  kind: string;
  path: string;
  detail: string;
}

export interface AgentReplyDoc {
  kind: "text" | "table" | "plot" | "error";
  summary: string;
  intent: string;
  rendered_ir: string;
  table: TableDoc | null;
  plot: PlotDoc | null;
  findings: Finding[];
  raw_response: string;
  provenance_task_ids: string[];
}

export interface GuidelineDoc {
  id: string;
  text: string;
  origin: "static" | "user";
  added_at: number;
}

export interface FieldSpecDoc {
  type: string;
  examples: string[];
  observed_count: number;
  lengths?: number[];
}

export interface ActivityDoc {
  task_count: number;
  inputs: Record<string, FieldSpecDoc>;
  outputs: Record<string, FieldSpecDoc>;
}

export interface SchemaDoc {
  activities: Record<string, ActivityDoc>;
  common_fields: Record<string, string>;
}

export interface TaskRecordDoc {
  task_id: string;
  activity_id: string;
  status?: string;
  type?: string;
  used?: Record<string, unknown>;
  generated?: Record<string, unknown>;
  [key: string]: unknown;
}

export interface StreamEvent {
  kind: "task" | "anomaly" | "agent";
  payload: TaskRecordDoc;
}

export type QueryResult =
  | { ok: true; table: TableDoc & { rendered_ir: string } }
  | { ok: false; findings: Finding[] };

export class ApiClient {
  constructor(private base: string = "") {}

  private async post(path: string, body: unknown): Promise<Response> {
    return fetch(this.base + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  async chat(message: string, sessionId: string, configLabel?: string): Promise<AgentReplyDoc> {
    const res = await this.post("/api/chat", {
      message,
      session_id: sessionId,
      config_label: configLabel,
    });
    if (!res.ok && res.status !== 503) {
      throw new Error(`chat failed: HTTP ${res.status}`);
    }
    return (await res.json()) as AgentReplyDoc;
  }

  async runQueryText(text: string): Promise<QueryResult> {
    const res = await this.post("/api/query", { text });
    const body = await res.json();
    if (res.status === 422) {
      return { ok: false, findings: (body.findings ?? []) as Finding[] };
    }
    if (!res.ok) {
      throw new Error(`query failed: HTTP ${res.status}`);
    }
    return { ok: true, table: body };
  }

  async schema(): Promise<SchemaDoc> {
    const res = await fetch(this.base + "/api/schema");
    return (await res.json()) as SchemaDoc;
  }

  async guidelines(sessionId?: string): Promise<GuidelineDoc[]> {
    const suffix = sessionId ? `?session_id=${encodeURIComponent(sessionId)}` : "";
    const res = await fetch(this.base + "/api/guidelines" + suffix);
    const body = await res.json();
    return (body.guidelines ?? []) as GuidelineDoc[];
  }

  async addGuideline(text: string, sessionId?: string): Promise<GuidelineDoc> {
    const res = await this.post("/api/guidelines", { text, session_id: sessionId });
    if (!res.ok) {
      const body = await res.json().catch(() => ({}));
      throw new Error(body.error ?? `guideline rejected: HTTP ${res.status}`);
    }
    return (await res.json()) as GuidelineDoc;
  }

  async anomalies(limit = 25): Promise<TaskRecordDoc[]> {
    const res = await fetch(this.base + `/api/anomalies?limit=${limit}`);
    const body = await res.json();
    return (body.anomalies ?? []) as TaskRecordDoc[];
  }

  async demoSynthetic(inputs: number): Promise<{ records: number }> {
    const res = await this.post("/api/demo/synthetic", { inputs });
    return (await res.json()) as { records: number };
  }

  async demoAnomaly(): Promise<{ anomalies: unknown[] }> {
    const res = await this.post("/api/demo/anomaly", {});
    return (await res.json()) as { anomalies: unknown[] };
  }
}
