// UI state and its pure update functions. The render layer subscribes to
// changes; tests drive these directly without a DOM.

import type { AgentReplyDoc, StreamEvent, TaskRecordDoc } from "./api";

export interface ChatTurn {
  user: string;
  reply: AgentReplyDoc;
  at: number;
}

export type ConnectionStatus = "connecting" | "open" | "closed";

export interface UIState {
  sessionId: string;
  turns: ChatTurn[];
  seenTaskIds: Set<string>;
  taskCount: number;
  agentCount: number;
  anomalies: TaskRecordDoc[];
  connection: ConnectionStatus;
}

export function newState(sessionId?: string): UIState {
  return {
    sessionId: sessionId ?? `ui-${Math.random().toString(36).slice(2, 10)}`,
    turns: [],
    seenTaskIds: new Set(),
    taskCount: 0,
    agentCount: 0,
    anomalies: [],
    connection: "connecting",
  };
}

export function appendTurn(state: UIState, user: string, reply: AgentReplyDoc): ChatTurn {
  const turn: ChatTurn = { user, reply, at: Date.now() };
  state.turns.push(turn);
  return turn;
}

export interface EventEffect {
  countChanged: boolean;
  anomaly: TaskRecordDoc | null;
}

// Stream records deduplicate on task_id so a reconnect never double-counts.
export function recordEvent(state: UIState, event: StreamEvent): EventEffect {
  const id = event.payload?.task_id;
  if (!id || state.seenTaskIds.has(id)) {
    return { countChanged: false, anomaly: null };
  }
  state.seenTaskIds.add(id);
  if (event.kind === "task") {
    state.taskCount += 1;
    return { countChanged: true, anomaly: null };
  }
  if (event.kind === "anomaly") {
    state.anomalies.unshift(event.payload);
    if (state.anomalies.length > 100) {
      state.anomalies.pop();
    }
    return { countChanged: false, anomaly: event.payload };
  }
  state.agentCount += 1;
  return { countChanged: false, anomaly: null };
}

export function setConnection(state: UIState, status: ConnectionStatus): void {
  state.connection = status;
}
