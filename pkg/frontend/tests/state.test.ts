import { describe, expect, it } from "vitest";

import type { StreamEvent } from "../src/api";
import { appendTurn, newState, recordEvent, setConnection } from "../src/state";

function taskEvent(id: string, kind: StreamEvent["kind"] = "task"): StreamEvent {
  return { kind, payload: { task_id: id, activity_id: "a" } };
}

describe("state", () => {
  it("counts distinct task events", () => {
    const state = newState("s");
    for (let i = 0; i < 5; i++) {
      recordEvent(state, taskEvent(`t${i}`));
    }
    expect(state.taskCount).toBe(5);
  });

  it("deduplicates by task_id across reconnects", () => {
    const state = newState("s");
    recordEvent(state, taskEvent("t1"));
    const effect = recordEvent(state, taskEvent("t1"));
    expect(effect.countChanged).toBe(false);
    expect(state.taskCount).toBe(1);
  });

  it("routes anomaly events to the feed, newest first", () => {
    const state = newState("s");
    recordEvent(state, taskEvent("a1", "anomaly"));
    recordEvent(state, taskEvent("a2", "anomaly"));
    expect(state.anomalies.map((a) => a.task_id)).toEqual(["a2", "a1"]);
    expect(state.taskCount).toBe(0);
  });

  it("agent events count separately", () => {
    const state = newState("s");
    recordEvent(state, taskEvent("g1", "agent"));
    expect(state.agentCount).toBe(1);
    expect(state.taskCount).toBe(0);
  });

  it("ignores events without a task id", () => {
    const state = newState("s");
    const effect = recordEvent(state, { kind: "task", payload: {} as never });
    expect(effect.countChanged).toBe(false);
  });

  it("appends chat turns in order", () => {
    const state = newState("s");
    const reply = {
      kind: "text", summary: "hi", intent: "greeting", rendered_ir: "",
      table: null, plot: null, findings: [], raw_response: "", provenance_task_ids: [],
    } as const;
    appendTurn(state, "hello", reply as never);
    appendTurn(state, "again", reply as never);
    expect(state.turns.map((t) => t.user)).toEqual(["hello", "again"]);
  });

  it("tracks connection status", () => {
    const state = newState("s");
    setConnection(state, "open");
    expect(state.connection).toBe("open");
  });
});
