import { describe, expect, it } from "vitest";

import { initialState, reduce, type ConsoleState } from "../src/state.js";
import { renderView } from "../src/render.js";
import type { TranscriptEvent } from "../src/types.js";

let seq = 0;

function ev(
  kind: string,
  step_index: number,
  payload: Record<string, unknown>,
): TranscriptEvent {
  return { seq: seq++, kind, step_index, payload, ts_ms: seq };
}

function play(events: TranscriptEvent[], start?: ConsoleState): ConsoleState {
  return events.reduce(reduce, start ?? initialState("c0001"));
}

function demoStepEvents(index: number, tactic: string, nextTactic: string) {
  const action = { commands: [`cmd-${index}`], stop_requested: false };
  const execution = {
    records: [
      {
        command: `cmd-${index}`,
        exit_status: 0,
        output: `output-${index}`,
        duration_ms: 1,
        timed_out: false,
        ran: true,
      },
    ],
    session_events: [] as string[],
  };
  const translation = { verdict: "SUCCESS", summary: "fine.", recommendations: "" };
  return [
    ev("prompt_composed", index, {
      stage: "execution",
      bundle: { composed: `prompt-${index}` },
      attempt: 0,
    }),
    ev("model_responded", index, { stage: "execution", response: "1) x", attempt: 0 }),
    ev("action_executed", index, { action, execution }),
    ev("translation_produced", index, { translation }),
    ev("tactic_selected", index, { tactic: nextTactic }),
    ev("step_recorded", index, {
      step: {
        index,
        tactic,
        prompt_bundles: [],
        action,
        execution,
        translation,
        next_tactic: nextTactic,
      },
    }),
  ];
}

describe("event reducer", () => {
  it("builds step cards in event order with fields traced to events", () => {
    seq = 0;
    const state = play([
      ev("tactic_selected", -1, { tactic: "RECON", initial: true }),
      ...demoStepEvents(0, "RECON", "EXPLOIT"),
      ...demoStepEvents(1, "EXPLOIT", "END_OF_CAMPAIGN"),
      ev("campaign_stopped", 1, { stop_reason: "END_OF_CAMPAIGN" }),
    ]);
    expect(state.steps.map((s) => s.index)).toEqual([0, 1]);
    expect(state.steps.map((s) => s.tactic)).toEqual(["RECON", "EXPLOIT"]);
    expect(state.steps[0]).toMatchObject({
      commands: ["cmd-0"],
      outputExcerpt: "output-0",
      verdict: "SUCCESS",
      nextTactic: "EXPLOIT",
      promptExcerpt: "prompt-0",
      complete: true,
    });
    expect(state.currentTactic).toBe("END_OF_CAMPAIGN");
    expect(state.stopReason).toBe("END_OF_CAMPAIGN");
  });

  it("tracks the pending approval card through its decision", () => {
    seq = 0;
    const action = { commands: ["nmap -sV 172.16.2.3"], stop_requested: false };
    let state = play([ev("action_pending_approval", 0, { action })]);
    expect(state.pending).toMatchObject({
      stepIndex: 0,
      commands: ["nmap -sV 172.16.2.3"],
      decidedVerdict: null,
    });
    state = play(
      [ev("approval_decided", 0, { verdict: "approve", action })],
      state,
    );
    expect(state.pending?.decidedVerdict).toBe("approve");
    state = play(
      [
        ev("action_executed", 0, {
          action,
          execution: { records: [], session_events: [] },
        }),
      ],
      state,
    );
    expect(state.pending).toBeNull();
  });

  it("ignores events at or below the last seen sequence (resume replay)", () => {
    seq = 0;
    const events = demoStepEvents(0, "RECON", "EXPLOIT");
    const once = play(events);
    const twice = events.reduce(reduce, once);
    expect(twice).toEqual(once);
  });

  it("collects error events and the stop banner", () => {
    seq = 0;
    const state = play([
      ev("error", 0, { error: "parse_failure", reason: "refusal", attempt: 0 }),
      ev("campaign_stopped", 0, { stop_reason: "PARSER_GIVE_UP" }),
    ]);
    expect(state.errors).toEqual(["parse_failure: refusal"]);
    expect(state.stopReason).toBe("PARSER_GIVE_UP");
  });

  it("truncates long prompt and output excerpts", () => {
    seq = 0;
    const long = "x".repeat(5000);
    const state = play([
      ev("prompt_composed", 0, {
        stage: "execution",
        bundle: { composed: long },
        attempt: 0,
      }),
    ]);
    expect(state.steps[0].promptExcerpt.length).toBeLessThan(500);
    expect(state.steps[0].promptExcerpt.endsWith("…")).toBe(true);
  });
});

describe("view rendering", () => {
  it("renders cards, pending buttons, and the stop banner from state only", () => {
    seq = 0;
    const state = play([
      ev("tactic_selected", -1, { tactic: "RECON", initial: true }),
      ...demoStepEvents(0, "RECON", "EXPLOIT"),
      ev("action_pending_approval", 1, {
        action: { commands: ["use exploit/unix/ftp/vsftpd_234_backdoor"], stop_requested: false },
      }),
    ]);
    const html = renderView(state);
    expect(html).toContain("[RECON]");
    expect(html).toContain("cmd-0");
    expect(html).toContain('data-decision="approve"');
    expect(html).toContain("use exploit/unix/ftp/vsftpd_234_backdoor");
    const stopped = renderView(
      play([ev("campaign_stopped", 1, { stop_reason: "OPERATOR_STOP" })], state),
    );
    expect(stopped).toContain("campaign stopped: OPERATOR_STOP");
    expect(stopped).not.toContain('data-decision="approve"');
  });

  it("escapes untrusted text from the stream", () => {
    seq = 0;
    const state = play([
      ev("action_executed", 0, {
        action: { commands: ["<script>alert(1)</script>"], stop_requested: false },
        execution: { records: [], session_events: [] },
      }),
    ]);
    const html = renderView(state);
    expect(html).not.toContain("<script>alert(1)</script>");
    expect(html).toContain("&lt;script&gt;");
  });
});
