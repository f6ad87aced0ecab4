import type {
  ActionDict,
  ExecutionDict,
  TranscriptEvent,
  TranslationDict,
} from "./types.js";
import type { ConnectionStatus } from "./events.js";

const EXCERPT_CHARS = 400;

export function excerpt(text: string, limit = EXCERPT_CHARS): string {
  if (text.length <= limit) return text;
  return `${text.slice(0, limit)}…`;
}

/** One rendered campaign step; filled in field by field as events arrive and
 * finalized by the step_recorded event. Every field traces to an event. */
export interface StepCard {
  index: number;
  tactic: string;
  promptExcerpt: string;
  commands: string[];
  outputExcerpt: string;
  sessionEvents: string[];
  verdict: "SUCCESS" | "FAIL" | null;
  summary: string;
  nextTactic: string | null;
  complete: boolean;
}

export interface PendingCard {
  stepIndex: number;
  commands: string[];
  stopRequested: boolean;
  /** Set once a decision was acknowledged, before the service clears it. */
  decidedVerdict: string | null;
}

export interface ConsoleState {
  campaignId: string;
  connection: ConnectionStatus;
  currentTactic: string | null;
  currentStage: string | null;
  steps: StepCard[];
  pending: PendingCard | null;
  stopReason: string | null;
  errors: string[];
  lastSeq: number;
}

export function initialState(campaignId: string): ConsoleState {
  return {
    campaignId,
    connection: "connecting",
    currentTactic: null,
    currentStage: null,
    steps: [],
    pending: null,
    stopReason: null,
    errors: [],
    lastSeq: -1,
  };
}

function blankCard(index: number, tactic: string | null): StepCard {
  return {
    index,
    tactic: tactic ?? "?",
    promptExcerpt: "",
    commands: [],
    outputExcerpt: "",
    sessionEvents: [],
    verdict: null,
    summary: "",
    nextTactic: null,
    complete: false,
  };
}

/** Immutably replace (or append, kept sorted by index) one step card. */
function withCard(
  state: ConsoleState,
  index: number,
  update: (card: StepCard) => StepCard,
): ConsoleState {
  const steps = [...state.steps];
  let pos = steps.findIndex((s) => s.index === index);
  if (pos === -1) {
    steps.push(blankCard(index, state.currentTactic));
    steps.sort((a, b) => a.index - b.index);
    pos = steps.findIndex((s) => s.index === index);
  }
  steps[pos] = update(steps[pos]);
  return { ...state, steps };
}

function combinedOutput(execution: ExecutionDict): string {
  return execution.records.map((r) => r.output).join("\n");
}

/**
 * Pure reducer from the campaign event stream to the view model. The console
 * holds no campaign logic: every transition here only restates fields the
 * service already emitted.
 */
export function reduce(state: ConsoleState, event: TranscriptEvent): ConsoleState {
  if (event.seq <= state.lastSeq) return state; // replays after resume
  state = { ...state, lastSeq: event.seq };
  const p = event.payload;
  const index = event.step_index;
  switch (event.kind) {
    case "prompt_composed": {
      const stage = p["stage"] as string;
      const next = { ...state, currentStage: stage };
      if (index < 0 || stage !== "execution") return next;
      const bundle = p["bundle"] as { composed: string };
      return withCard(next, index, (card) => ({
        ...card,
        tactic: next.currentTactic ?? card.tactic,
        promptExcerpt: excerpt(bundle.composed),
      }));
    }
    case "model_responded":
      return state;
    case "action_pending_approval": {
      const action = p["action"] as ActionDict;
      return {
        ...state,
        pending: {
          stepIndex: index,
          commands: action.commands,
          stopRequested: action.stop_requested,
          decidedVerdict: null,
        },
      };
    }
    case "approval_decided": {
      const verdict = p["verdict"] as string;
      return {
        ...state,
        pending:
          state.pending && state.pending.stepIndex === index
            ? { ...state.pending, decidedVerdict: verdict }
            : state.pending,
      };
    }
    case "action_executed": {
      const action = p["action"] as ActionDict;
      const execution = p["execution"] as ExecutionDict;
      const cleared =
        state.pending && state.pending.stepIndex === index
          ? { ...state, pending: null }
          : state;
      return withCard(cleared, index, (card) => ({
        ...card,
        commands: action.commands,
        outputExcerpt: excerpt(combinedOutput(execution)),
        sessionEvents: execution.session_events,
      }));
    }
    case "translation_produced": {
      const translation = p["translation"] as TranslationDict;
      return withCard(state, index, (card) => ({
        ...card,
        verdict: translation.verdict,
        summary: translation.summary,
      }));
    }
    case "tactic_selected": {
      const tactic = p["tactic"] as string;
      const next = { ...state, currentTactic: tactic };
      if (index < 0 || p["initial"]) return next;
      return withCard(next, index, (card) => ({ ...card, nextTactic: tactic }));
    }
    case "step_recorded": {
      const step = p["step"] as {
        index: number;
        tactic: string;
        action: ActionDict;
        execution: ExecutionDict;
        translation: TranslationDict;
        next_tactic: string;
      };
      return withCard(state, step.index, (card) => ({
        ...card,
        tactic: step.tactic,
        commands: step.action.commands,
        outputExcerpt: excerpt(combinedOutput(step.execution)),
        sessionEvents: step.execution.session_events,
        verdict: step.translation.verdict,
        summary: step.translation.summary,
        nextTactic: step.next_tactic,
        complete: true,
      }));
    }
    case "error": {
      const kind = p["error"] as string;
      const detail = (p["detail"] ?? p["reason"] ?? p["spans"] ?? "") as unknown;
      return {
        ...state,
        errors: [...state.errors, `${kind}: ${String(detail)}`.trim()],
      };
    }
    case "campaign_stopped":
      return { ...state, stopReason: p["stop_reason"] as string, pending: null };
    default:
      return state;
  }
}
