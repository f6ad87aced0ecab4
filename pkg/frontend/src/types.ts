/** Wire shapes shared across the console. Every field mirrors what the
 * service emits; the console never invents state of its own. */

export interface ActionDict {
  commands: string[];
  stop_requested: boolean;
}

export interface CommandRecordDict {
  command: string;
  exit_status: number;
  output: string;
  duration_ms: number;
  timed_out: boolean;
  ran: boolean;
}

export interface ExecutionDict {
  records: CommandRecordDict[];
  session_events: string[];
}

export interface TranslationDict {
  verdict: "SUCCESS" | "FAIL";
  summary: string;
  recommendations: string;
}

/** One line of the campaign event stream (the transcript event record). */
export interface TranscriptEvent {
  seq: number;
  kind: string;
  step_index: number;
  payload: Record<string, unknown>;
  ts_ms: number;
}

/** Snapshot returned by GET /campaigns/{id}. */
export interface CampaignSnapshot {
  campaign_id: string;
  mode: string;
  running: boolean;
  stop_reason: string | null;
  tactic: string;
  stage: string;
  steps: number;
  total_actions: number;
  consecutive_failures: number;
  pending_approval: { step_index: number; action: ActionDict } | null;
  error: string | null;
  event_count: number;
}

export interface CreateCampaignRequest {
  scenario?: string;
  script?: string;
  seed?: number;
  mode?: "autonomous" | "assisted" | "observer";
  config?: Record<string, unknown>;
}

export type DecisionVerdict = "approve" | "deny" | "edit" | "take_over";

export interface DecisionRequest {
  step_index: number;
  verdict: DecisionVerdict;
  replacement_commands?: string[];
  manual_command?: string;
}
