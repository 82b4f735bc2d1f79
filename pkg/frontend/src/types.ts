// Mirrors of the session service payloads. The console renders only what the
// service sends; there is no client-side SQL execution and no gold-SQL field
// anywhere in these shapes.

export type SessionState = "Idle" | "AgentWorking" | "AwaitingHuman" | "Completed";

export interface SessionSummary {
  session_id: string;
  db_id: string;
  state: SessionState;
}

export interface CandidateView {
  nlq: string;
  schema_text: string;
  candidate_sql: string;
  execution_status: string;
  preview_rows: unknown[][];
  row_count: number;
  truncated: boolean;
  round_number: number;
  budget_remaining: number;
}

export interface TranscriptEvent {
  role: string;
  content?: string;
  tool_name?: string;
  tool_arguments?: Record<string, unknown>;
  author?: string;
  phase?: string;
  task_id?: string;
}

export interface TaskResultEntry {
  task_id: string;
  candidate_sql: string;
  human_verdict: string;
  comparator_z: number | null;
  flags: string[];
}

export interface SessionView {
  session_id: string;
  db_id: string;
  agent_label: string;
  state: SessionState;
  paused: boolean;
  task_ids: string[];
  current_task_index: number;
  pending: CandidateView | null;
  transcript: TranscriptEvent[];
  results: TaskResultEntry[];
  error: string | null;
}

export interface MemoryEntry {
  key: string;
  body: string;
  provenance: { run_id: string; task_id: string; created_at: string };
}

export type MemoryListing = Record<string, MemoryEntry[]>;

export interface CreateSessionRequest {
  db_id: string;
  task_ids: string[];
  agent_label?: string;
}
