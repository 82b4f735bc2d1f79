// Pure HTML renderers. Every function maps service payloads to markup;
// nothing here fetches or computes results client-side.

import { escapeHtml, highlightSql } from "./highlight.js";
import type {
  CandidateView,
  MemoryListing,
  SessionState,
  SessionSummary,
  SessionView,
  TranscriptEvent,
} from "./types.js";

const STATE_BADGES: Record<SessionState, { label: string; css: string }> = {
  Idle: { label: "queued", css: "badge-idle" },
  AgentWorking: { label: "agent working", css: "badge-working" },
  AwaitingHuman: { label: "needs review", css: "badge-review" },
  Completed: { label: "completed", css: "badge-done" },
};

export function stateBadge(state: SessionState): string {
  const badge = STATE_BADGES[state] ?? { label: state, css: "badge-idle" };
  return `<span class="badge ${badge.css}">${escapeHtml(badge.label)}</span>`;
}

export function renderServiceDownBanner(detail: string): string {
  return `<div class="banner error" data-testid="service-down">
    Service unreachable: ${escapeHtml(detail)} <button data-action="retry">Retry</button>
  </div>`;
}

export function renderDashboard(sessions: SessionSummary[]): string {
  if (sessions.length === 0) {
    return `<div class="empty-state" data-testid="empty-state">
      <p>No sessions yet.</p>
      <button data-action="new-session">Create a session</button>
    </div>`;
  }
  const rows = sessions
    .map(
      (s) => `<tr data-session="${escapeHtml(s.session_id)}">
        <td><a href="#/session/${escapeHtml(s.session_id)}">${escapeHtml(s.session_id)}</a></td>
        <td>${escapeHtml(s.db_id)}</td>
        <td>${stateBadge(s.state)}</td>
      </tr>`,
    )
    .join("\n");
  return `<table class="session-table">
    <thead><tr><th>session</th><th>database</th><th>state</th></tr></thead>
    <tbody>${rows}</tbody>
  </table>
  <button data-action="new-session">Create a session</button>`;
}

export function renderPreviewTable(candidate: CandidateView): string {
  const shown = candidate.preview_rows.length;
  const note =
    candidate.row_count > shown
      ? `<p class="muted">showing ${shown} of ${candidate.row_count} rows</p>`
      : "";
  if (candidate.execution_status !== "Rows") {
    return `<div class="preview-error">execution: ${escapeHtml(candidate.execution_status)}</div>`;
  }
  const body = candidate.preview_rows
    .map(
      (row) =>
        `<tr>${row.map((cell) => `<td>${escapeHtml(cell === null ? "NULL" : String(cell))}</td>`).join("")}</tr>`,
    )
    .join("\n");
  return `<table class="preview-table"><tbody>${body}</tbody></table>${note}`;
}

export function budgetIndicator(candidate: CandidateView, cap = 25): string {
  return `<span class="budget" data-testid="budget">round ${candidate.round_number} · ${candidate.budget_remaining} of ${cap} feedback rounds remaining</span>`;
}

export function renderReviewPane(view: SessionView): string {
  const pending = view.pending;
  if (view.state !== "AwaitingHuman" || pending === null) {
    const note = view.state === "Completed" ? "session completed" : "agent working…";
    return `<div class="review-pane waiting" data-testid="review-waiting">${escapeHtml(note)}</div>`;
  }
  return `<div class="review-pane" data-testid="review-pane">
    <section class="question"><h3>Question</h3><p>${escapeHtml(pending.nlq)}</p></section>
    <section class="candidate">
      <h3>Candidate SQL ${budgetIndicator(pending)}</h3>
      <pre class="sql">${highlightSql(pending.candidate_sql)}</pre>
    </section>
    <section class="preview"><h3>Execution preview</h3>${renderPreviewTable(pending)}</section>
    <details class="schema"><summary>Database schema</summary><pre>${escapeHtml(pending.schema_text)}</pre></details>
    <section class="actions">
      <textarea data-field="feedback" placeholder="Describe what is wrong and how to fix it…"></textarea>
      <button data-action="send-feedback">Send feedback</button>
      <button data-action="approve" class="approve">Approve</button>
      <button data-action="skip" class="skip">Skip task</button>
      <div class="inline-error" data-testid="inline-error" hidden></div>
    </section>
  </div>`;
}

const ROLE_CSS: Record<string, string> = {
  user: "turn-human",
  assistant: "turn-agent",
  self_thought: "turn-thought",
  tool_call: "turn-tool",
  tool_result: "turn-tool-result",
  system: "turn-system",
  trailer: "turn-trailer",
};

export function renderTranscript(events: TranscriptEvent[]): string {
  const items = events
    .map((event) => {
      const css = ROLE_CSS[event.role] ?? "turn-system";
      const phase = event.phase ? `<span class="phase-tag">${escapeHtml(event.phase)}</span>` : "";
      const author = event.author ? `<span class="author">${escapeHtml(event.author)}</span>` : "";
      const tool = event.tool_name
        ? `<code class="tool">${escapeHtml(event.tool_name)}(${escapeHtml(
            JSON.stringify(event.tool_arguments ?? {}),
          )})</code>`
        : "";
      const content = event.content ? `<p>${escapeHtml(event.content)}</p>` : "";
      return `<li class="turn ${css}">${author}${phase}${tool}${content}</li>`;
    })
    .join("\n");
  return `<ol class="transcript">${items}</ol>`;
}

export function renderMemory(listing: MemoryListing, kindFilter = "", query = ""): string {
  const needle = query.trim().toLowerCase();
  const sections = Object.entries(listing)
    .filter(([kind]) => kindFilter === "" || kind === kindFilter)
    .map(([kind, entries]) => {
      const filtered = entries.filter(
        (entry) =>
          needle === "" ||
          entry.key.toLowerCase().includes(needle) ||
          entry.body.toLowerCase().includes(needle),
      );
      const items = filtered
        .map(
          (entry) => `<li class="memory-entry" data-kind="${escapeHtml(kind)}">
            <div class="memory-key">${escapeHtml(entry.key)}</div>
            <pre class="memory-body">${escapeHtml(entry.body)}</pre>
            <div class="memory-provenance muted">task ${escapeHtml(entry.provenance.task_id)} · ${escapeHtml(entry.provenance.created_at)}</div>
          </li>`,
        )
        .join("\n");
      return `<section class="memory-kind" data-kind="${escapeHtml(kind)}">
        <h3>${escapeHtml(kind)} (${filtered.length})</h3>
        <ul>${items}</ul>
      </section>`;
    })
    .join("\n");
  return `<div class="memory-inspector">${sections}</div>`;
}
