// Browser wiring: hash routing, live updates over the event stream, and
// explicit user actions posted back to the service.

import { ServiceClient, ServiceError } from "./api.js";
import {
  renderDashboard,
  renderMemory,
  renderReviewPane,
  renderServiceDownBanner,
  renderTranscript,
} from "./render.js";
import type { SessionView } from "./types.js";

const client = new ServiceClient("");
const app = document.getElementById("app")!;

let currentView: SessionView | null = null;
let stopStream: (() => void) | null = null;
let memoryKindFilter = "";
let memoryQuery = "";

function route(): { page: "dashboard" } | { page: "session"; id: string } | { page: "memory"; id: string } {
  const hash = window.location.hash;
  const sessionMatch = /^#\/session\/([^/]+)$/.exec(hash);
  if (sessionMatch) return { page: "session", id: sessionMatch[1] };
  const memoryMatch = /^#\/memory\/([^/]+)$/.exec(hash);
  if (memoryMatch) return { page: "memory", id: memoryMatch[1] };
  return { page: "dashboard" };
}

async function showDashboard(): Promise<void> {
  try {
    const sessions = await client.listSessions();
    app.innerHTML = `<h2>Sessions</h2>${renderDashboard(sessions)}`;
  } catch (error) {
    app.innerHTML = renderServiceDownBanner(String(error));
  }
}

async function refreshSession(id: string): Promise<void> {
  try {
    currentView = await client.getSession(id);
  } catch (error) {
    app.innerHTML = renderServiceDownBanner(String(error));
    return;
  }
  const view = currentView;
  app.innerHTML = `
    <h2>Session ${view.session_id} <a class="memory-link" href="#/memory/${view.session_id}">memory</a></h2>
    <div class="columns">
      <div class="left">${renderReviewPane(view)}</div>
      <div class="right"><h3>Transcript</h3>${renderTranscript(view.transcript)}</div>
    </div>`;
}

function openSession(id: string): void {
  void refreshSession(id);
  stopStream?.();
  // any new transcript event can change state and pending candidate
  stopStream = client.streamEvents(id, () => void refreshSession(id));
}

async function showMemory(id: string): Promise<void> {
  try {
    const listing = await client.getMemory(id);
    app.innerHTML = `
      <h2>Memory <a href="#/session/${id}">back to session</a></h2>
      <div class="memory-controls">
        <select data-field="kind-filter">
          <option value="">all kinds</option>
          ${Object.keys(listing)
            .map((kind) => `<option value="${kind}" ${kind === memoryKindFilter ? "selected" : ""}>${kind}</option>`)
            .join("")}
        </select>
        <input data-field="memory-search" placeholder="search key or body…" value="${memoryQuery}" />
      </div>
      ${renderMemory(listing, memoryKindFilter, memoryQuery)}`;
  } catch (error) {
    app.innerHTML = renderServiceDownBanner(String(error));
  }
}

function showInlineError(message: string): void {
  const slot = app.querySelector<HTMLElement>('[data-testid="inline-error"]');
  if (slot) {
    slot.textContent = message;
    slot.hidden = false;
  }
}

function disableActions(): void {
  app
    .querySelectorAll<HTMLButtonElement>("[data-action]")
    .forEach((button) => (button.disabled = true));
}

async function dispatch(): Promise<void> {
  const current = route();
  if (current.page === "dashboard") await showDashboard();
  else if (current.page === "session") openSession(current.id);
  else await showMemory(current.id);
}

app.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  const action = target.dataset.action;
  if (!action) return;
  const current = route();
  void (async () => {
    try {
      if (action === "retry") await dispatch();
      else if (action === "new-session") {
        const db = window.prompt("database id?");
        const tasks = window.prompt("comma-separated task ids?");
        if (!db || !tasks) return;
        const created = await client.createSession({
          db_id: db,
          task_ids: tasks.split(",").map((t) => t.trim()),
          agent_label: "P-3",
        });
        window.location.hash = `#/session/${created.session_id}`;
      } else if (current.page === "session") {
        if (action === "send-feedback") {
          const box = app.querySelector<HTMLTextAreaElement>('[data-field="feedback"]');
          const text = box?.value ?? "";
          if (!text.trim()) return showInlineError("feedback must be non-empty");
          disableActions();
          await client.sendFeedback(current.id, text);
        } else if (action === "approve") {
          disableActions();
          await client.approve(current.id);
        } else if (action === "skip") {
          disableActions();
          await client.skip(current.id);
        }
        await refreshSession(current.id);
      }
    } catch (error) {
      if (error instanceof ServiceError) showInlineError(error.detail);
      else showInlineError(String(error));
    }
  })();
});

app.addEventListener("input", (event) => {
  const target = event.target as HTMLInputElement | HTMLSelectElement;
  const current = route();
  if (current.page !== "memory") return;
  if (target.dataset.field === "kind-filter") memoryKindFilter = target.value;
  if (target.dataset.field === "memory-search") memoryQuery = target.value;
  void showMemory(current.id);
});

window.addEventListener("hashchange", () => void dispatch());
void dispatch();
