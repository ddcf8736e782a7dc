/** Browser entry point: wires the API client and event stream to the page.
 *
 * Query parameters: ?role=engineer|operator (default operator) and
 * ?server=http://host:port (default same origin). */

import { ApiClient, EventStream } from "./api.js";
import { formatChatDecision } from "./model.js";
import {
  renderChatLine,
  renderFeedLine,
  renderPendingList,
  renderStatus,
} from "./ui.js";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

export function bootstrap(): void {
  const params = new URLSearchParams(window.location.search);
  const role = params.get("role") === "engineer" ? "engineer" : "operator";
  const base = params.get("server") ?? "";
  const api = new ApiClient(base);

  const statusEl = byId("status");
  const pendingEl = byId("pending");
  const feedEl = byId<HTMLUListElement>("feed");
  const chatLog = byId<HTMLUListElement>("chat-log");
  const chatInput = byId<HTMLInputElement>("chat-input");
  byId("role").textContent = role;

  function say(who: string, text: string): void {
    chatLog.insertAdjacentHTML("beforeend", renderChatLine(who, text));
    chatLog.scrollTop = chatLog.scrollHeight;
  }

  async function refresh(): Promise<void> {
    const snap = await api.getSnapshot();
    statusEl.innerHTML = renderStatus(snap);
    pendingEl.innerHTML = renderPendingList(snap.pending, role);
  }

  pendingEl.addEventListener("click", async (ev) => {
    const btn = (ev.target as HTMLElement).closest("button[data-action]");
    if (!(btn instanceof HTMLButtonElement)) return;
    const proposalId = btn.dataset.proposal ?? "";
    let command: string;
    if (btn.dataset.action === "accept") {
      command = formatChatDecision("accept", proposalId);
    } else {
      const raw = window.prompt(
        'adjustments and/or note, e.g.  injection_rate=120 note="too fast"', "");
      if (raw === null) return;
      command = `contest ${proposalId} ${raw}`.trim();
    }
    say(role, command);
    try {
      const reply = await api.chat(role, command);
      say("console", reply.kind === "help" ? reply.message : `${reply.kind} queued`);
    } catch (err) {
      say("console", `rejected: ${(err as Error).message}`);
    }
    await refresh();
  });

  chatInput.addEventListener("keydown", async (ev) => {
    if (ev.key !== "Enter" || !chatInput.value.trim()) return;
    const command = chatInput.value.trim();
    chatInput.value = "";
    say(role, command);
    try {
      const reply = await api.chat(role, command);
      if (reply.kind === "status") {
        say("console", `round ${reply.rounds}, ${reply.root_status}, `
          + `${reply.pending.length} pending`);
      } else if (reply.kind === "help") {
        say("console", reply.message);
      } else {
        say("console", `${reply.kind} queued`);
      }
    } catch (err) {
      say("console", `rejected: ${(err as Error).message}`);
    }
    await refresh();
  });

  const stream = new EventStream(base, {
    onRecord: (rec) => {
      const line = renderFeedLine(rec);
      if (line) {
        feedEl.insertAdjacentHTML("beforeend", line);
        feedEl.scrollTop = feedEl.scrollHeight;
      }
      if (rec.kind === "decision" || rec.kind === "goal-status") {
        void refresh();
      }
    },
    onEnd: () => {
      say("console", "workflow finished");
      void refresh();
    },
    onReconnect: (since) => say("console", `stream dropped, resuming after #${since}`),
  });

  void refresh();
  stream.start();
  window.setInterval(() => void refresh(), 2000);
}

bootstrap();
