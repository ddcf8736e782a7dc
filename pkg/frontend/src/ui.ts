/** Pure HTML renderers for the console — no DOM access, so every renderer is
 * unit-testable; main.ts owns the document wiring. */

import { PendingProposal, Snapshot, TraceRecord, describeRecord } from "./model.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function renderProposal(p: PendingProposal, role: string): string {
  const params = Object.entries(p.parameters)
    .map(([k, v]) => `<tr><td>${escapeHtml(k)}</td><td>${v}</td></tr>`)
    .join("");
  const boxes = Object.entries(p.constraints)
    .map(([k, b]) =>
      `<tr><td>${escapeHtml(k)}</td><td>[${b.lo}, ${b.hi}]</td></tr>`)
    .join("");
  const mine = p.awaiting === role;
  const actions = mine
    ? `<button data-action="accept" data-proposal="${escapeHtml(p.id)}">Accept</button>
       <button data-action="contest" data-proposal="${escapeHtml(p.id)}">Contest…</button>`
    : `<em>awaiting ${escapeHtml(p.awaiting)} (${escapeHtml(p.phase)})</em>`;
  return `<article class="proposal" data-id="${escapeHtml(p.id)}">
    <h3>${escapeHtml(p.id)} &mdash; round ${p.round} (${escapeHtml(p.phase)})</h3>
    <p>objective value: <strong>${p.objective_value}</strong></p>
    <table><caption>proposed parameters</caption>${params}</table>
    <table><caption>constraint boxes</caption>${boxes}</table>
    <footer>${actions}</footer>
  </article>`;
}

export function renderPendingList(proposals: PendingProposal[], role: string): string {
  if (proposals.length === 0) {
    return `<p class="empty">no proposals waiting</p>`;
  }
  return proposals.map((p) => renderProposal(p, role)).join("\n");
}

export function renderStatus(snap: Snapshot): string {
  const goals = Object.entries(snap.goal_status)
    .map(([g, s]) =>
      `<li class="goal-${escapeHtml(s)}">${escapeHtml(g)}: ${escapeHtml(s)}</li>`)
    .join("");
  const state = snap.done ? `finished (${snap.root_status})` : snap.root_status;
  return `<p>tick ${snap.tick}, round ${snap.rounds}, ${escapeHtml(state)}</p>
    <ul class="goals">${goals}</ul>`;
}

export function renderFeedLine(rec: TraceRecord): string {
  const text = describeRecord(rec);
  if (!text) return "";
  return `<li data-seq="${rec.seq}"><span class="tick">t${rec.tick}</span> ${escapeHtml(text)}</li>`;
}

export function renderChatLine(who: string, text: string): string {
  return `<li class="chat-${escapeHtml(who)}"><strong>${escapeHtml(who)}:</strong> ${escapeHtml(text)}</li>`;
}
