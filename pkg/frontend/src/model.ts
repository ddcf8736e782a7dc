/** Document shapes of the plantmas/v1 HTTP surface, plus client-side
 * validation that mirrors the server's decision rules so obviously invalid
 * input never leaves the browser. */

export const SCHEMA = "plantmas/v1";

export type Actor = "engineer" | "operator";
export type Verdict = "accept" | "contest";

export interface ConstraintBox {
  lo: number;
  hi: number;
}

export interface PendingProposal {
  id: string;
  model_ref: string;
  parameters: Record<string, number>;
  objective_value: number;
  round: number;
  constraints: Record<string, ConstraintBox>;
  awaiting: string;
  phase: string;
}

export interface Snapshot {
  schema: string;
  tick: number;
  root_status: string;
  done: boolean;
  rounds: number;
  pending: PendingProposal[];
  last_seq: number;
  goal_status: Record<string, string>;
}

export interface Decision {
  proposal_id: string;
  actor: Actor;
  verdict: Verdict;
  adjustments: Record<string, number>;
  note: string;
}

export interface TraceRecord {
  tick: number;
  seq: number;
  clock: number;
  source: string;
  kind: string;
  payload: Record<string, unknown>;
}

/** Same rules the server enforces; returns an error message or null. */
export function validateDecision(d: Decision): string | null {
  if (d.actor !== "engineer" && d.actor !== "operator") {
    return `unknown actor ${JSON.stringify(d.actor)}`;
  }
  if (d.verdict !== "accept" && d.verdict !== "contest") {
    return `unknown verdict ${JSON.stringify(d.verdict)}`;
  }
  if (!d.proposal_id) {
    return "a decision needs a proposal id";
  }
  for (const [name, value] of Object.entries(d.adjustments)) {
    if (!Number.isFinite(value)) {
      return `adjustment ${name} must be a finite number`;
    }
  }
  if (d.verdict === "contest"
      && Object.keys(d.adjustments).length === 0
      && d.note.trim() === "") {
    return "a contest needs at least one adjustment or a note";
  }
  return null;
}

export function parseRecord(data: string): TraceRecord {
  let doc: unknown;
  try {
    doc = JSON.parse(data);
  } catch {
    throw new Error(`malformed trace record: ${data.slice(0, 80)}`);
  }
  const rec = doc as Partial<TraceRecord>;
  if (typeof rec !== "object" || rec === null
      || typeof rec.seq !== "number"
      || typeof rec.tick !== "number"
      || typeof rec.source !== "string"
      || typeof rec.kind !== "string"
      || typeof rec.payload !== "object" || rec.payload === null) {
    throw new Error("trace record is missing required fields");
  }
  return rec as TraceRecord;
}

/** One human-readable line per trace record for the live feed. */
export function describeRecord(rec: TraceRecord): string {
  const p = rec.payload as Record<string, any>;
  switch (rec.kind) {
    case "decision":
      return `${p.actor} ${p.verdict}s ${p.proposal_id} (${p.phase})`
        + (Object.keys(p.adjustments ?? {}).length
           ? ` with ${JSON.stringify(p.adjustments)}` : "");
    case "goal-status":
      return `goal ${p.goal} is now ${p.status}`;
    case "artifact-call":
      return `calling ${p.entity}.${p.operation}`;
    case "artifact-result":
      return `${p.entity} returned ${p.status}`;
    case "message":
      if (p.reminder) return `reminder sent to ${p.to} about ${p.reminder}`;
      if (p.goal) return `${p.from} asks ${p.to} to achieve ${p.goal}`;
      return `${p.from} → ${p.to} (${p.performative})`;
    case "event":
      if (p.revision) {
        return `proposal ${p.revision} sent back for revision`
          + (Object.keys(p.adjustments ?? {}).length
             ? `, constraints pinned: ${JSON.stringify(p.adjustments)}` : "");
      }
      if (p.workflow_failed) return `workflow failed: ${p.workflow_failed}`;
      if (p.commit) return `role ${p.commit.role} committed to ${p.commit.agent}`;
      return "";
    default:
      return "";
  }
}

/** The chat grammar accepted by POST /api/chat, mirrored for local echo. */
export function formatChatDecision(
    verdict: Verdict, proposalId: string,
    adjustments: Record<string, number> = {}, note = ""): string {
  if (verdict === "accept") return `accept ${proposalId}`;
  const pairs = Object.entries(adjustments)
    .map(([k, v]) => `${k}=${v}`).join(" ");
  const notePart = note ? ` note="${note}"` : "";
  return `contest ${proposalId}${pairs ? " " + pairs : ""}${notePart}`;
}
