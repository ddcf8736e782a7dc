import { describe, expect, it } from "vitest";

import {
  Decision,
  describeRecord,
  formatChatDecision,
  parseRecord,
  validateDecision,
} from "../src/model.js";

const base: Decision = {
  proposal_id: "P-1",
  actor: "engineer",
  verdict: "accept",
  adjustments: {},
  note: "",
};

describe("validateDecision", () => {
  it("accepts a plain accept", () => {
    expect(validateDecision(base)).toBeNull();
  });

  it("rejects unknown actors and verdicts", () => {
    expect(validateDecision({ ...base, actor: "janitor" as any })).toMatch(/actor/);
    expect(validateDecision({ ...base, verdict: "maybe" as any })).toMatch(/verdict/);
  });

  it("requires a proposal id", () => {
    expect(validateDecision({ ...base, proposal_id: "" })).toMatch(/proposal id/);
  });

  it("mirrors the server rule: contest needs adjustment or note", () => {
    expect(validateDecision({ ...base, verdict: "contest" })).toMatch(/contest/);
    expect(validateDecision({
      ...base, verdict: "contest", adjustments: { injection_rate: 120 },
    })).toBeNull();
    expect(validateDecision({
      ...base, verdict: "contest", note: "rate too high",
    })).toBeNull();
    expect(validateDecision({ ...base, verdict: "contest", note: "   " }))
      .toMatch(/contest/);
  });

  it("rejects non-finite adjustments", () => {
    expect(validateDecision({
      ...base, verdict: "contest", adjustments: { x: NaN },
    })).toMatch(/finite/);
  });
});

describe("parseRecord", () => {
  it("parses a well-formed record", () => {
    const rec = parseRecord(JSON.stringify({
      tick: 3, seq: 17, clock: 3.0, source: "workflow",
      kind: "decision", payload: { actor: "operator" },
    }));
    expect(rec.seq).toBe(17);
    expect(rec.payload.actor).toBe("operator");
  });

  it("throws on garbage and on missing fields", () => {
    expect(() => parseRecord("not json")).toThrow(/malformed/);
    expect(() => parseRecord('{"seq": 1}')).toThrow(/required fields/);
  });
});

describe("describeRecord", () => {
  const rec = (kind: string, payload: object) =>
    ({ tick: 0, seq: 0, clock: 0, source: "workflow", kind, payload } as any);

  it("narrates decisions with adjustments", () => {
    const text = describeRecord(rec("decision", {
      actor: "operator", verdict: "contest", proposal_id: "P-1",
      phase: "initial", adjustments: { injection_rate: 120 },
    }));
    expect(text).toContain("operator contests P-1");
    expect(text).toContain("injection_rate");
  });

  it("narrates goal transitions and revisions", () => {
    expect(describeRecord(rec("goal-status",
      { goal: "stage_v_report_agency", status: "achieved" })))
      .toBe("goal stage_v_report_agency is now achieved");
    expect(describeRecord(rec("event",
      { revision: "P-1", adjustments: { x: 1 }, next_round: 2 })))
      .toContain("sent back for revision");
  });

  it("returns empty for record kinds the feed does not show", () => {
    expect(describeRecord(rec("intention-step", { plan: "x" }))).toBe("");
  });
});

describe("formatChatDecision", () => {
  it("round-trips through the server's chat grammar", () => {
    expect(formatChatDecision("accept", "P-1")).toBe("accept P-1");
    expect(formatChatDecision("contest", "P-2", { injection_rate: 120 }, "too fast"))
      .toBe('contest P-2 injection_rate=120 note="too fast"');
    expect(formatChatDecision("contest", "P-2", {}, "no"))
      .toBe('contest P-2 note="no"');
  });
});
