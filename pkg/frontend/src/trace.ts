/**
 * Assembles the four-step provenance view for one answer:
 * question selection -> persona assignment -> prompt structure -> answer,
 * plus the quality-gate outcome. Anything the event log lacks renders as
 * "not recorded" instead of breaking the view.
 */

import type { TracePayload } from "./model.js";

export const NOT_RECORDED = "not recorded";

export interface TraceStep {
  title: string;
  lines: string[];
}

export interface TraceView {
  steps: [TraceStep, TraceStep, TraceStep, TraceStep];
  gate: TraceStep;
  tieBreak: boolean;
}

const SECTION_HEADERS = ["BRIEF", "CONTEXT", "EXAMPLES", "SME FEEDBACK", "QUESTION"] as const;

export function promptStructure(userMessage: string): string[] {
  const lines: string[] = [];
  for (const name of SECTION_HEADERS) {
    const header = `=== ${name} ===`;
    if (!userMessage.includes(header)) {
      continue;
    }
    if (name === "EXAMPLES") {
      const count = userMessage.split("--- example").length - 1;
      lines.push(`EXAMPLES (${count} exemplar${count === 1 ? "" : "s"})`);
    } else {
      lines.push(name);
    }
  }
  return lines;
}

export function assembleTrace(payload: TracePayload): TraceView {
  const question: TraceStep = {
    title: "1. Question selection",
    lines: payload.question
      ? [payload.question.text, `origin: ${payload.question.origin}`, `status: ${payload.question.status}`]
      : [NOT_RECORDED],
  };

  let tieBreak = false;
  const routing: TraceStep = { title: "2. Persona assignment", lines: [NOT_RECORDED] };
  if (payload.routing) {
    tieBreak = payload.routing.tie_break_applied;
    routing.lines = [
      `chosen: ${payload.routing.chosen_role}${tieBreak ? " (tie-break by registration order)" : ""}`,
      `template: ${payload.routing.template_id}`,
      ...payload.routing.scores.map(([role, score]) => `${role}: ${score.toFixed(4)}`),
    ];
  }

  const prompt: TraceStep = { title: "3. Prompt structure", lines: [NOT_RECORDED] };
  if (payload.request) {
    const user = payload.request.request.messages.find((m) => m.role === "user");
    if (user) {
      prompt.lines = promptStructure(user.content);
    }
  }

  const answer: TraceStep = {
    title: "4. Response",
    lines: [
      `persona: ${payload.answer.persona_role}`,
      `round: ${payload.answer.round}`,
      payload.answer.repairs > 0 ? `repaired after ${payload.answer.repairs} parse failure(s)` : "parsed cleanly",
      payload.answer.text,
    ],
  };

  const gate: TraceStep = {
    title: "Quality gate",
    lines:
      payload.gate.state === "accepted"
        ? ["accepted"]
        : [`${payload.gate.state}${payload.gate.duplicate_of ? ` (duplicate of ${payload.gate.duplicate_of})` : ""}`],
  };

  return { steps: [question, routing, prompt, answer], gate, tieBreak };
}
