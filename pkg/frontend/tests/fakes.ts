/** In-memory PanelApi fake recording calls, for store unit tests. */

import { ApiRequestError, type PanelApi } from "../src/api.js";
import type {
  AnswerRecord,
  EventRecord,
  FmeaRow,
  QuestionRecord,
  ReviewAction,
  RowEdits,
  RoundReport,
  SessionSummary,
  TracePayload,
} from "../src/model.js";

export function makeRow(overrides: Partial<FmeaRow> = {}): FmeaRow {
  return {
    id: "r-001",
    asset_class: "Pump - Vertical Close-Coupled",
    component: "seal",
    failure_mode: "seal face leakage",
    cause: "dry running",
    effect: "fluid release",
    recommended_action: "fit dual seal",
    severity: 7,
    occurrence: 3,
    detection: 5,
    rpn: 105,
    review_status: "draft",
    sme_comment: null,
    ...overrides,
  };
}

export function makeSummary(overrides: Partial<SessionSummary> = {}): SessionSummary {
  return {
    session_id: "s-1",
    round: "R2_in_context",
    finalized: false,
    asset_class: "Pump - Vertical Close-Coupled",
    oos: false,
    questions: { total: 3, by_status: { answered: 3 } },
    answers: { total: 3, by_state: { accepted: 3 } },
    fmea_rows: { total: 1, by_review_status: { draft: 1 } },
    followups_total: 0,
    ...overrides,
  };
}

export class FakeApi implements PanelApi {
  calls: Array<{ method: string; args: unknown[] }> = [];
  rows: FmeaRow[] = [makeRow()];
  summary: SessionSummary = makeSummary();
  reviewError: ApiRequestError | null = null;
  requeueId: string | null = null;
  trace: TracePayload | null = null;

  private record(method: string, ...args: unknown[]) {
    this.calls.push({ method, args });
  }

  callCount(method: string): number {
    return this.calls.filter((c) => c.method === method).length;
  }

  async listSessions(): Promise<string[]> {
    this.record("listSessions");
    return ["s-1"];
  }

  async getSession(sessionId: string): Promise<SessionSummary> {
    this.record("getSession", sessionId);
    return this.summary;
  }

  async advance(sessionId: string): Promise<{ report: RoundReport; state: SessionSummary }> {
    this.record("advance", sessionId);
    return {
      report: {
        round: 2,
        questions_processed: 3,
        answers_accepted: 3,
        questions_filtered_useless: 0,
        items_filtered_duplicate: 0,
        followups_added: 0,
        rows_emitted: 1,
      },
      state: this.summary,
    };
  }

  async getRows(sessionId: string): Promise<FmeaRow[]> {
    this.record("getRows", sessionId);
    return this.rows.map((r) => ({ ...r }));
  }

  async getQuestions(sessionId: string): Promise<QuestionRecord[]> {
    this.record("getQuestions", sessionId);
    return [];
  }

  async getAnswers(sessionId: string): Promise<AnswerRecord[]> {
    this.record("getAnswers", sessionId);
    return [];
  }

  async getEvents(
    sessionId: string,
    after: number,
  ): Promise<{ events: EventRecord[]; next_after: number }> {
    this.record("getEvents", sessionId, after);
    return { events: [], next_after: after };
  }

  async getTrace(sessionId: string, answerId: string): Promise<TracePayload> {
    this.record("getTrace", sessionId, answerId);
    if (!this.trace) throw new ApiRequestError(404, "unknown answer");
    return this.trace;
  }

  async review(
    sessionId: string,
    rowId: string,
    action: ReviewAction,
    comment?: string,
    edits?: RowEdits,
  ): Promise<{ row: FmeaRow; requeued_question_id: string | null }> {
    this.record("review", sessionId, rowId, action, comment, edits);
    if (this.reviewError) throw this.reviewError;
    const target = this.rows.find((r) => r.id === rowId);
    if (!target) throw new ApiRequestError(404, `unknown FMEA row ${rowId}`);
    const statusByAction = { approve: "approved", reject: "rejected", edit: "edited" } as const;
    target.review_status = statusByAction[action];
    if (comment) target.sme_comment = comment;
    if (edits) {
      Object.assign(target, edits);
      target.rpn = target.severity * target.occurrence * target.detection;
    }
    return { row: { ...target }, requeued_question_id: action === "reject" ? this.requeueId : null };
  }
}
