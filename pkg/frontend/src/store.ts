/**
 * View-model for the SME review UI.
 *
 * Holds everything the renderer needs and performs every server interaction;
 * view state derives only from API responses (no client-side invention of row
 * data). Review submissions validate client-side first, then apply an
 * optimistic badge update that rolls back if the server rejects the call.
 */

import { ApiRequestError, type PanelApi } from "./api.js";
import type {
  EventRecord,
  FmeaRow,
  ReviewAction,
  ReviewStatus,
  RowEdits,
  RoundReport,
  SessionSummary,
  TracePayload,
} from "./model.js";
import { assembleTrace, TraceView } from "./trace.js";

export type StatusFilter = ReviewStatus | "all";

export interface ComposerState {
  rowId: string;
  action: ReviewAction;
  comment: string;
  edits: RowEdits;
  error: string | null;
}

export interface AdvanceState {
  running: boolean;
  finalizedNotice: boolean;
  retryAvailable: boolean;
  lastReport: RoundReport | null;
  progress: EventRecord[];
}

export interface ReviewOutcome {
  ok: boolean;
  requeuedQuestionId?: string | null;
  error?: string;
}

const RATING_FIELDS: Array<keyof RowEdits> = ["severity", "occurrence", "detection"];
const TEXT_FIELDS: Array<keyof RowEdits> = [
  "component",
  "failure_mode",
  "cause",
  "effect",
  "recommended_action",
];

/** Client-side mirror of the server rules, so 422s are rare, not load-bearing. */
export function validateReview(action: ReviewAction, comment: string, edits: RowEdits): string | null {
  if (action === "reject" && comment.trim() === "") {
    return "A comment is required to reject a row.";
  }
  if (action === "edit") {
    const touched = Object.keys(edits).length;
    if (touched === 0) {
      return "Edit at least one field.";
    }
    for (const field of RATING_FIELDS) {
      const value = edits[field];
      if (value === undefined) continue;
      if (!Number.isInteger(value) || (value as number) < 1 || (value as number) > 10) {
        return `${String(field)} must be an integer between 1 and 10.`;
      }
    }
    for (const field of TEXT_FIELDS) {
      const value = edits[field];
      if (value === undefined) continue;
      if (typeof value !== "string" || value.trim() === "") {
        return `${String(field)} must not be empty.`;
      }
    }
  }
  return null;
}

export function sortRows(rows: FmeaRow[]): FmeaRow[] {
  // Mirrors the export order: (rpn desc, id asc).
  return [...rows].sort((a, b) => (b.rpn - a.rpn) || (a.id < b.id ? -1 : a.id > b.id ? 1 : 0));
}

export class ReviewStore {
  sessions: string[] = [];
  sessionId: string | null = null;
  summary: SessionSummary | null = null;
  rows: FmeaRow[] = [];
  filter: StatusFilter = "all";
  composer: ComposerState | null = null;
  advance: AdvanceState = {
    running: false,
    finalizedNotice: false,
    retryAvailable: false,
    lastReport: null,
    progress: [],
  };
  toast: string | null = null;
  trace: TraceView | null = null;
  private lastEventSeq = 0;
  private listeners: Array<() => void> = [];

  constructor(private readonly api: PanelApi) {}

  subscribe(listener: () => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  async loadSessions(): Promise<void> {
    this.sessions = await this.api.listSessions();
    this.notify();
  }

  async openSession(sessionId: string): Promise<void> {
    this.sessionId = sessionId;
    this.summary = await this.api.getSession(sessionId);
    this.rows = await this.api.getRows(sessionId);
    this.filter = "all";
    this.composer = null;
    this.trace = null;
    this.advance = {
      running: false,
      finalizedNotice: this.summary.finalized,
      retryAvailable: false,
      lastReport: null,
      progress: [],
    };
    this.lastEventSeq = 0;
    this.notify();
  }

  async refreshRows(): Promise<void> {
    if (!this.sessionId) return;
    this.rows = await this.api.getRows(this.sessionId);
    this.summary = await this.api.getSession(this.sessionId);
    this.notify();
  }

  visibleRows(): FmeaRow[] {
    const ordered = sortRows(this.rows);
    return this.filter === "all" ? ordered : ordered.filter((r) => r.review_status === this.filter);
  }

  setFilter(filter: StatusFilter): void {
    this.filter = filter;
    this.notify();
  }

  openComposer(rowId: string, action: ReviewAction): void {
    this.composer = { rowId, action, comment: "", edits: {}, error: null };
    this.notify();
  }

  /**
   * Validate client-side (invalid input sends no request), apply the badge
   * optimistically, then reconcile with the server row or roll back.
   */
  async submitReview(
    rowId: string,
    action: ReviewAction,
    comment = "",
    edits: RowEdits = {},
  ): Promise<ReviewOutcome> {
    const validation = validateReview(action, comment, edits);
    if (validation) {
      if (this.composer && this.composer.rowId === rowId) {
        this.composer = { ...this.composer, error: validation };
      } else {
        this.composer = { rowId, action, comment, edits, error: validation };
      }
      this.notify();
      return { ok: false, error: validation };
    }
    if (!this.sessionId) {
      return { ok: false, error: "no session open" };
    }

    const index = this.rows.findIndex((r) => r.id === rowId);
    const previous = index >= 0 ? this.rows[index] : null;
    const optimistic: Record<ReviewAction, ReviewStatus> = {
      approve: "approved",
      reject: "rejected",
      edit: "edited",
    };
    if (previous) {
      this.rows[index] = { ...previous, review_status: optimistic[action] };
      this.notify();
    }

    try {
      const result = await this.api.review(this.sessionId, rowId, action, comment || undefined,
        Object.keys(edits).length ? edits : undefined);
      if (index >= 0) {
        this.rows[index] = result.row;
      }
      this.composer = null;
      if (result.requeued_question_id) {
        this.toast = `Row ${rowId} rejected; question ${result.requeued_question_id} re-queued for the next round.`;
      } else {
        this.toast = `Row ${rowId} ${result.row.review_status}.`;
      }
      this.notify();
      return { ok: true, requeuedQuestionId: result.requeued_question_id };
    } catch (error) {
      if (previous && index >= 0) {
        this.rows[index] = previous;  // roll the optimistic badge back
      }
      const message =
        error instanceof ApiRequestError ? String(error.detail) : String(error);
      if (this.composer && this.composer.rowId === rowId) {
        this.composer = { ...this.composer, error: message };
      } else {
        this.composer = { rowId, action, comment, edits, error: message };
      }
      this.notify();
      return { ok: false, error: message };
    }
  }

  /** POST advance while streaming event progress into the live panel. */
  async advanceRound(): Promise<ReviewOutcome> {
    if (!this.sessionId || this.advance.running) {
      return { ok: false, error: "advance unavailable" };
    }
    this.advance = { ...this.advance, running: true, retryAvailable: false, progress: [] };
    this.notify();

    const sessionId = this.sessionId;
    let polling = true;
    const poll = (async () => {
      while (polling) {
        try {
          const batch = await this.api.getEvents(sessionId, this.lastEventSeq, 1);
          if (batch.events.length > 0) {
            this.lastEventSeq = batch.next_after;
            this.advance.progress.push(...batch.events);
            this.notify();
          }
        } catch {
          return; // progress is cosmetic; the advance call carries the outcome
        }
      }
    })();

    try {
      const result = await this.api.advance(sessionId);
      this.advance.lastReport = result.report;
      this.summary = result.state;
      this.advance.finalizedNotice = result.state.finalized;
      await this.refreshRows();
      return { ok: true };
    } catch (error) {
      if (error instanceof ApiRequestError && error.status === 409) {
        this.advance.finalizedNotice = true;
        return { ok: false, error: "session finalized" };
      }
      if (error instanceof ApiRequestError && error.status === 502) {
        this.advance.retryAvailable = true;
        return { ok: false, error: "backend unavailable; session checkpointed, retry advance" };
      }
      return { ok: false, error: String(error) };
    } finally {
      polling = false;
      await poll;
      this.advance.running = false;
      this.notify();
    }
  }

  async loadTrace(answerId: string): Promise<TraceView> {
    if (!this.sessionId) {
      throw new Error("no session open");
    }
    const payload: TracePayload = await this.api.getTrace(this.sessionId, answerId);
    this.trace = assembleTrace(payload);
    this.notify();
    return this.trace;
  }
}
