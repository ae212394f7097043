/** Payload types mirroring the fmea-panel REST API. */

export type ReviewStatus = "draft" | "approved" | "rejected" | "edited";

export interface FmeaRow {
  id: string;
  asset_class: string;
  component: string;
  failure_mode: string;
  cause: string;
  effect: string;
  recommended_action: string;
  severity: number;
  occurrence: number;
  detection: number;
  rpn: number;
  review_status: ReviewStatus;
  sme_comment: string | null;
}

export interface QuestionRecord {
  id: string;
  text: string;
  origin: "seed_bank" | "followup_mined" | "sme_requeue";
  round_created: number;
  status: string;
}

export interface AnswerRecord {
  id: string;
  question_id: string;
  persona_role: string;
  text: string;
  round: number;
  exemplar_ids: string[];
  state: string;
  repairs: number;
  duplicate_of?: string;
}

export interface SessionSummary {
  session_id: string;
  round: string;
  finalized: boolean;
  asset_class: string;
  oos: boolean;
  questions: { total: number; by_status: Record<string, number> };
  answers: { total: number; by_state: Record<string, number> };
  fmea_rows: { total: number; by_review_status: Record<string, number> };
  followups_total: number;
}

export interface RoundReport {
  round: number;
  questions_processed: number;
  answers_accepted: number;
  questions_filtered_useless: number;
  items_filtered_duplicate: number;
  followups_added: number;
  rows_emitted: number;
}

export interface EventRecord {
  seq: number;
  type: string;
  round: number | null;
  payload: Record<string, unknown>;
}

export interface TracePayload {
  question: QuestionRecord | null;
  routing: {
    question_id: string;
    chosen_role: string;
    scores: Array<[string, number]>;
    template_id: string;
    tie_break_applied: boolean;
  } | null;
  request: {
    purpose: string;
    request: { messages: Array<{ role: string; content: string }> };
  } | null;
  answer: AnswerRecord;
  gate: { state: string; duplicate_of?: string | null };
}

export type ReviewAction = "approve" | "reject" | "edit";

export interface RowEdits {
  component?: string;
  failure_mode?: string;
  cause?: string;
  effect?: string;
  recommended_action?: string;
  severity?: number;
  occurrence?: number;
  detection?: number;
}
