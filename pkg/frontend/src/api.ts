/**
 * REST client for the fmea-panel service.
 *
 * Every request the UI makes goes through this module, so the documented
 * endpoint set below is the complete write surface (verified by the request
 * capture test).
 */

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
} from "./model.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiRequestError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: unknown,
  ) {
    super(`HTTP ${status}: ${typeof detail === "string" ? detail : JSON.stringify(detail)}`);
  }
}

interface BankPage<T> {
  kind: string;
  total: number;
  offset: number;
  records: T[];
}

/** The service surface the view-model depends on (fakeable in tests). */
export interface PanelApi {
  listSessions(): Promise<string[]>;
  getSession(sessionId: string): Promise<SessionSummary>;
  advance(sessionId: string): Promise<{ report: RoundReport; state: SessionSummary }>;
  getRows(sessionId: string): Promise<FmeaRow[]>;
  getQuestions(sessionId: string): Promise<QuestionRecord[]>;
  getAnswers(sessionId: string): Promise<AnswerRecord[]>;
  getEvents(
    sessionId: string,
    after: number,
    waitSeconds?: number,
  ): Promise<{ events: EventRecord[]; next_after: number }>;
  getTrace(sessionId: string, answerId: string): Promise<TracePayload>;
  review(
    sessionId: string,
    rowId: string,
    action: ReviewAction,
    comment?: string,
    edits?: RowEdits,
  ): Promise<{ row: FmeaRow; requeued_question_id: string | null }>;
}

export class ApiClient implements PanelApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    const body = await response.text();
    let parsed: unknown = body;
    try {
      parsed = body ? JSON.parse(body) : null;
    } catch {
      // non-JSON payloads (csv export) pass through as text
    }
    if (!response.ok) {
      const detail =
        parsed && typeof parsed === "object" && "detail" in (parsed as Record<string, unknown>)
          ? (parsed as Record<string, unknown>)["detail"]
          : parsed;
      throw new ApiRequestError(response.status, detail);
    }
    return parsed as T;
  }

  async listSessions(): Promise<string[]> {
    const data = await this.request<{ sessions: string[] }>("/sessions");
    return data.sessions;
  }

  createSession(config: Record<string, unknown>): Promise<{ session_id: string; state: SessionSummary }> {
    return this.request("/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(config),
    });
  }

  getSession(sessionId: string): Promise<SessionSummary> {
    return this.request(`/sessions/${sessionId}`);
  }

  advance(sessionId: string): Promise<{ report: RoundReport; state: SessionSummary }> {
    return this.request(`/sessions/${sessionId}/advance`, { method: "POST" });
  }

  async getRows(sessionId: string): Promise<FmeaRow[]> {
    const page = await this.request<BankPage<FmeaRow>>(
      `/sessions/${sessionId}/banks?kind=fmea&limit=1000`,
    );
    return page.records;
  }

  async getQuestions(sessionId: string): Promise<QuestionRecord[]> {
    const page = await this.request<BankPage<QuestionRecord>>(
      `/sessions/${sessionId}/banks?kind=questions&limit=1000`,
    );
    return page.records;
  }

  async getAnswers(sessionId: string): Promise<AnswerRecord[]> {
    const page = await this.request<BankPage<AnswerRecord>>(
      `/sessions/${sessionId}/banks?kind=answers&limit=1000`,
    );
    return page.records;
  }

  getEvents(
    sessionId: string,
    after: number,
    waitSeconds = 0,
  ): Promise<{ events: EventRecord[]; next_after: number }> {
    return this.request(`/sessions/${sessionId}/events?after=${after}&wait=${waitSeconds}`);
  }

  getTrace(sessionId: string, answerId: string): Promise<TracePayload> {
    return this.request(`/sessions/${sessionId}/answers/${answerId}/trace`);
  }

  review(
    sessionId: string,
    rowId: string,
    action: ReviewAction,
    comment?: string,
    edits?: RowEdits,
  ): Promise<{ row: FmeaRow; requeued_question_id: string | null }> {
    return this.request(`/sessions/${sessionId}/rows/${rowId}/review`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ action, comment, edits }),
    });
  }

  exportUrl(sessionId: string, format: "csv" | "json"): string {
    return `${this.baseUrl}/sessions/${sessionId}/fmea?format=${format}`;
  }
}
