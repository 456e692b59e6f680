// Thin typed client over the documented session API. All console mutations
// go through here; the console holds no authoritative state.

import type {
  Decision,
  FlaggedPoint,
  RefineRequest,
  Report,
  SessionDetail,
  SessionSummary,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ConflictError extends ApiError {
  constructor(message: string) {
    super(409, message);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, init);
    const body = await response.json().catch(() => ({}));
    if (!response.ok) {
      const message = (body as { error?: string }).error ?? response.statusText;
      if (response.status === 409) throw new ConflictError(message);
      throw new ApiError(response.status, message);
    }
    return body as T;
  }

  listSessions(): Promise<{ sessions: SessionSummary[] }> {
    return this.request("/sessions");
  }

  getSession(sessionId: string): Promise<SessionDetail> {
    return this.request(`/sessions/${encodeURIComponent(sessionId)}`);
  }

  listFlagged(sessionId: string): Promise<{ flagged: FlaggedPoint[] }> {
    return this.request(`/sessions/${encodeURIComponent(sessionId)}/flagged`);
  }

  postDecision(
    sessionId: string,
    body: {
      point_id: string;
      action: "approve" | "correct" | "reject";
      values?: Record<string, number | null>;
      inspector?: string;
      note?: string;
    },
  ): Promise<{ decision: Decision }> {
    return this.request(`/sessions/${encodeURIComponent(sessionId)}/decisions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  refine(sessionId: string, body: RefineRequest): Promise<{ index: number; status: string }> {
    return this.request(`/sessions/${encodeURIComponent(sessionId)}/refine`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  getReport(sessionId: string, iteration: number): Promise<Report> {
    return this.request(
      `/sessions/${encodeURIComponent(sessionId)}/report/${iteration}`,
    );
  }

  figureUrl(sessionId: string, iteration: number, name: string): string {
    return (
      `${this.baseUrl}/sessions/${encodeURIComponent(sessionId)}` +
      `/report/${iteration}/figures/${encodeURIComponent(name)}.svg`
    );
  }

  async fetchFigure(sessionId: string, iteration: number, name: string): Promise<string> {
    const response = await this.fetchImpl(this.figureUrl(sessionId, iteration, name));
    if (!response.ok) throw new ApiError(response.status, `no figure ${name}`);
    return response.text();
  }

  getExcerpt(
    sessionId: string,
    docId: string,
    pointId: string,
  ): Promise<{ doc_id: string; doc_title: string; excerpt: string }> {
    return this.request(
      `/sessions/${encodeURIComponent(sessionId)}/documents/` +
        `${encodeURIComponent(docId)}/excerpt?point=${encodeURIComponent(pointId)}`,
    );
  }
}
