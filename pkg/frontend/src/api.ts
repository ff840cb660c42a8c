/** Thin typed client for the review service; the only network surface. */

import type {
  Annotation,
  ApiErrorBody,
  Decision,
  QaDetail,
  RoundStatus,
  Ticket,
} from './types.js';

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ReviewApiError extends Error {
  readonly code: string;
  readonly status: number;
  readonly fieldPath?: string;

  constructor(code: string, message: string, status: number, fieldPath?: string) {
    super(message);
    this.code = code;
    this.status = status;
    this.fieldPath = fieldPath;
  }

  /** Errors worth a retry banner rather than a hard failure. */
  get retryable(): boolean {
    return this.code === 'network' || this.status >= 500;
  }
}

export class ReviewApi {
  private readonly base: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.base = baseUrl.replace(/\/$/, '');
    const fallback = globalThis.fetch?.bind(globalThis) as FetchLike | undefined;
    const chosen = fetchFn ?? fallback;
    if (!chosen) throw new Error('no fetch implementation available');
    this.fetchFn = chosen;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.base}${path}`, init);
    } catch (err) {
      throw new ReviewApiError('network', String(err), 0);
    }
    if (!response.ok) {
      let body: ApiErrorBody = { code: 'http_error', message: `status ${response.status}` };
      try {
        body = (await response.json()) as ApiErrorBody;
      } catch {
        // non-JSON error body; keep the fallback
      }
      throw new ReviewApiError(body.code, body.message, response.status, body.field_path);
    }
    return (await response.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    });
  }

  roundStatus(round: number): Promise<RoundStatus> {
    return this.request<RoundStatus>(`/rounds/${round}/status`);
  }

  enqueue(round: number, qaIds: string[], policy?: Record<string, unknown>): Promise<{ tickets: Ticket[] }> {
    const body: Record<string, unknown> = { qa_ids: qaIds };
    if (policy) body.policy = policy;
    return this.post(`/rounds/${round}/enqueue`, body);
  }

  claim(reviewerId: string): Promise<Ticket> {
    return this.post<Ticket>('/tickets/claim', { reviewer_id: reviewerId });
  }

  submitVerdict(
    ticketId: string,
    reviewerId: string,
    decision: Decision,
    annotations: Annotation[],
  ): Promise<Ticket> {
    return this.post<Ticket>(`/tickets/${ticketId}/verdict`, {
      reviewer_id: reviewerId,
      decision,
      annotations,
    });
  }

  qaDetail(qaId: string): Promise<QaDetail> {
    return this.request<QaDetail>(`/qa/${qaId}`);
  }
}
