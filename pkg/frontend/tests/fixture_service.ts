/** In-memory review service implementing the REST wire contract, used as a
 * fetch stub so the UI tests run end-to-end without a live backend. */

import type {
  Annotation,
  Decision,
  QaDetail,
  RoundStatus,
  Ticket,
  TicketState,
} from '../src/types.js';

interface Policy {
  reviewers_per_ticket: number;
  consensus: 'unanimous' | 'majority';
  advance_threshold: number;
}

const DEFAULT_POLICY: Policy = {
  reviewers_per_ticket: 1,
  consensus: 'unanimous',
  advance_threshold: 0.9,
};

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

function errorResponse(code: string, message: string, status: number): Response {
  return jsonResponse({ code, message }, status);
}

export class FixtureReviewService {
  readonly tickets = new Map<string, Ticket>();
  private readonly policies = new Map<number, Policy>();
  private readonly qa = new Map<string, QaDetail>();
  private seq = 0;
  requestLog: string[] = [];

  addQa(detail: QaDetail): void {
    this.qa.set(detail.qa.qa_id, detail);
  }

  enqueue(round: number, qaIds: string[], policy?: Partial<Policy>): Ticket[] {
    const effective = { ...DEFAULT_POLICY, ...(this.policies.get(round) ?? policy ?? {}) };
    this.policies.set(round, effective);
    const created: Ticket[] = [];
    for (const qaId of qaIds) {
      for (let slot = 0; slot < effective.reviewers_per_ticket; slot += 1) {
        const ticketId = `${qaId}:r${round}:e0:s${slot}`;
        if (!this.tickets.has(ticketId)) {
          this.tickets.set(ticketId, {
            ticket_id: ticketId,
            qa_id: qaId,
            round,
            epoch: 0,
            slot,
            state: 'pending',
            reviewer_id: null,
            annotations: [],
            decided_at: null,
          });
        }
        created.push(this.tickets.get(ticketId)!);
      }
    }
    return created;
  }

  claim(reviewerId: string): Ticket | null {
    const taken = new Set(
      [...this.tickets.values()]
        .filter((t) => t.reviewer_id === reviewerId)
        .map((t) => `${t.qa_id}:${t.round}`),
    );
    const candidates = [...this.tickets.values()]
      .filter((t) => t.state === 'pending' && !taken.has(`${t.qa_id}:${t.round}`));
    if (candidates.length === 0) return null;
    const ticket = candidates[0];
    ticket.state = 'in_review';
    ticket.reviewer_id = reviewerId;
    return ticket;
  }

  verdict(
    ticketId: string,
    reviewerId: string,
    decision: Decision,
    annotations: Annotation[],
  ): { ticket?: Ticket; error?: { code: string; status: number } } {
    const ticket = this.tickets.get(ticketId);
    if (!ticket) return { error: { code: 'unknown_ticket', status: 404 } };
    if (ticket.state !== 'in_review') {
      return { error: { code: 'invalid_transition', status: 409 } };
    }
    if (ticket.reviewer_id !== reviewerId) {
      return { error: { code: 'not_assignee', status: 409 } };
    }
    ticket.state = decision;
    ticket.annotations = annotations;
    ticket.decided_at = '1970-01-01T00:00:00Z';
    return { ticket };
  }

  status(round: number): RoundStatus {
    const policy = this.policies.get(round) ?? DEFAULT_POLICY;
    const counts = {
      pending: 0, in_review: 0, accepted: 0, rejected: 0, needs_revision: 0,
    };
    const byQa = new Map<string, Ticket[]>();
    for (const ticket of this.tickets.values()) {
      if (ticket.round !== round) continue;
      counts[ticket.state as TicketState] += 1;
      const list = byQa.get(ticket.qa_id) ?? [];
      list.push(ticket);
      byQa.set(ticket.qa_id, list);
    }
    const consensus: string[] = [];
    for (const [qaId, tickets] of byQa) {
      const votes = tickets.filter((t) => t.state === 'accepted').length;
      const ok = policy.consensus === 'unanimous'
        ? votes === policy.reviewers_per_ticket
        : votes > policy.reviewers_per_ticket / 2;
      if (ok) consensus.push(qaId);
    }
    consensus.sort();
    return {
      round,
      counts,
      consensus_accepted: consensus,
      enrolled: byQa.size,
      advance_eligible: byQa.size > 0 && consensus.length / byQa.size >= policy.advance_threshold,
    };
  }

  /** fetch-compatible dispatcher over the REST routes. */
  asFetch() {
    return async (input: string, init?: RequestInit): Promise<Response> => {
      const url = new URL(input, 'http://fixture');
      const method = init?.method ?? 'GET';
      const body = init?.body ? JSON.parse(String(init.body)) : {};
      this.requestLog.push(`${method} ${url.pathname}`);

      let match = url.pathname.match(/^\/rounds\/(\d+)\/status$/);
      if (match && method === 'GET') {
        const round = Number(match[1]);
        if (round < 1 || round > 3) {
          return errorResponse('invalid_round', `round ${round}`, 400);
        }
        return jsonResponse(this.status(round));
      }
      match = url.pathname.match(/^\/rounds\/(\d+)\/enqueue$/);
      if (match && method === 'POST') {
        const tickets = this.enqueue(Number(match[1]), body.qa_ids, body.policy);
        return jsonResponse({ tickets });
      }
      if (url.pathname === '/tickets/claim' && method === 'POST') {
        const ticket = this.claim(body.reviewer_id);
        if (!ticket) return errorResponse('queue_empty', 'no claimable tickets', 404);
        return jsonResponse(ticket);
      }
      match = url.pathname.match(/^\/tickets\/(.+)\/verdict$/);
      if (match && method === 'POST') {
        const result = this.verdict(decodeURIComponent(match[1]), body.reviewer_id,
          body.decision, body.annotations ?? []);
        if (result.error) {
          return errorResponse(result.error.code, result.error.code, result.error.status);
        }
        return jsonResponse(result.ticket);
      }
      match = url.pathname.match(/^\/qa\/(.+)$/);
      if (match && method === 'GET') {
        const detail = this.qa.get(decodeURIComponent(match[1]));
        if (!detail) return errorResponse('unknown_qa', match[1], 404);
        return jsonResponse(detail);
      }
      return errorResponse('not_found', url.pathname, 404);
    };
  }
}

export function sampleQaDetail(qaId: string): QaDetail {
  return {
    qa: {
      qa_id: qaId,
      record_id: `rec-${qaId}`,
      question: 'Which organ is shown in this ultrasound image?',
      answer: 'The organ shown in this ultrasound image is the liver.',
      answer_form: 'free_text',
      media: [{ kind: 'image', uri: `media/${qaId}.png` }],
      gold_label: 'liver',
    },
    record: {
      id: `rec-${qaId}`,
      task: 'anatomical_recognition',
      anatomy: 'liver',
      source: { dataset_name: 'fixture', origin_id: `${qaId}.png`, license: 'CC0' },
    },
    media_uris: [`media/${qaId}.png`],
  };
}
