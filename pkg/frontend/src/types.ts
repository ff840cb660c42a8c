/** Wire types mirroring the review service REST API. */

export interface Annotation {
  field_path: string;
  comment: string;
}

export type TicketState =
  | 'pending'
  | 'in_review'
  | 'accepted'
  | 'rejected'
  | 'needs_revision';

export type Decision = 'accepted' | 'rejected' | 'needs_revision';

export interface Ticket {
  ticket_id: string;
  qa_id: string;
  round: number;
  epoch: number;
  slot: number;
  state: TicketState;
  reviewer_id: string | null;
  annotations: Annotation[];
  decided_at: string | null;
}

export interface RoundCounts {
  pending: number;
  in_review: number;
  accepted: number;
  rejected: number;
  needs_revision: number;
}

export interface RoundStatus {
  round: number;
  counts: RoundCounts;
  consensus_accepted: string[];
  enrolled: number;
  advance_eligible: boolean;
}

export interface MediaRef {
  kind: 'image' | 'video';
  uri: string;
  frame_count?: number;
  width?: number;
  height?: number;
}

export interface QaPayload {
  qa_id: string;
  record_id: string;
  question: string;
  answer: string;
  answer_form: string;
  choices?: Record<string, string>;
  correct_choice?: string;
  reasoning?: string;
  media: MediaRef[];
  gold_label?: string;
}

export interface QaDetail {
  qa: QaPayload;
  record: Record<string, unknown> | null;
  media_uris: string[];
}

/** One claimed ticket joined with its resolved sample. */
export interface TicketView {
  ticket: Ticket;
  detail: QaDetail;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  field_path?: string;
}
