/** Reviewer session and annotation drafts, persisted across page reloads.
 *
 * Drafts live in localStorage until the verdict is submitted, so a reload
 * mid-annotation loses nothing. The active ticket snapshot is persisted
 * too: after a reload the UI restores the view and lets the service's own
 * responses arbitrate staleness (a conflicting submit surfaces a 409).
 */

import type { Annotation, Ticket } from './types.js';

export interface SessionState {
  reviewerId: string;
  activeTicket: Ticket | null;
  draft: Annotation[];
}

const STORAGE_KEY = 'review-ui:session';

export class SessionStore {
  private readonly storage: Storage;
  private state: SessionState;

  constructor(storage?: Storage) {
    this.storage = storage ?? globalThis.localStorage;
    this.state = this.load();
  }

  private load(): SessionState {
    const raw = this.storage.getItem(STORAGE_KEY);
    if (raw) {
      try {
        const parsed = JSON.parse(raw) as SessionState;
        return {
          reviewerId: parsed.reviewerId ?? '',
          activeTicket: parsed.activeTicket ?? null,
          draft: parsed.draft ?? [],
        };
      } catch {
        // corrupted storage: start clean
      }
    }
    return { reviewerId: '', activeTicket: null, draft: [] };
  }

  private persist(): void {
    this.storage.setItem(STORAGE_KEY, JSON.stringify(this.state));
  }

  get reviewerId(): string {
    return this.state.reviewerId;
  }

  set reviewerId(value: string) {
    this.state.reviewerId = value;
    this.persist();
  }

  get activeTicket(): Ticket | null {
    return this.state.activeTicket;
  }

  setActiveTicket(ticket: Ticket | null): void {
    this.state.activeTicket = ticket;
    if (ticket === null) this.state.draft = [];
    this.persist();
  }

  get draft(): Annotation[] {
    return this.state.draft;
  }

  setDraft(annotations: Annotation[]): void {
    this.state.draft = annotations;
    this.persist();
  }

  addDraftAnnotation(annotation: Annotation): void {
    this.setDraft([...this.state.draft, annotation]);
  }

  removeDraftAnnotation(index: number): void {
    this.setDraft(this.state.draft.filter((_, i) => i !== index));
  }

  /** Called after a successful verdict: the draft's life ends with it. */
  clearAfterSubmit(): void {
    this.state.activeTicket = null;
    this.state.draft = [];
    this.persist();
  }
}
