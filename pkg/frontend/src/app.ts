/** The application controller: wires API responses, session state, and the
 * render layer into the claim -> annotate -> verdict -> next loop. */

import { ReviewApi, ReviewApiError } from './api.js';
import { bindShortcuts } from './keyboard.js';
import { SessionStore } from './session.js';
import type { Annotation, Decision, RoundStatus, Ticket, TicketView } from './types.js';
import { Banner, renderBanner, renderDashboard, renderEmptyQueue, renderTicketView } from './ui.js';

export interface AppOptions {
  pollIntervalMs?: number;
  rounds?: number[];
}

export class ReviewApp {
  readonly api: ReviewApi;
  readonly session: SessionStore;
  private readonly root: HTMLElement;
  private readonly rounds: number[];
  private readonly pollIntervalMs: number;

  private view: TicketView | null = null;
  private dashboard: RoundStatus[] = [];
  private banner: Banner | null = null;
  private queueEmpty = false;
  private unbindKeys: (() => void) | null = null;
  private pollTimer: ReturnType<typeof setInterval> | null = null;
  private lastAction: (() => Promise<void>) | null = null;

  constructor(root: HTMLElement, api: ReviewApi, session: SessionStore,
              options: AppOptions = {}) {
    this.root = root;
    this.api = api;
    this.session = session;
    this.rounds = options.rounds ?? [1, 2, 3];
    this.pollIntervalMs = options.pollIntervalMs ?? 5000;
  }

  /** Restore any persisted ticket/draft, draw, and start polling. */
  async start(): Promise<void> {
    this.unbindKeys = bindShortcuts(this.root.ownerDocument, {
      claim: () => void this.claimNext(),
      accept: () => void this.submitVerdict('accepted'),
      reject: () => void this.submitVerdict('rejected'),
      needsRevision: () => void this.submitVerdict('needs_revision'),
    });
    const restored = this.session.activeTicket;
    if (restored) {
      try {
        this.view = { ticket: restored, detail: await this.api.qaDetail(restored.qa_id) };
      } catch {
        this.view = null;
      }
    }
    await this.refreshDashboard();
    this.render();
    if (this.pollIntervalMs > 0) {
      this.pollTimer = setInterval(() => void this.refreshDashboard(), this.pollIntervalMs);
    }
  }

  stop(): void {
    this.unbindKeys?.();
    if (this.pollTimer) clearInterval(this.pollTimer);
  }

  private fail(error: unknown, retry: (() => Promise<void>) | null): void {
    if (error instanceof ReviewApiError && error.retryable) {
      this.banner = { kind: 'error', text: `Service unreachable: ${error.message}`,
                      retryLabel: retry ? 'Retry' : undefined };
      this.lastAction = retry;
    } else if (error instanceof ReviewApiError) {
      this.banner = { kind: 'error', text: `${error.code}: ${error.message}` };
      this.lastAction = null;
    } else {
      this.banner = { kind: 'error', text: String(error) };
      this.lastAction = null;
    }
  }

  async claimNext(): Promise<void> {
    if (!this.session.reviewerId) {
      this.banner = { kind: 'error', text: 'Set a reviewer id before claiming.' };
      this.render();
      return;
    }
    this.banner = null;
    let ticket: Ticket;
    try {
      ticket = await this.api.claim(this.session.reviewerId);
    } catch (error) {
      if (error instanceof ReviewApiError && error.code === 'queue_empty') {
        this.queueEmpty = true;
        this.view = null;
        this.session.setActiveTicket(null);
      } else {
        this.fail(error, () => this.claimNext());
      }
      this.render();
      return;
    }
    try {
      const detail = await this.api.qaDetail(ticket.qa_id);
      this.view = { ticket, detail };
      this.queueEmpty = false;
      this.session.setActiveTicket(ticket);
      this.session.setDraft([]);
    } catch (error) {
      this.fail(error, () => this.claimNext());
    }
    this.render();
  }

  async submitVerdict(decision: Decision): Promise<void> {
    const view = this.view;
    if (!view) return;
    const { ticket } = view;
    if (ticket.state !== 'in_review' || ticket.reviewer_id !== this.session.reviewerId) {
      return; // controls are disabled; shortcuts must obey the same guard
    }
    this.banner = null;
    try {
      await this.api.submitVerdict(ticket.ticket_id, this.session.reviewerId,
                                   decision, this.session.draft);
    } catch (error) {
      if (error instanceof ReviewApiError &&
          (error.code === 'invalid_transition' || error.code === 'not_assignee')) {
        // Assignment changed under us: drop the stale view and prompt reload.
        this.banner = {
          kind: 'error',
          text: 'This ticket changed on the server; claim a fresh one.',
          retryLabel: 'Claim next',
        };
        this.lastAction = () => this.claimNext();
        this.view = null;
        this.session.clearAfterSubmit();
      } else {
        this.fail(error, () => this.submitVerdict(decision));
      }
      this.render();
      return;
    }
    this.session.clearAfterSubmit();
    this.view = null;
    this.banner = { kind: 'info', text: `Verdict recorded: ${decision}.` };
    await this.refreshDashboard();
    await this.claimNext(); // success auto-advances to the next ticket
  }

  addAnnotation(annotation: Annotation): void {
    this.session.addDraftAnnotation(annotation);
    this.render();
  }

  removeAnnotation(index: number): void {
    this.session.removeDraftAnnotation(index);
    this.render();
  }

  /** Dashboard numbers are a pure pass-through of GET /rounds/{r}/status. */
  async refreshDashboard(): Promise<void> {
    try {
      const statuses = await Promise.all(this.rounds.map((r) => this.api.roundStatus(r)));
      this.dashboard = statuses;
      this.render();
    } catch (error) {
      this.fail(error, () => this.refreshDashboard());
      this.render();
    }
  }

  retryLast(): void {
    const action = this.lastAction;
    this.banner = null;
    this.lastAction = null;
    if (action) void action();
    this.render();
  }

  render(): void {
    this.root.replaceChildren();
    if (this.banner) {
      this.root.appendChild(renderBanner(this.banner,
        this.lastAction ? () => this.retryLast() : undefined));
    }

    const claimBar = this.root.ownerDocument.createElement('div');
    claimBar.className = 'claim-bar';
    const claimButton = this.root.ownerDocument.createElement('button');
    claimButton.className = 'claim-next';
    claimButton.textContent = 'Claim next ticket';
    claimButton.setAttribute('aria-keyshortcuts', 'c');
    claimButton.addEventListener('click', () => void this.claimNext());
    claimBar.appendChild(claimButton);
    this.root.appendChild(claimBar);

    if (this.view) {
      this.root.appendChild(renderTicketView(this.view, this.session.reviewerId,
        this.session.draft, {
          onDecide: (decision) => void this.submitVerdict(decision),
          onAddAnnotation: (annotation) => this.addAnnotation(annotation),
          onRemoveAnnotation: (index) => this.removeAnnotation(index),
        }));
    } else if (this.queueEmpty) {
      this.root.appendChild(renderEmptyQueue());
    }

    this.root.appendChild(renderDashboard(this.dashboard));
  }
}
