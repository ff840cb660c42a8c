/** Pure DOM builders. Every rendered number and state comes from a service
 * response passed in; nothing here invents or caches review state. */

import type { Annotation, Decision, RoundStatus, TicketView } from './types.js';

export interface Banner {
  kind: 'error' | 'info';
  text: string;
  retryLabel?: string;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderBanner(banner: Banner, onRetry?: () => void): HTMLElement {
  const box = el('div', `banner banner-${banner.kind}`);
  box.setAttribute('role', banner.kind === 'error' ? 'alert' : 'status');
  box.appendChild(el('span', 'banner-text', banner.text));
  if (banner.retryLabel && onRetry) {
    const retry = el('button', 'banner-retry', banner.retryLabel);
    retry.addEventListener('click', onRetry);
    box.appendChild(retry);
  }
  return box;
}

export function renderEmptyQueue(): HTMLElement {
  const box = el('div', 'empty-state');
  box.appendChild(el('h2', undefined, 'No pending tickets'));
  box.appendChild(el('p', undefined,
    'The review queue is empty. Claim again once new items are enqueued.'));
  return box;
}

function renderMedia(view: TicketView): HTMLElement {
  const strip = el('div', 'media-strip');
  for (const media of view.detail.qa.media) {
    if (media.kind === 'video') {
      const video = el('video', 'media-item');
      video.src = media.uri;
      video.controls = true;
      strip.appendChild(video);
    } else {
      const img = el('img', 'media-item');
      img.src = media.uri;
      img.alt = `sample media for ${view.detail.qa.qa_id}`;
      strip.appendChild(img);
    }
  }
  return strip;
}

export interface TicketViewHandlers {
  onDecide: (decision: Decision) => void;
  onAddAnnotation: (annotation: Annotation) => void;
  onRemoveAnnotation: (index: number) => void;
}

const DECISIONS: Array<{ decision: Decision; label: string; key: string }> = [
  { decision: 'accepted', label: 'Accept', key: 'a' },
  { decision: 'rejected', label: 'Reject', key: 'r' },
  { decision: 'needs_revision', label: 'Needs revision', key: 'n' },
];

export function renderTicketView(
  view: TicketView,
  reviewerId: string,
  draft: Annotation[],
  handlers: TicketViewHandlers,
): HTMLElement {
  const root = el('section', 'ticket-view');
  const ticket = view.ticket;
  const qa = view.detail.qa;

  const header = el('header', 'ticket-header');
  header.appendChild(el('h2', undefined, `Ticket ${ticket.ticket_id}`));
  header.appendChild(el('span', `state state-${ticket.state}`, ticket.state));
  header.appendChild(el('span', 'round', `round ${ticket.round}`));
  root.appendChild(header);

  root.appendChild(renderMedia(view));

  const body = el('div', 'sample');
  body.appendChild(el('h3', undefined, 'Question'));
  body.appendChild(el('p', 'question', qa.question));
  body.appendChild(el('h3', undefined, 'Answer'));
  body.appendChild(el('p', 'answer', qa.answer));
  if (qa.reasoning) {
    const details = el('details', 'reasoning');
    details.appendChild(el('summary', undefined, 'Reasoning'));
    details.appendChild(el('p', undefined, qa.reasoning));
    body.appendChild(details);
  }
  if (view.detail.record) {
    const source = view.detail.record as { source?: { dataset_name?: string } };
    const summary = `${String(view.detail.record['task'] ?? '')} · ` +
      `${String(view.detail.record['anatomy'] ?? '')} · ` +
      `${source.source?.dataset_name ?? ''}`;
    body.appendChild(el('p', 'record-summary', summary));
  }
  root.appendChild(body);

  // Annotation drafts: field path + comment, kept until submission.
  const annotations = el('div', 'annotations');
  annotations.appendChild(el('h3', undefined, 'Annotations'));
  const list = el('ul', 'annotation-list');
  draft.forEach((annotation, index) => {
    const item = el('li', 'annotation');
    item.appendChild(el('code', undefined, annotation.field_path));
    item.appendChild(el('span', undefined, ` ${annotation.comment} `));
    const remove = el('button', 'annotation-remove', 'remove');
    remove.addEventListener('click', () => handlers.onRemoveAnnotation(index));
    item.appendChild(remove);
    list.appendChild(item);
  });
  annotations.appendChild(list);

  const form = el('div', 'annotation-form');
  const fieldInput = el('input', 'annotation-field');
  fieldInput.placeholder = 'field path (e.g. answer)';
  const commentInput = el('textarea', 'annotation-comment');
  commentInput.placeholder = 'what is inaccurate?';
  const add = el('button', 'annotation-add', 'Add annotation');
  add.addEventListener('click', () => {
    if (fieldInput.value.trim() && commentInput.value.trim()) {
      handlers.onAddAnnotation({
        field_path: fieldInput.value.trim(),
        comment: commentInput.value.trim(),
      });
      fieldInput.value = '';
      commentInput.value = '';
    }
  });
  form.append(fieldInput, commentInput, add);
  annotations.appendChild(form);
  root.appendChild(annotations);

  // Verdict controls are live only for the assigned reviewer on an
  // in-review ticket; everyone else sees them disabled.
  const canDecide = ticket.state === 'in_review' && ticket.reviewer_id === reviewerId;
  const controls = el('div', 'verdict-controls');
  controls.setAttribute('role', 'group');
  controls.setAttribute('aria-label', 'verdict');
  for (const { decision, label, key } of DECISIONS) {
    const button = el('button', `verdict verdict-${decision}`, label);
    button.disabled = !canDecide;
    button.setAttribute('aria-keyshortcuts', key);
    button.addEventListener('click', () => handlers.onDecide(decision));
    controls.appendChild(button);
  }
  root.appendChild(controls);
  return root;
}

export function renderDashboard(statuses: RoundStatus[], onOpenNext?: (round: number) => void): HTMLElement {
  const root = el('section', 'dashboard');
  root.appendChild(el('h2', undefined, 'Round progress'));
  for (const status of statuses) {
    const row = el('div', 'round-row');
    row.dataset.round = String(status.round);
    row.appendChild(el('h3', undefined, `Round ${status.round}`));

    const counts = el('ul', 'counts');
    for (const [state, count] of Object.entries(status.counts)) {
      const item = el('li', `count count-${state}`, `${state}: ${count}`);
      item.dataset.state = state;
      item.dataset.count = String(count);
      counts.appendChild(item);
    }
    row.appendChild(counts);

    const accepted = status.consensus_accepted.length;
    const bar = el('div', 'consensus-bar');
    bar.setAttribute('role', 'progressbar');
    bar.setAttribute('aria-valuenow', String(accepted));
    bar.setAttribute('aria-valuemax', String(status.enrolled));
    const fill = el('div', 'consensus-fill');
    fill.style.width = status.enrolled
      ? `${Math.round((accepted / status.enrolled) * 100)}%`
      : '0%';
    bar.appendChild(fill);
    row.appendChild(bar);
    row.appendChild(el('span', 'consensus-label',
      `${accepted}/${status.enrolled} consensus-accepted`));

    if (status.advance_eligible && onOpenNext && status.round < 3) {
      const advance = el('button', 'advance', `Open round ${status.round + 1}`);
      advance.addEventListener('click', () => onOpenNext(status.round + 1));
      row.appendChild(advance);
    }
    root.appendChild(row);
  }
  return root;
}
