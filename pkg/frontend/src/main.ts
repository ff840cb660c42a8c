/** Browser entry point. The service endpoint is the single configuration
 * value: a <meta name="review-endpoint"> tag, with an optional
 * localStorage override ("review-ui:endpoint"). */

import { ReviewApi } from './api.js';
import { ReviewApp } from './app.js';
import { SessionStore } from './session.js';

function endpoint(): string {
  const override = localStorage.getItem('review-ui:endpoint');
  if (override) return override;
  const meta = document.querySelector('meta[name="review-endpoint"]');
  return meta?.getAttribute('content') ?? 'http://127.0.0.1:8321';
}

function main(): void {
  const root = document.getElementById('app');
  if (!root) throw new Error('missing #app container');
  const session = new SessionStore();
  if (!session.reviewerId) {
    const entered = window.prompt('Reviewer id:')?.trim();
    if (entered) session.reviewerId = entered;
  }
  const app = new ReviewApp(root, new ReviewApi(endpoint()), session);
  void app.start();
}

main();
