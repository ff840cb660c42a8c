/** Keyboard shortcuts so the whole decision loop works without a mouse.
 *
 *   c         claim next ticket
 *   a / r / n accept / reject / needs revision
 *
 * Shortcuts are suppressed while typing in inputs or textareas.
 */

export interface ShortcutHandlers {
  claim: () => void;
  accept: () => void;
  reject: () => void;
  needsRevision: () => void;
}

export function bindShortcuts(target: EventTarget, handlers: ShortcutHandlers): () => void {
  const listener = (event: Event) => {
    const keyEvent = event as KeyboardEvent;
    const element = keyEvent.target as HTMLElement | null;
    if (element) {
      const tag = element.tagName;
      if (tag === 'INPUT' || tag === 'TEXTAREA' || element.isContentEditable) return;
    }
    if (keyEvent.metaKey || keyEvent.ctrlKey || keyEvent.altKey) return;
    switch (keyEvent.key) {
      case 'c':
        handlers.claim();
        break;
      case 'a':
        handlers.accept();
        break;
      case 'r':
        handlers.reject();
        break;
      case 'n':
        handlers.needsRevision();
        break;
      default:
        return;
    }
    keyEvent.preventDefault();
  };
  target.addEventListener('keydown', listener);
  return () => target.removeEventListener('keydown', listener);
}
