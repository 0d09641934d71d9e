import type { Label } from './types.js';

/** Structural subset of KeyboardEvent so the handler is testable off-DOM. */
export interface ReviewKeyEvent {
  key: string;
  ctrlKey?: boolean;
  metaKey?: boolean;
  altKey?: boolean;
  target?: { tagName?: string; isContentEditable?: boolean } | null;
  preventDefault?: () => void;
}

export interface ReviewActions {
  onLabel: (label: Label) => void;
  onToggleOverlay: () => void;
  onToggleZoom: () => void;
}

/**
 * V = valid, I = invalid, O = difference overlay, Z = zoom. Pressing a key
 * goes through the same action as clicking the matching button.
 */
export function reviewKeyHandler(actions: ReviewActions): (e: ReviewKeyEvent) => void {
  return (e) => {
    if (e.ctrlKey || e.metaKey || e.altKey) return;
    const target = e.target;
    if (
      target &&
      (target.tagName === 'INPUT' || target.tagName === 'TEXTAREA' || target.isContentEditable)
    ) {
      return;
    }
    switch (e.key.toLowerCase()) {
      case 'v':
        e.preventDefault?.();
        actions.onLabel('valid');
        break;
      case 'i':
        e.preventDefault?.();
        actions.onLabel('invalid');
        break;
      case 'o':
        e.preventDefault?.();
        actions.onToggleOverlay();
        break;
      case 'z':
        e.preventDefault?.();
        actions.onToggleZoom();
        break;
    }
  };
}

export interface Listenable {
  addEventListener(type: string, listener: (e: any) => void): void;
  removeEventListener(type: string, listener: (e: any) => void): void;
}

export function attachKeyboard(target: Listenable, actions: ReviewActions): () => void {
  const handler = reviewKeyHandler(actions);
  target.addEventListener('keydown', handler);
  return () => target.removeEventListener('keydown', handler);
}
