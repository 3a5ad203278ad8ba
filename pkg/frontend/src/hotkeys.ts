export type HotkeyBindings = Record<string, () => void>;

/**
 * Bind single-key shortcuts on `target`. Keys are matched lowercase
 * ("r", "arrowright", ...). Keystrokes typed into form fields and chords
 * with ctrl/alt/meta are left alone. Returns the unbind function.
 */
export function bindHotkeys(
  bindings: HotkeyBindings,
  target: Window = window,
): () => void {
  const handler = (event: KeyboardEvent) => {
    if (event.ctrlKey || event.altKey || event.metaKey) {
      return;
    }
    const source = event.target as HTMLElement | null;
    if (
      source &&
      (source.tagName === "INPUT" ||
        source.tagName === "TEXTAREA" ||
        source.isContentEditable)
    ) {
      return;
    }
    const action = bindings[event.key.toLowerCase()];
    if (action) {
      event.preventDefault();
      action();
    }
  };
  target.addEventListener("keydown", handler as EventListener);
  return () => target.removeEventListener("keydown", handler as EventListener);
}
