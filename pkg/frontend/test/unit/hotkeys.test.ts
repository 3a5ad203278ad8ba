import { describe, expect, it, vi } from "vitest";

import { bindHotkeys } from "../../src/hotkeys.js";

function press(key: string, init: KeyboardEventInit = {}, target: EventTarget = window) {
  const event = new KeyboardEvent("keydown", {
    key,
    bubbles: true,
    cancelable: true,
    ...init,
  });
  target.dispatchEvent(event);
  return event;
}

describe("bindHotkeys", () => {
  it("fires the bound action and swallows the default", () => {
    const action = vi.fn();
    const unbind = bindHotkeys({ r: action });
    const event = press("r");
    expect(action).toHaveBeenCalledOnce();
    expect(event.defaultPrevented).toBe(true);
    unbind();
  });

  it("matches keys case-insensitively, including named keys", () => {
    const tag = vi.fn();
    const move = vi.fn();
    const unbind = bindHotkeys({ r: tag, arrowright: move });
    press("R");
    press("ArrowRight");
    expect(tag).toHaveBeenCalledOnce();
    expect(move).toHaveBeenCalledOnce();
    unbind();
  });

  it("ignores chords with ctrl, alt, or meta", () => {
    const action = vi.fn();
    const unbind = bindHotkeys({ r: action });
    press("r", { ctrlKey: true });
    press("r", { altKey: true });
    press("r", { metaKey: true });
    expect(action).not.toHaveBeenCalled();
    unbind();
  });

  it("leaves typing into form fields alone", () => {
    const action = vi.fn();
    const unbind = bindHotkeys({ r: action });
    const input = document.createElement("input");
    document.body.append(input);
    press("r", {}, input);
    const textarea = document.createElement("textarea");
    document.body.append(textarea);
    press("r", {}, textarea);
    expect(action).not.toHaveBeenCalled();
    input.remove();
    textarea.remove();
    unbind();
  });

  it("stops firing after unbind", () => {
    const action = vi.fn();
    const unbind = bindHotkeys({ r: action });
    unbind();
    press("r");
    expect(action).not.toHaveBeenCalled();
  });
});
