import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { Debouncer } from "../src/debounce.js";

describe("Debouncer", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("fires exactly once after a burst of triggers", () => {
    const debouncer = new Debouncer(150);
    let fired = 0;
    // A drag: many movement events in quick succession, then release.
    for (let i = 0; i < 40; i++) {
      debouncer.trigger(() => fired++);
      vi.advanceTimersByTime(10); // events every 10 ms, well inside the window
    }
    expect(fired).toBe(0);
    vi.advanceTimersByTime(150); // release: quiet period elapses
    expect(fired).toBe(1);
  });

  it("fires again for a second interaction", () => {
    const debouncer = new Debouncer(100);
    let fired = 0;
    debouncer.trigger(() => fired++);
    vi.advanceTimersByTime(100);
    debouncer.trigger(() => fired++);
    vi.advanceTimersByTime(100);
    expect(fired).toBe(2);
  });

  it("cancel suppresses the pending call", () => {
    const debouncer = new Debouncer(100);
    let fired = 0;
    debouncer.trigger(() => fired++);
    debouncer.cancel();
    vi.advanceTimersByTime(500);
    expect(fired).toBe(0);
    expect(debouncer.pending).toBe(false);
  });
});
