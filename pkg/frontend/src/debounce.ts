/** Trailing-edge debouncer: a burst of triggers yields exactly one firing. */

export type Scheduler = {
  set: (fn: () => void, ms: number) => unknown;
  clear: (handle: unknown) => void;
};

const defaultScheduler: Scheduler = {
  set: (fn, ms) => setTimeout(fn, ms),
  clear: (handle) => clearTimeout(handle as ReturnType<typeof setTimeout>),
};

export class Debouncer {
  private handle: unknown = null;

  constructor(
    private readonly windowMs: number,
    private readonly scheduler: Scheduler = defaultScheduler,
  ) {}

  trigger(fn: () => void): void {
    if (this.handle !== null) {
      this.scheduler.clear(this.handle);
    }
    this.handle = this.scheduler.set(() => {
      this.handle = null;
      fn();
    }, this.windowMs);
  }

  cancel(): void {
    if (this.handle !== null) {
      this.scheduler.clear(this.handle);
      this.handle = null;
    }
  }

  get pending(): boolean {
    return this.handle !== null;
  }
}
