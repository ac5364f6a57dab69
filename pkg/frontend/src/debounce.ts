/** Debounced, latest-wins request scheduling: at most one in-flight
 * request per panel; a newer call cancels the pending timer and aborts
 * the in-flight fetch. */

export interface Scheduler {
  schedule(run: (signal: AbortSignal) => Promise<void>): void;
  cancel(): void;
  readonly inFlight: number;
}

export function latestWins(delayMs: number, setTimer = setTimeout, clearTimer = clearTimeout): Scheduler {
  let timer: ReturnType<typeof setTimeout> | undefined;
  let controller: AbortController | undefined;
  let inFlight = 0;

  const scheduler = {
    get inFlight() {
      return inFlight;
    },
    schedule(run: (signal: AbortSignal) => Promise<void>) {
      if (timer !== undefined) clearTimer(timer);
      timer = setTimer(() => {
        timer = undefined;
        controller?.abort();
        controller = new AbortController();
        const mine = controller;
        inFlight += 1;
        run(mine.signal)
          .catch(() => undefined) // aborted or surfaced by the caller
          .finally(() => {
            inFlight -= 1;
            if (controller === mine) controller = undefined;
          });
      }, delayMs);
    },
    cancel() {
      if (timer !== undefined) clearTimer(timer);
      timer = undefined;
      controller?.abort();
      controller = undefined;
    },
  };
  return scheduler;
}
