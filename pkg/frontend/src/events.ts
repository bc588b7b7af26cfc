// Event stream plumbing: a dedup buffer plus an EventSource wrapper that
// resumes from the last seen seq instead of replaying the whole log.

import type { EngineEvent } from "./types.js";

const EVENT_KINDS = [
  "DefinitionLoaded", "ActivityStateChanged", "ConditionEvaluated",
  "DataEmitted", "InstanceCompleted",
] as const;

/**
 * Ordered event log with duplicate suppression. After a reconnect the
 * server may resend frames already seen (it replays from the requested
 * seq); push() drops those so downstream folds stay exactly-once.
 */
export class FeedBuffer {
  readonly events: EngineEvent[] = [];

  get lastSeq(): number {
    return this.events.length ? this.events[this.events.length - 1].seq : 0;
  }

  push(ev: EngineEvent): boolean {
    if (ev.seq <= this.lastSeq) return false;
    this.events.push(ev);
    return true;
  }
}

export interface StreamHandle {
  close(): void;
}

export interface StreamCallbacks {
  onEvent(ev: EngineEvent): void;
  onOpen?(): void;
  onError?(): void;
}

/**
 * Subscribe to an instance's event stream. `urlFor` receives the seq to
 * resume from; the browser reconnects dropped EventSource connections by
 * itself, and we reopen explicitly with the buffered position so a long
 * outage never re-downloads history the page already holds.
 */
export function followEvents(
  urlFor: (fromSeq: number) => string,
  buffer: FeedBuffer,
  callbacks: StreamCallbacks,
): StreamHandle {
  let source: EventSource | null = null;
  let closed = false;

  const open = () => {
    if (closed) return;
    source = new EventSource(urlFor(buffer.lastSeq));
    for (const kind of EVENT_KINDS) {
      source.addEventListener(kind, (msg) => {
        const ev = JSON.parse((msg as MessageEvent).data) as EngineEvent;
        if (buffer.push(ev)) callbacks.onEvent(ev);
      });
    }
    source.onopen = () => callbacks.onOpen?.();
    source.onerror = () => {
      callbacks.onError?.();
      // Reopen from the current position rather than letting the built-in
      // retry reuse the original ?from offset forever.
      source?.close();
      if (!closed) setTimeout(open, 1000);
    };
  };

  open();
  return {
    close() {
      closed = true;
      source?.close();
    },
  };
}
