/** Incremental event store fed by the server-sent event stream.
 *
 * The server replays an episode's log from any sequence number, so the
 * store survives dropped connections: every (re)connect asks only for
 * events after the highest sequence number it has already seen, and
 * duplicates are discarded. After any number of reconnects the stored
 * list equals what one fresh full fetch would return.
 */

import type { ApiClient } from "./api.js";
import type { EpisodeEvent } from "./types.js";

/** Parse the `data:` payloads out of a chunk of SSE text.
 *
 * Handles frames split across chunk boundaries via the returned
 * carry-over remainder.
 */
export function parseSseChunk(
  buffered: string
): { events: EpisodeEvent[]; rest: string } {
  const events: EpisodeEvent[] = [];
  const frames = buffered.split("\n\n");
  const rest = frames.pop() ?? "";
  for (const frame of frames) {
    for (const line of frame.split("\n")) {
      if (line.startsWith("data: ")) {
        events.push(JSON.parse(line.slice("data: ".length)) as EpisodeEvent);
      }
    }
  }
  return { events, rest };
}

export class EpisodeEventStore {
  readonly events: EpisodeEvent[] = [];
  private listeners: ((event: EpisodeEvent) => void)[] = [];

  constructor(
    private readonly client: ApiClient,
    private readonly episodeId: string
  ) {}

  get lastSeq(): number {
    return this.events.length === 0
      ? 0
      : this.events[this.events.length - 1].seq;
  }

  onEvent(listener: (event: EpisodeEvent) => void): void {
    this.listeners.push(listener);
  }

  private ingest(event: EpisodeEvent): void {
    if (event.seq <= this.lastSeq) {
      return; // duplicate delivery after a reconnect
    }
    this.events.push(event);
    for (const listener of this.listeners) {
      listener(event);
    }
  }

  /** One connection: stream until the server closes, then return. */
  async connectOnce(): Promise<number> {
    const response = await this.client.eventStream(this.episodeId, this.lastSeq);
    if (!response.ok || response.body === null) {
      throw new Error(`event stream failed: ${response.status}`);
    }
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    let delivered = 0;
    for (;;) {
      const { done, value } = await reader.read();
      if (done) {
        break;
      }
      buffer += decoder.decode(value, { stream: true });
      const { events, rest } = parseSseChunk(buffer);
      buffer = rest;
      for (const event of events) {
        this.ingest(event);
        delivered += 1;
      }
    }
    return delivered;
  }

  /** Connect, and on connection loss resume from the last seen event. */
  async follow(maxReconnects = 10): Promise<void> {
    for (let attempt = 0; attempt <= maxReconnects; attempt += 1) {
      try {
        await this.connectOnce();
        return;
      } catch {
        if (attempt === maxReconnects) {
          throw new Error("event stream kept failing; giving up");
        }
      }
    }
  }
}
