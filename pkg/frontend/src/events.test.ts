import { describe, expect, it } from "vitest";

import { ApiClient, type FetchLike } from "./api.js";
import { EpisodeEventStore, parseSseChunk } from "./events.js";
import type { EpisodeEvent } from "./types.js";

function ev(seq: number, kind = "action_applied"): EpisodeEvent {
  return { seq, ts: seq * 10, kind, payload: { n: seq } };
}

function frame(event: EpisodeEvent): string {
  return `id: ${event.seq}\nevent: episode\ndata: ${JSON.stringify(event)}\n\n`;
}

/** Response whose body streams the given chunks, optionally erroring
 * instead of closing (a dropped connection). */
function streamResponse(chunks: string[], dropAtEnd = false): Response {
  const encoder = new TextEncoder();
  const queue = [...chunks];
  // pull-based so queued chunks are delivered before the simulated drop
  const body = new ReadableStream<Uint8Array>({
    pull(controller) {
      const next = queue.shift();
      if (next !== undefined) {
        controller.enqueue(encoder.encode(next));
      } else if (dropAtEnd) {
        controller.error(new Error("connection reset"));
      } else {
        controller.close();
      }
    },
  });
  return new Response(body, { status: 200 });
}

describe("parseSseChunk", () => {
  it("extracts data payloads from complete frames", () => {
    const { events, rest } = parseSseChunk(frame(ev(1)) + frame(ev(2)));
    expect(events.map((e) => e.seq)).toEqual([1, 2]);
    expect(rest).toBe("");
  });

  it("carries partial frames over to the next chunk", () => {
    const whole = frame(ev(1)) + frame(ev(2));
    const cut = whole.length - 9; // split inside the second frame
    const first = parseSseChunk(whole.slice(0, cut));
    expect(first.events.map((e) => e.seq)).toEqual([1]);
    const second = parseSseChunk(first.rest + whole.slice(cut));
    expect(second.events.map((e) => e.seq)).toEqual([2]);
    expect(second.rest).toBe("");
  });

  it("ignores non-data lines", () => {
    const { events } = parseSseChunk(": keepalive\n\n" + frame(ev(3)));
    expect(events.map((e) => e.seq)).toEqual([3]);
  });
});

describe("EpisodeEventStore", () => {
  /** Serves the canonical log over SSE, honouring ?since=. The first
   * `drops` connections die partway through the remaining events. */
  function sseServer(log: EpisodeEvent[], drops = 0, resendLast = false) {
    const seen: number[] = [];
    let remainingDrops = drops;
    const fetchFn: FetchLike = async (url) => {
      const since = Number(new URL(url).searchParams.get("since") ?? "0");
      seen.push(since);
      let pending = log.filter((e) => e.seq > since);
      if (resendLast && since > 0) {
        // sloppy server: replays the cursor event too
        pending = log.filter((e) => e.seq >= since);
      }
      if (remainingDrops > 0) {
        remainingDrops -= 1;
        const partial = pending.slice(0, Math.ceil(pending.length / 2));
        return streamResponse(partial.map(frame), true);
      }
      return streamResponse(pending.map(frame));
    };
    return { fetchFn, seen };
  }

  it("collects a clean stream in order", async () => {
    const log = [ev(1, "started"), ev(2), ev(3)];
    const { fetchFn } = sseServer(log);
    const store = new EpisodeEventStore(new ApiClient("http://svc", fetchFn), "e1");
    await store.follow();
    expect(store.events).toEqual(log);
    expect(store.lastSeq).toBe(3);
  });

  it("resumes after a drop from the last seen sequence", async () => {
    const log = [ev(1, "started"), ev(2), ev(3), ev(4), ev(5, "completed")];
    const { fetchFn, seen } = sseServer(log, 1);
    const store = new EpisodeEventStore(new ApiClient("http://svc", fetchFn), "e1");
    await store.follow();
    expect(seen[0]).toBe(0);
    expect(seen[1]).toBeGreaterThan(0); // resumed, not restarted
    expect(store.events).toEqual(log);
  });

  it("drops duplicate deliveries so reconnects stay exactly-once", async () => {
    const log = [ev(1, "started"), ev(2), ev(3), ev(4)];
    const { fetchFn } = sseServer(log, 1, true);
    const store = new EpisodeEventStore(new ApiClient("http://svc", fetchFn), "e1");
    await store.follow();
    expect(store.events).toEqual(log);
  });

  it("matches a fresh full fetch after repeated drops", async () => {
    const log = Array.from({ length: 12 }, (_, i) => ev(i + 1));
    const { fetchFn } = sseServer(log, 3);
    const store = new EpisodeEventStore(new ApiClient("http://svc", fetchFn), "e1");
    await store.follow();
    const fresh = new EpisodeEventStore(
      new ApiClient("http://svc", sseServer(log).fetchFn),
      "e1"
    );
    await fresh.follow();
    expect(store.events).toEqual(fresh.events);
  });

  it("gives up after the reconnect budget is spent", async () => {
    const { fetchFn } = sseServer([ev(1), ev(2)], 99);
    const store = new EpisodeEventStore(new ApiClient("http://svc", fetchFn), "e1");
    await expect(store.follow(2)).rejects.toThrow(/giving up/);
  });

  it("notifies listeners once per unique event", async () => {
    const log = [ev(1), ev(2), ev(3)];
    const { fetchFn } = sseServer(log, 1, true);
    const store = new EpisodeEventStore(new ApiClient("http://svc", fetchFn), "e1");
    const delivered: number[] = [];
    store.onEvent((event) => delivered.push(event.seq));
    await store.follow();
    expect(delivered).toEqual([1, 2, 3]);
  });
});
