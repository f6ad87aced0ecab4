import { describe, expect, it } from "vitest";

import { EventStream, SseParser } from "../src/events.js";
import type { TranscriptEvent } from "../src/types.js";

function frame(seq: number, kind = "model_responded"): string {
  const data = JSON.stringify({ seq, kind, step_index: 0, payload: {}, ts_ms: seq });
  return `id: ${seq}\nevent: ${kind}\ndata: ${data}\n\n`;
}

const END = "event: end\ndata: {}\n\n";

describe("SseParser", () => {
  it("parses frames regardless of chunk boundaries", () => {
    const text = frame(0) + frame(1) + END;
    for (const size of [1, 3, 7, text.length]) {
      const parser = new SseParser();
      const frames = [];
      for (let i = 0; i < text.length; i += size) {
        frames.push(...parser.feed(text.slice(i, i + size)));
      }
      expect(frames).toHaveLength(3);
      expect(frames[0].id).toBe("0");
      expect(frames[1].event).toBe("model_responded");
      expect(frames[2].event).toBe("end");
      expect(JSON.parse(frames[1].data).seq).toBe(1);
    }
  });

  it("ignores comment keep-alives and fieldless lines", () => {
    const parser = new SseParser();
    expect(parser.feed(": ping\n\n")).toHaveLength(0);
    expect(parser.feed("data: {}\n\n")).toHaveLength(1);
  });
});

function streamOf(text: string): ReadableStream<Uint8Array> {
  const encoder = new TextEncoder();
  return new ReadableStream({
    start(controller) {
      controller.enqueue(encoder.encode(text));
      controller.close();
    },
  });
}

function fakeService(batches: string[]): {
  fetchFn: typeof fetch;
  urls: string[];
} {
  const urls: string[] = [];
  const fetchFn = (async (url: RequestInfo | URL) => {
    urls.push(String(url));
    const body = batches.shift() ?? END;
    return new Response(streamOf(body), { status: 200 });
  }) as typeof fetch;
  return { fetchFn, urls };
}

describe("EventStream", () => {
  it("delivers every event exactly once across a dropped connection", async () => {
    // first connection dies after two events (no end frame), second resumes
    const { fetchFn, urls } = fakeService([
      frame(0) + frame(1),
      frame(2) + frame(3) + END,
    ]);
    const seen: TranscriptEvent[] = [];
    const statuses: string[] = [];
    const stream = new EventStream("http://svc", "c0001", {
      fetchFn,
      retryDelayMs: 1,
      onEvent: (e) => seen.push(e),
      onStatus: (s) => statuses.push(s),
    });
    await stream.finished();
    expect(seen.map((e) => e.seq)).toEqual([0, 1, 2, 3]);
    expect(urls[0]).toContain("since=-1");
    expect(urls[1]).toContain("since=1"); // resumes from the last seen seq
    expect(statuses.at(-1)).toBe("ended");
  });

  it("drops events replayed at or below the resume point", async () => {
    // a sloppy server resends event 1 after reconnect
    const { fetchFn } = fakeService([frame(0) + frame(1), frame(1) + frame(2) + END]);
    const seen: number[] = [];
    const stream = new EventStream("http://svc", "c0001", {
      fetchFn,
      retryDelayMs: 1,
      onEvent: (e) => seen.push(e.seq),
    });
    await stream.finished();
    expect(seen).toEqual([0, 1, 2]);
  });

  it("reports an error for an unknown campaign", async () => {
    const fetchFn = (async () =>
      new Response("{}", { status: 404 })) as typeof fetch;
    const statuses: string[] = [];
    const stream = new EventStream("http://svc", "missing", {
      fetchFn,
      onEvent: () => {},
      onStatus: (s) => statuses.push(s),
    });
    await stream.finished();
    expect(statuses.at(-1)).toBe("error");
  });

  it("gives up after the retry budget", async () => {
    let calls = 0;
    const fetchFn = (async () => {
      calls += 1;
      throw new Error("connection refused");
    }) as typeof fetch;
    const statuses: string[] = [];
    const stream = new EventStream("http://svc", "c0001", {
      fetchFn,
      retryDelayMs: 1,
      maxRetries: 3,
      onEvent: () => {},
      onStatus: (s) => statuses.push(s),
    });
    await stream.finished();
    expect(calls).toBe(3);
    expect(statuses.at(-1)).toBe("error");
  });
});
