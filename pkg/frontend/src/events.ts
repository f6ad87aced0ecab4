import type { TranscriptEvent } from "./types.js";

/** One server-sent-events frame (blank-line delimited block). */
export interface SseFrame {
  id?: string;
  event?: string;
  data: string;
}

/** Incremental SSE wire parser: feed it decoded chunks in any split and it
 * yields complete frames. */
export class SseParser {
  private buffer = "";

  feed(chunk: string): SseFrame[] {
    this.buffer += chunk;
    const frames: SseFrame[] = [];
    let boundary: number;
    while ((boundary = this.buffer.indexOf("\n\n")) !== -1) {
      const block = this.buffer.slice(0, boundary);
      this.buffer = this.buffer.slice(boundary + 2);
      const frame: SseFrame = { data: "" };
      const dataLines: string[] = [];
      for (const line of block.split("\n")) {
        if (line.startsWith(":")) continue; // comment / keep-alive
        const sep = line.indexOf(":");
        if (sep === -1) continue;
        const field = line.slice(0, sep);
        const value = line.slice(sep + 1).replace(/^ /, "");
        if (field === "id") frame.id = value;
        else if (field === "event") frame.event = value;
        else if (field === "data") dataLines.push(value);
      }
      frame.data = dataLines.join("\n");
      if (frame.id !== undefined || frame.event !== undefined || frame.data !== "") {
        frames.push(frame);
      }
    }
    return frames;
  }
}

export type ConnectionStatus = "connecting" | "live" | "ended" | "error";

export interface EventStreamOptions {
  fetchFn?: typeof fetch;
  onEvent: (event: TranscriptEvent) => void;
  onStatus?: (status: ConnectionStatus, detail?: string) => void;
  /** Delay between reconnect attempts, ms. */
  retryDelayMs?: number;
  /** Give up after this many consecutive failed connection attempts. */
  maxRetries?: number;
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

/**
 * Live subscription to one campaign's event stream with lossless resume:
 * every reconnect asks the service for `?since=<last seen seq>`, and events
 * at or below that sequence number are dropped, so the observer sees each
 * event exactly once and in order regardless of stream interruptions.
 */
export class EventStream {
  lastSeq = -1;
  private stopped = false;
  private done: Promise<void> | null = null;

  constructor(
    private readonly baseUrl: string,
    private readonly campaignId: string,
    private readonly opts: EventStreamOptions,
  ) {}

  start(): Promise<void> {
    if (!this.done) this.done = this.run();
    return this.done;
  }

  stop(): void {
    this.stopped = true;
  }

  /** Resolves when the server sends its end-of-stream frame. */
  finished(): Promise<void> {
    return this.start();
  }

  private status(status: ConnectionStatus, detail?: string): void {
    this.opts.onStatus?.(status, detail);
  }

  private async run(): Promise<void> {
    const fetchFn = this.opts.fetchFn ?? fetch;
    const retryDelay = this.opts.retryDelayMs ?? 500;
    const maxRetries = this.opts.maxRetries ?? 20;
    let failures = 0;
    while (!this.stopped) {
      this.status("connecting");
      const url =
        `${this.baseUrl}/campaigns/${this.campaignId}/events?since=${this.lastSeq}`;
      try {
        const resp = await fetchFn(url, {
          headers: { "last-event-id": String(this.lastSeq) },
        });
        if (resp.status === 404) {
          this.status("error", `unknown campaign ${this.campaignId}`);
          return;
        }
        if (!resp.ok || !resp.body) {
          throw new Error(`stream returned ${resp.status}`);
        }
        this.status("live");
        failures = 0;
        if (await this.consume(resp.body)) {
          this.status("ended");
          return;
        }
      } catch (err) {
        failures += 1;
        if (failures >= maxRetries) {
          this.status("error", String(err));
          return;
        }
      }
      if (!this.stopped) await sleep(retryDelay);
    }
  }

  /** Reads one response body to completion; true means the server declared
   * the stream finished (rather than the connection dropping). */
  private async consume(body: ReadableStream<Uint8Array>): Promise<boolean> {
    const reader = body.getReader();
    const decoder = new TextDecoder();
    const parser = new SseParser();
    try {
      for (;;) {
        const { done, value } = await reader.read();
        if (done) return false;
        for (const frame of parser.feed(decoder.decode(value, { stream: true }))) {
          if (frame.event === "end") return true;
          if (!frame.data) continue;
          const event = JSON.parse(frame.data) as TranscriptEvent;
          if (event.seq <= this.lastSeq) continue; // replayed after resume
          this.lastSeq = event.seq;
          this.opts.onEvent(event);
        }
        if (this.stopped) return true;
      }
    } finally {
      reader.releaseLock();
    }
  }
}
