// Minimal server-sent-events client over fetch streaming; works in the
// browser and in node (neither needs EventSource). Reconnects with the
// retained view resuming from the next server snapshot.

export interface SseMessage {
  event: string;
  data: string;
}

/** Incremental SSE wire parser; feed() returns completed messages. */
export class SseParser {
  private buffer = "";

  feed(chunk: string): SseMessage[] {
    this.buffer += chunk;
    const messages: SseMessage[] = [];
    let idx: number;
    while ((idx = this.buffer.indexOf("\n\n")) >= 0) {
      const raw = this.buffer.slice(0, idx);
      this.buffer = this.buffer.slice(idx + 2);
      let event = "message";
      const dataLines: string[] = [];
      for (const line of raw.split("\n")) {
        if (line.startsWith(":")) continue; // comment / keep-alive
        if (line.startsWith("event:")) event = line.slice(6).trim();
        else if (line.startsWith("data:")) dataLines.push(line.slice(5).trim());
      }
      if (dataLines.length) messages.push({ event, data: dataLines.join("\n") });
    }
    return messages;
  }
}

export interface StreamOptions {
  onMessage: (msg: SseMessage) => void;
  onStateChange?: (state: "connecting" | "open" | "reconnecting" | "closed") => void;
  reconnectDelayMs?: number;
  signal?: AbortSignal;
}

export async function consumeStream(url: string, opts: StreamOptions): Promise<void> {
  const delay = opts.reconnectDelayMs ?? 2000;
  for (;;) {
    if (opts.signal?.aborted) {
      opts.onStateChange?.("closed");
      return;
    }
    opts.onStateChange?.("connecting");
    try {
      const resp = await fetch(url, { signal: opts.signal });
      if (!resp.ok || !resp.body) throw new Error(`stream HTTP ${resp.status}`);
      opts.onStateChange?.("open");
      const parser = new SseParser();
      const reader = resp.body.getReader();
      const decoder = new TextDecoder();
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        for (const msg of parser.feed(decoder.decode(value, { stream: true }))) {
          opts.onMessage(msg);
        }
      }
    } catch (err) {
      if (opts.signal?.aborted) {
        opts.onStateChange?.("closed");
        return;
      }
    }
    opts.onStateChange?.("reconnecting");
    await new Promise((resolve) => setTimeout(resolve, delay));
  }
}
