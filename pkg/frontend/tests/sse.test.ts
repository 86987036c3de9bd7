import { describe, expect, it } from "vitest";

import { SseParser } from "../src/sse.js";

describe("SSE parser", () => {
  it("parses complete messages", () => {
    const parser = new SseParser();
    const msgs = parser.feed('event: frame\ndata: {"seq":0}\n\n');
    expect(msgs).toEqual([{ event: "frame", data: '{"seq":0}' }]);
  });

  it("handles messages split across chunks", () => {
    const parser = new SseParser();
    expect(parser.feed("event: incremental\nda")).toEqual([]);
    const msgs = parser.feed('ta: {"seq":1}\n\nevent: incremental\ndata: {"seq":2}\n\n');
    expect(msgs.map((m) => m.data)).toEqual(['{"seq":1}', '{"seq":2}']);
  });

  it("ignores keep-alive comments", () => {
    const parser = new SseParser();
    expect(parser.feed(": keep-alive\n\n: keep-alive\n\n")).toEqual([]);
  });

  it("joins multi-line data", () => {
    const parser = new SseParser();
    const msgs = parser.feed("data: a\ndata: b\n\n");
    expect(msgs[0].data).toBe("a\nb");
  });
});
