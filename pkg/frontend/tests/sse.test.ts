import { describe, expect, it } from "vitest";

import { parseSseChunk } from "../src/sse.js";

describe("sse frame parsing", () => {
  it("splits complete frames and keeps the partial tail", () => {
    const { frames, rest } = parseSseChunk(
      'id: 0\ndata: {"role":"user"}\n\nid: 1\ndata: {"role":"assistant"}\n\nid: 2\nda',
    );
    expect(frames).toEqual([
      { id: 0, data: '{"role":"user"}' },
      { id: 1, data: '{"role":"assistant"}' },
    ]);
    expect(rest).toBe("id: 2\nda");
  });

  it("parses the terminal end event", () => {
    const { frames } = parseSseChunk("event: end\ndata: {}\n\n");
    expect(frames).toEqual([{ event: "end", data: "{}" }]);
  });

  it("ignores empty buffers", () => {
    expect(parseSseChunk("")).toEqual({ frames: [], rest: "" });
  });
});
