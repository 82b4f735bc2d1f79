// Minimal server-sent-events reader on top of fetch streaming, so the same
// code runs in the browser and in headless tests (no EventSource needed).

export interface SseFrame {
  id?: number;
  event?: string;
  data: string;
}

export function parseSseChunk(buffer: string): { frames: SseFrame[]; rest: string } {
  const frames: SseFrame[] = [];
  const parts = buffer.split("\n\n");
  const rest = parts.pop() ?? "";
  for (const part of parts) {
    const frame: SseFrame = { data: "" };
    for (const line of part.split("\n")) {
      if (line.startsWith("id: ")) frame.id = Number(line.slice(4));
      else if (line.startsWith("event: ")) frame.event = line.slice(7).trim();
      else if (line.startsWith("data: ")) frame.data = line.slice(6);
    }
    if (frame.data !== "" || frame.event) frames.push(frame);
  }
  return { frames, rest };
}

export function subscribeSse(
  url: string,
  onFrame: (frame: SseFrame) => void,
  fetchImpl: typeof fetch = fetch,
): () => void {
  const controller = new AbortController();
  void (async () => {
    try {
      const response = await fetchImpl(url, { signal: controller.signal });
      if (!response.ok || !response.body) return;
      const reader = response.body.getReader();
      const decoder = new TextDecoder();
      let buffer = "";
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        buffer += decoder.decode(value, { stream: true });
        const { frames, rest } = parseSseChunk(buffer);
        buffer = rest;
        for (const frame of frames) {
          onFrame(frame);
          if (frame.event === "end") {
            controller.abort();
            return;
          }
        }
      }
    } catch {
      // aborted or connection dropped; callers re-subscribe on demand
    }
  })();
  return () => controller.abort();
}
