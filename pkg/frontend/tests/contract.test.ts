// Offline contract test: every request the client can issue is validated
// against the shipped OpenAPI document. No service needs to run.

import { describe, expect, it } from "vitest";

import { RecordedRequest, ServiceClient } from "../src/api.js";
import { loadApiDoc, validateRequest } from "./openapi.js";

function recordingClient(): { client: ServiceClient; requests: RecordedRequest[] } {
  const requests: RecordedRequest[] = [];
  const fakeFetch: typeof fetch = async () =>
    new Response(JSON.stringify({ session_id: "s", state: "Idle", accepted: true }), {
      status: 200,
      headers: { "Content-Type": "application/json" },
    });
  const client = new ServiceClient("http://example", (r) => requests.push(r), fakeFetch);
  return { client, requests };
}

describe("client traffic vs shipped API document", () => {
  it("covers every client method", async () => {
    const doc = loadApiDoc();
    const { client, requests } = recordingClient();
    await client.listSessions();
    await client.createSession({ db_id: "financial", task_ids: ["1"], agent_label: "P-3" });
    await client.getSession("session-0001");
    await client.sendFeedback("session-0001", "use gender = 'M'");
    await client.approve("session-0001");
    await client.skip("session-0001");
    await client.getMemory("session-0001");
    client.streamEvents("session-0001", () => {}, 3)();

    expect(requests.length).toBe(8);
    for (const request of requests) {
      validateRequest(doc, request);
    }
  });

  it("rejects undocumented traffic", () => {
    const doc = loadApiDoc();
    expect(() => validateRequest(doc, { method: "GET", path: "/nope" })).toThrow(/no documented/);
    expect(() =>
      validateRequest(doc, { method: "DELETE", path: "/sessions/s1" }),
    ).toThrow(/not documented/);
    expect(() =>
      validateRequest(doc, { method: "POST", path: "/sessions", body: { db_id: "x" } }),
    ).toThrow(/task_ids/);
    expect(() =>
      validateRequest(doc, {
        method: "POST",
        path: "/sessions/s1/feedback",
        body: { text: "ok", gold_sql: "sneaky" },
      }),
    ).toThrow(/undocumented field/);
  });

  it("surfaces service error details", async () => {
    const failingFetch: typeof fetch = async () =>
      new Response(JSON.stringify({ detail: "session is Completed, not AwaitingHuman" }), {
        status: 409,
        headers: { "Content-Type": "application/json" },
      });
    const client = new ServiceClient("http://example", undefined, failingFetch);
    await expect(client.approve("s1")).rejects.toMatchObject({
      status: 409,
      detail: "session is Completed, not AwaitingHuman",
    });
  });
});
