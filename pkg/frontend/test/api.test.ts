import { describe, expect, it } from "vitest";

import { ApiError, ChatClient } from "../src/api.js";

interface Call {
  url: string;
  init?: RequestInit;
}

/** fetch stub that replays canned responses and records each call. */
function fakeFetch(responses: Array<{ status: number; body: unknown }>) {
  const calls: Call[] = [];
  const fn = async (url: string, init?: RequestInit): Promise<Response> => {
    calls.push({ url, init });
    const next = responses.shift();
    if (!next) throw new Error("unexpected request: " + url);
    return new Response(JSON.stringify(next.body), {
      status: next.status,
      headers: { "Content-Type": "application/json" },
    });
  };
  return { fn, calls };
}

describe("ChatClient", () => {
  it("builds routes off the base url", async () => {
    const { fn, calls } = fakeFetch([
      { status: 200, body: { status: "ok", mode: "e2e", domains: [], sessions: 0 } },
    ]);
    const client = new ChatClient("http://host:9", fn);
    const health = await client.health();
    expect(health.mode).toBe("e2e");
    expect(calls[0].url).toBe("http://host:9/api/health");
    expect(calls[0].init?.method).toBe("GET");
    expect(calls[0].init?.body).toBeUndefined();
  });

  it("posts JSON with the content type set", async () => {
    const { fn, calls } = fakeFetch([
      { status: 201, body: { session_id: "a1", mode: "e2e", domains: [], max_turns: 40 } },
    ]);
    const session = await new ChatClient("", fn).createSession();
    expect(session.session_id).toBe("a1");
    expect(calls[0].url).toBe("/api/sessions");
    expect(calls[0].init?.headers).toEqual({ "Content-Type": "application/json" });
    expect(calls[0].init?.body).toBe("{}");
  });

  it("sends the utterance text, and the state only when given", async () => {
    const turn = {
      turn_index: 1, user: "hi", state: { inform: {}, request: {} }, acts: [],
      response_delex: "", response: "", db_counts: {}, truncated: false,
    };
    const { fn, calls } = fakeFetch([
      { status: 200, body: turn },
      { status: 200, body: turn },
    ]);
    const client = new ChatClient("", fn);
    await client.sendUtterance("a1", "hi");
    expect(JSON.parse(String(calls[0].init?.body))).toEqual({ text: "hi" });

    const state = { inform: { eatery: { food: ["thai"] } }, request: {} };
    await client.sendUtterance("a1", "hi", state);
    expect(JSON.parse(String(calls[1].init?.body))).toEqual({ text: "hi", state });
    expect(calls[1].url).toBe("/api/sessions/a1/utterance");
  });

  it("addresses transcript, trace, and delete by session", async () => {
    const { fn, calls } = fakeFetch([
      { status: 200, body: { session_id: "a1", mode: "e2e", turns: [] } },
      { status: 200, body: { turn_index: 2, levels: {} } },
      { status: 200, body: { deleted: true, session_id: "a1" } },
    ]);
    const client = new ChatClient("", fn);
    await client.transcript("a1");
    await client.trace("a1", 2);
    await client.deleteSession("a1");
    expect(calls.map((c) => c.url)).toEqual([
      "/api/sessions/a1/transcript",
      "/api/sessions/a1/trace/2",
      "/api/sessions/a1",
    ]);
    expect(calls[2].init?.method).toBe("DELETE");
  });

  it("turns error payloads into ApiError with the server message", async () => {
    const { fn } = fakeFetch([{ status: 400, body: { error: "text must be a non-empty string" } }]);
    const err = await new ChatClient("", fn)
      .sendUtterance("a1", "")
      .then(() => null, (e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(400);
    expect((err as ApiError).message).toMatch(/non-empty/);
  });

  it("falls back to the status line when the error body is not JSON", async () => {
    const fn = async (): Promise<Response> =>
      new Response("gone", { status: 404, statusText: "Not Found" });
    const err = await new ChatClient("", fn)
      .transcript("missing")
      .then(() => null, (e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).message).toBe("404 Not Found");
  });
});
