import { describe, expect, it } from "vitest";

import { AgentApi, ApiError } from "../src/api.js";
import { fixture, replayFetch } from "./helpers.js";

describe("AgentApi", () => {
  it("creates sessions via POST /sessions", async () => {
    const log = { calls: [] as Array<[string, RequestInit?]> };
    const api = new AgentApi("", replayFetch(log));
    const id = await api.createSession();
    expect(id).toBe(fixture.create_session.session_id);
    expect(log.calls[0][0]).toBe("/sessions");
    expect(log.calls[0][1]?.method).toBe("POST");
  });

  it("sends turns with a JSON utterance body", async () => {
    const log = { calls: [] as Array<[string, RequestInit?]> };
    const api = new AgentApi("", replayFetch(log));
    const turn = await api.sendTurn("recorded-session-1", "hello there");
    expect(turn).toEqual(fixture.turns[0]);
    const [url, init] = log.calls[0];
    expect(url).toBe("/sessions/recorded-session-1/turns");
    expect(JSON.parse(String(init?.body))).toEqual({ utterance: "hello there" });
  });

  it("fetches transcripts via GET /sessions/{id}", async () => {
    const log = { calls: [] as Array<[string, RequestInit?]> };
    const api = new AgentApi("", replayFetch(log));
    const transcript = await api.getTranscript("recorded-session-1");
    expect(transcript.turns).toHaveLength(fixture.transcript.turns.length);
    expect(log.calls[0][0]).toBe("/sessions/recorded-session-1");
  });

  it("maps HTTP errors to ApiError with status", async () => {
    const api = new AgentApi("", async () =>
      new Response(JSON.stringify({ detail: "boom" }), { status: 502 }),
    );
    await expect(api.createSession()).rejects.toMatchObject({
      name: "ApiError",
      status: 502,
    });
  });

  it("maps network failures to ApiError without status", async () => {
    const api = new AgentApi("", async () => {
      throw new TypeError("fetch failed");
    });
    const err = await api.createSession().catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBeUndefined();
  });
});
