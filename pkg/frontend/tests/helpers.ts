import recorded from "./fixtures/recorded_session.json";
import type { AgentTurn, Transcript } from "../src/types.js";

export interface Recorded {
  create_session: { session_id: string };
  turns: AgentTurn[];
  transcript: Transcript;
}

export const fixture = recorded as unknown as Recorded;

function json(doc: unknown, status = 200): Response {
  return new Response(JSON.stringify(doc), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

/** A fetch stand-in replaying the recorded service responses. */
export function replayFetch(log: { calls: Array<[string, RequestInit?]> }) {
  let turnCursor = 0;
  return async (input: string, init?: RequestInit): Promise<Response> => {
    log.calls.push([input, init]);
    const method = init?.method ?? "GET";
    if (method === "POST" && input.endsWith("/sessions")) {
      return json(fixture.create_session);
    }
    if (method === "POST" && input.includes("/turns")) {
      const turn = fixture.turns[turnCursor];
      turnCursor = Math.min(turnCursor + 1, fixture.turns.length - 1);
      return json(turn);
    }
    if (method === "GET") {
      return json(fixture.transcript);
    }
    return json({ detail: "not found" }, 404);
  };
}

export function appDom() {
  document.body.innerHTML = `
    <div id="banner" class="banner" hidden><span class="banner-text"></span>
      <button id="banner-retry" type="button">retry</button></div>
    <div id="messages"></div>
    <form id="chat-form">
      <input id="chat-input" type="text" />
      <button id="chat-send" type="submit" disabled>send</button>
    </form>`;
  return {
    messages: document.getElementById("messages") as HTMLElement,
    form: document.getElementById("chat-form") as HTMLFormElement,
    input: document.getElementById("chat-input") as HTMLInputElement,
    send: document.getElementById("chat-send") as HTMLButtonElement,
    banner: document.getElementById("banner") as HTMLElement,
    retry: document.getElementById("banner-retry") as HTMLButtonElement,
  };
}

export function memoryUrlState(initial: string | null = null) {
  let value = initial;
  return {
    get: () => value,
    set: (id: string) => {
      value = id;
    },
    current: () => value,
  };
}
