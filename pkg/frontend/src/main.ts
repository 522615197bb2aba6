import { AgentApi } from "./api.js";
import { appendTurn, renderTranscript } from "./view.js";

export interface AppElements {
  messages: HTMLElement;
  form: HTMLFormElement;
  input: HTMLInputElement;
  send: HTMLButtonElement;
  banner: HTMLElement;
  retry: HTMLButtonElement;
}

/** Wire the chat page: one in-flight turn per session, the service is the
 * only source of truth, and the session id lives in the URL so a reload
 * restores the transcript. */
export async function startApp(
  elements: AppElements,
  api: AgentApi,
  urlState: { get(): string | null; set(id: string): void },
): Promise<{ sessionId: string }> {
  let pending = false;
  let lastFailed: string | null = null;

  const setBanner = (message: string | null) => {
    elements.banner.hidden = message === null;
    elements.banner.querySelector(".banner-text")!.textContent = message ?? "";
  };

  const refreshControls = () => {
    elements.send.disabled = pending || elements.input.value.trim() === "";
    elements.input.disabled = pending;
  };

  let sessionId: string;
  const existing = urlState.get();
  if (existing) {
    sessionId = existing;
    try {
      const transcript = await api.getTranscript(sessionId);
      renderTranscript(elements.messages, transcript.turns);
      setBanner(null);
    } catch (err) {
      setBanner(`could not restore session: ${String(err)}`);
    }
  } else {
    sessionId = await api.createSession();
    urlState.set(sessionId);
  }

  const submit = async (utterance: string) => {
    if (pending || utterance.trim() === "") return;
    pending = true;
    lastFailed = null;
    refreshControls();
    try {
      const turn = await api.sendTurn(sessionId, utterance);
      appendTurn(elements.messages, turn);
      elements.input.value = "";
      setBanner(null);
    } catch (err) {
      lastFailed = utterance;
      setBanner(`service unreachable. ${String(err)}`);
    } finally {
      pending = false;
      refreshControls();
    }
  };

  elements.form.addEventListener("submit", (event) => {
    event.preventDefault();
    void submit(elements.input.value);
  });
  elements.input.addEventListener("input", refreshControls);
  elements.retry.addEventListener("click", () => {
    if (lastFailed !== null) void submit(lastFailed);
  });
  refreshControls();
  return { sessionId };
}

function urlSessionState() {
  return {
    get: () => new URLSearchParams(window.location.search).get("session"),
    set: (id: string) => {
      const url = new URL(window.location.href);
      url.searchParams.set("session", id);
      window.history.replaceState(null, "", url.toString());
    },
  };
}

export function bootFromDocument(): void {
  const elements: AppElements = {
    messages: document.getElementById("messages")!,
    form: document.getElementById("chat-form") as HTMLFormElement,
    input: document.getElementById("chat-input") as HTMLInputElement,
    send: document.getElementById("chat-send") as HTMLButtonElement,
    banner: document.getElementById("banner")!,
    retry: document.getElementById("banner-retry") as HTMLButtonElement,
  };
  const api = new AgentApi("");
  void startApp(elements, api, urlSessionState()).catch((err) => {
    elements.banner.hidden = false;
    elements.banner.querySelector(".banner-text")!.textContent =
      `could not reach the agent service: ${String(err)}`;
  });
}

if (typeof document !== "undefined" && document.getElementById("chat-form")) {
  bootFromDocument();
}
