import type { AgentTurn, Transcript } from "./types.js";

export class ApiError extends Error {
  constructor(message: string, readonly status?: number) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Thin client over the documented session endpoints. */
export class AgentApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(`service unreachable: ${String(err)}`);
    }
    if (!response.ok) {
      let detail = "";
      try {
        detail = JSON.stringify(await response.json());
      } catch {
        detail = response.statusText;
      }
      throw new ApiError(`HTTP ${response.status}: ${detail}`, response.status);
    }
    return (await response.json()) as T;
  }

  async createSession(): Promise<string> {
    const doc = await this.request<{ session_id: string }>("/sessions", {
      method: "POST",
    });
    return doc.session_id;
  }

  async sendTurn(sessionId: string, utterance: string): Promise<AgentTurn> {
    return this.request<AgentTurn>(
      `/sessions/${encodeURIComponent(sessionId)}/turns`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ utterance }),
      },
    );
  }

  async getTranscript(sessionId: string): Promise<Transcript> {
    return this.request<Transcript>(
      `/sessions/${encodeURIComponent(sessionId)}`,
    );
  }
}
