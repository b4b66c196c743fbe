/** Typed client for the evaluation service HTTP API. */

export interface Progress {
  rated: number;
  target: number;
}

export interface ChatTurn {
  index: number;
  user: string;
  system: string;
  debug?: {
    predicted_entity: string | null;
    user_intent: string;
    kb_status: string;
  };
}

export interface SessionView {
  session_id: string;
  tester_id: string;
  goal_card: string;
  turns: ChatTurn[];
  ended: boolean;
  rated: boolean;
  progress: Progress;
}

export interface Rating {
  fluency: number;
  coherency: number;
  success: number;
  comment?: string;
}

export interface Report {
  count: number;
  fluency: number | null;
  coherency: number | null;
  success: number | null;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, {
        method,
        headers: body === undefined ? undefined : { "Content-Type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(0, `network failure: ${String(err)}`);
    }
    const payload = (await response.json().catch(() => ({}))) as Record<string, unknown>;
    if (!response.ok) {
      throw new ApiError(response.status, String(payload["error"] ?? response.statusText));
    }
    return payload as T;
  }

  createSession(testerId: string): Promise<SessionView> {
    return this.call("POST", "/sessions", { tester_id: testerId });
  }

  getSession(sessionId: string): Promise<SessionView> {
    return this.call("GET", `/sessions/${sessionId}`);
  }

  sendMessage(sessionId: string, text: string): Promise<ChatTurn> {
    return this.call("POST", `/sessions/${sessionId}/messages`, { text });
  }

  endDialogue(sessionId: string): Promise<void> {
    return this.call("POST", `/sessions/${sessionId}/end`);
  }

  submitRating(sessionId: string, rating: Rating): Promise<Report> {
    return this.call("POST", `/sessions/${sessionId}/rating`, rating);
  }

  report(): Promise<Report> {
    return this.call("GET", "/report");
  }
}
