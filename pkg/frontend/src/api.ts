/** Typed client for the chat service HTTP contract.
 *
 * Every method maps to one route; field names mirror the wire format
 * exactly so payloads round-trip through JSON without translation.
 */

export type Mode = "dst" | "c2t" | "e2e";

/** Dialogue state as it appears on the wire.
 *
 * `inform` maps domain to slot to the value's token list; `request`
 * maps domain to the sorted list of slots the user asked about.
 */
export interface DialogueState {
  inform: Record<string, Record<string, string[]>>;
  request: Record<string, string[]>;
}

export interface HealthInfo {
  status: string;
  mode: Mode;
  domains: string[];
  sessions: number;
}

export interface SessionInfo {
  session_id: string;
  mode: Mode;
  domains: string[];
  max_turns: number;
}

export interface ActScore {
  label: string;
  probability: number;
}

/** One completed exchange, as returned by the utterance route. */
export interface TurnView {
  turn_index: number;
  user: string;
  state: DialogueState;
  acts: ActScore[];
  response_delex: string;
  response: string;
  db_counts: Record<string, number>;
  truncated: boolean;
  trace_url?: string;
}

export interface Transcript {
  session_id: string;
  mode: Mode;
  turns: TurnView[];
}

export type TraceLevel = "slot" | "domain" | "fuse" | "generator";

/** One attention stage: weights are [heads][queries][keys] and the
 * label arrays name the query rows and key columns. */
export interface AttentionStage {
  name: string;
  weights: number[][][];
  query_labels: string[];
  key_labels: string[];
}

/** Per-turn attention bundle. Each level holds its blocks in forward
 * order; each block lists its stages in execution order. `fuse` and
 * `generator` are absent for modes that skip those components. */
export interface TraceView {
  turn_index: number;
  levels: Partial<Record<TraceLevel, AttentionStage[][]>>;
}

export interface DeleteResult {
  deleted: boolean;
  session_id: string;
}

/** A 4xx/5xx answer; `message` carries the server's error string. */
export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ChatClient {
  private readonly fetchFn: FetchLike;

  constructor(
    readonly baseUrl: string = "",
    fetchFn?: FetchLike,
  ) {
    // wrap instead of storing fetch directly: a bare reference loses
    // its window binding in browsers
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  health(): Promise<HealthInfo> {
    return this.request("GET", "/api/health");
  }

  createSession(): Promise<SessionInfo> {
    return this.request("POST", "/api/sessions", {});
  }

  /** Posts one user turn. `state` is required by `c2t` services and
   * rejected by the others, matching the contract. */
  sendUtterance(sessionId: string, text: string, state?: DialogueState): Promise<TurnView> {
    const body: Record<string, unknown> = { text };
    if (state !== undefined) body.state = state;
    return this.request("POST", `/api/sessions/${sessionId}/utterance`, body);
  }

  transcript(sessionId: string): Promise<Transcript> {
    return this.request("GET", `/api/sessions/${sessionId}/transcript`);
  }

  trace(sessionId: string, turn: number): Promise<TraceView> {
    return this.request("GET", `/api/sessions/${sessionId}/trace/${turn}`);
  }

  deleteSession(sessionId: string): Promise<DeleteResult> {
    return this.request("DELETE", `/api/sessions/${sessionId}`);
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
      init.headers = { "Content-Type": "application/json" };
    }
    const res = await this.fetchFn(this.baseUrl + path, init);
    let payload: unknown = undefined;
    try {
      payload = await res.json();
    } catch {
      // non-JSON body; fall through to the status check
    }
    if (!res.ok) {
      const message =
        payload !== null && typeof payload === "object" && "error" in payload
          ? String((payload as { error: unknown }).error)
          : `${res.status} ${res.statusText}`;
      throw new ApiError(res.status, message);
    }
    return payload as T;
  }
}
