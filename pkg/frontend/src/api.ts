/** Typed fetch client for the concept service. Every call returns a
 *  Result instead of throwing so callers handle failure inline. */

import type {
  ApiErrorBody,
  ConceptsPage,
  Concept,
  HealthInfo,
  InferResult,
  LogPage,
  NeighborsPage,
  PatternSetInfo,
  RefineAck,
  RefineOp,
  Role,
} from "./types";

export interface ApiError {
  /** HTTP status, or 0 when the request never reached the server. */
  status: number;
  code: string;
  message: string;
}

export type Result<T> = { ok: true; value: T } | { ok: false; error: ApiError };

function ok<T>(value: T): Result<T> {
  return { ok: true, value };
}

function fail<T>(error: ApiError): Result<T> {
  return { ok: false, error };
}

async function parseError(res: Response): Promise<ApiError> {
  let body: ApiErrorBody | null = null;
  try {
    body = (await res.json()) as ApiErrorBody;
  } catch {
    body = null;
  }
  return {
    status: res.status,
    code: body?.code ?? "http_error",
    message: body?.message ?? `HTTP ${res.status}`,
  };
}

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  private async request<T>(path: string, init?: RequestInit): Promise<Result<T>> {
    let res: Response;
    try {
      res = await fetch(this.baseUrl + path, init);
    } catch (exc) {
      return fail({ status: 0, code: "network", message: String(exc) });
    }
    if (!res.ok) return fail(await parseError(res));
    try {
      return ok((await res.json()) as T);
    } catch (exc) {
      return fail({ status: res.status, code: "bad_json", message: String(exc) });
    }
  }

  private post<T>(path: string, body: unknown): Promise<Result<T>> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  health(): Promise<Result<HealthInfo>> {
    return this.request("/health");
  }

  concepts(role?: Role): Promise<Result<ConceptsPage>> {
    const q = role ? `?role=${encodeURIComponent(role)}` : "";
    return this.request(`/concepts${q}`);
  }

  concept(id: number): Promise<Result<Concept>> {
    return this.request(`/concepts/${id}`);
  }

  patterns(): Promise<Result<PatternSetInfo>> {
    return this.request("/patterns");
  }

  neighbors(mention: string, role: Role, k = 5): Promise<Result<NeighborsPage>> {
    const q = new URLSearchParams({ mention, role, k: String(k) });
    return this.request(`/neighbors?${q}`);
  }

  refineLog(since = 0): Promise<Result<LogPage>> {
    return this.request(`/refine/log?since=${since}`);
  }

  infer(text: string, id?: string): Promise<Result<InferResult>> {
    const body: Record<string, unknown> = { text };
    if (id !== undefined) body.id = id;
    return this.post("/infer", body);
  }

  refine(op: RefineOp, baseSeq?: number, actor?: string): Promise<Result<RefineAck>> {
    const body: Record<string, unknown> = { op: op.op, params: op.params };
    if (baseSeq !== undefined) body.base_seq = baseSeq;
    if (actor !== undefined) body.actor = actor;
    return this.post("/refine", body);
  }
}
