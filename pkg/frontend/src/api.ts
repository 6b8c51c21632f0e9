import type {
  ApiErrorBody,
  CreateSessionRequest,
  Recommendation,
  SessionResource,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public field?: string,
  ) {
    super(message);
  }
}

async function throwApiError(response: Response): Promise<never> {
  let body: ApiErrorBody | null = null;
  try {
    body = (await response.json()) as ApiErrorBody;
  } catch {
    // non-JSON error body; fall through to a generic message
  }
  throw new ApiError(
    response.status,
    body?.code ?? "http_error",
    body?.message ?? `request failed with status ${response.status}`,
    body?.field,
  );
}

export class ApiClient {
  constructor(public baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.url(path), {
      headers: { "content-type": "application/json" },
      ...init,
    });
    if (!response.ok) await throwApiError(response);
    return (await response.json()) as T;
  }

  createSession(body: CreateSessionRequest): Promise<SessionResource> {
    return this.request("/sessions", { method: "POST", body: JSON.stringify(body) });
  }

  getSession(id: string): Promise<SessionResource> {
    return this.request(`/sessions/${id}`);
  }

  getRecommendation(id: string, batch: number): Promise<Recommendation> {
    const query = batch > 1 ? `?batch=${batch}` : "";
    return this.request(`/sessions/${id}/recommendation${query}`);
  }

  postObservation(id: string, design: string, result: 0 | 1): Promise<SessionResource> {
    return this.request(`/sessions/${id}/observations`, {
      method: "POST",
      body: JSON.stringify({ design, result }),
    });
  }

  undoLast(id: string): Promise<SessionResource> {
    return this.request(`/sessions/${id}/observations/last`, { method: "DELETE" });
  }

  async fetchLog(id: string): Promise<string> {
    const response = await fetch(this.url(`/sessions/${id}/log`));
    if (!response.ok) await throwApiError(response);
    return response.text();
  }
}
