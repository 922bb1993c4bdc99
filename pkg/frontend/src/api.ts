// Typed client for the retrieval API. At most one query request is in
// flight: submitting again aborts the previous one.

export interface Neighbor {
  patch_id: string;
  distance: number;
  label: number | null;
  thumbnail_url: string;
  saliency_url: string | null;
}

export interface QueryResponse {
  neighbors: Neighbor[];
  suggested_label: number | null;
  margin_score: number | null;
  query_embedding: number[];
}

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

export class ApiClient {
  private inFlight: AbortController | null = null;

  constructor(private baseUrl: string = "") {}

  async query(imageBase64: string, k: number, includeSaliency: boolean): Promise<QueryResponse> {
    this.inFlight?.abort();
    const controller = new AbortController();
    this.inFlight = controller;
    const res = await fetch(`${this.baseUrl}/api/query`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ image: imageBase64, k, include_saliency: includeSaliency }),
      signal: controller.signal,
    });
    if (this.inFlight === controller) {
      this.inFlight = null;
    }
    if (!res.ok) {
      let detail = `request failed with status ${res.status}`;
      try {
        const body = (await res.json()) as { detail?: string };
        if (body.detail) detail = body.detail;
      } catch {
        // non-JSON error body; keep the status message
      }
      throw new ApiError(res.status, detail);
    }
    return (await res.json()) as QueryResponse;
  }

  async stats(): Promise<{ store_size: number; dimension: number; checkpoint_hash: string }> {
    const res = await fetch(`${this.baseUrl}/api/stats`);
    if (!res.ok) throw new ApiError(res.status, `stats failed with status ${res.status}`);
    return await res.json();
  }
}
