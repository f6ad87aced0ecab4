import type {
  CampaignSnapshot,
  CreateCampaignRequest,
  DecisionRequest,
} from "./types.js";

export class ServiceError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`service returned ${status}: ${detail}`);
  }
}

/** Outcome of a decision submission; conflicts and validation rejections are
 * expected states the UI renders, not exceptions. */
export interface DecisionResult {
  ok: boolean;
  status: number;
  detail: string;
}

async function errorDetail(resp: Response): Promise<string> {
  try {
    const body = (await resp.json()) as { detail?: string };
    return body.detail ?? resp.statusText;
  } catch {
    return resp.statusText;
  }
}

/** Thin typed client over the operator service endpoints. */
export class ServiceClient {
  constructor(
    public readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    return this.fetchFn(`${this.baseUrl}${path}`, init);
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.request(path, init);
    if (!resp.ok) {
      throw new ServiceError(resp.status, await errorDetail(resp));
    }
    return (await resp.json()) as T;
  }

  createCampaign(
    req: CreateCampaignRequest,
  ): Promise<{ campaign_id: string; mode: string }> {
    return this.json("/campaigns", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(req),
    });
  }

  listCampaigns(): Promise<CampaignSnapshot[]> {
    return this.json("/campaigns");
  }

  getCampaign(id: string): Promise<CampaignSnapshot> {
    return this.json(`/campaigns/${id}`);
  }

  async submitDecision(id: string, req: DecisionRequest): Promise<DecisionResult> {
    const resp = await this.request(`/campaigns/${id}/approval`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(req),
    });
    return {
      ok: resp.ok,
      status: resp.status,
      detail: resp.ok ? "" : await errorDetail(resp),
    };
  }

  stopCampaign(id: string): Promise<{ stopping: boolean }> {
    return this.json(`/campaigns/${id}/stop`, { method: "POST" });
  }

  async fetchTranscript(id: string): Promise<string> {
    const resp = await this.request(`/campaigns/${id}/transcript`);
    if (!resp.ok) {
      throw new ServiceError(resp.status, await errorDetail(resp));
    }
    return resp.text();
  }

  fetchReplay(id: string): Promise<{ steps: unknown[]; stop_reason: string | null }> {
    return this.json(`/campaigns/${id}/replay`);
  }

  listTranscripts(): Promise<{ campaign_id: string; stop_reason: string | null }[]> {
    return this.json("/transcripts");
  }
}
