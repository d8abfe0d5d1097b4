/** Thin typed client over the service's HTTP interface. */

import type {
  EpisodeEvent,
  EpisodeView,
  ErrorBody,
  RetrievalEntry,
  WorkspaceView,
} from "./types.js";

export type FetchLike = (
  url: string,
  init?: RequestInit
) => Promise<Response>;

export class ApiError extends Error {
  readonly code: string;
  readonly status: number;
  readonly rule?: string;
  readonly constituent?: string;

  constructor(status: number, body: ErrorBody) {
    super(body.message || body.code);
    this.code = body.code;
    this.status = status;
    this.rule = body.rule;
    this.constituent = body.constituent;
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (...args) => fetch(...args)
  ) {}

  private async call<T>(
    method: string,
    path: string,
    body?: unknown
  ): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? {} : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const data = await response.json();
    if (!response.ok) {
      throw new ApiError(response.status, data as ErrorBody);
    }
    return data as T;
  }

  listModels(): Promise<{ models: string[] }> {
    return this.call("GET", "/models");
  }

  validateModel(modelId: string): Promise<{ ok: boolean; report: unknown }> {
    return this.call("POST", `/models/${modelId}/validate`);
  }

  createEpisode(body: {
    model_id: string;
    episode_id?: string;
    subject?: unknown;
    initial_values?: Record<string, unknown>;
  }): Promise<EpisodeView> {
    return this.call("POST", "/episodes", body);
  }

  getEpisode(episodeId: string): Promise<EpisodeView> {
    return this.call("GET", `/episodes/${episodeId}`);
  }

  choices(episodeId: string): Promise<{ choices: { id: string }[] }> {
    return this.call("GET", `/episodes/${episodeId}/choices`);
  }

  choose(episodeId: string, activity: string): Promise<EpisodeView> {
    return this.call("POST", `/episodes/${episodeId}/choose`, { activity });
  }

  workspace(episodeId: string, activity: string): Promise<WorkspaceView> {
    return this.call("GET", `/episodes/${episodeId}/workspace/${activity}`);
  }

  action(
    episodeId: string,
    activity: string,
    op: string,
    inputs: string[],
    params: Record<string, unknown>
  ): Promise<{ result: unknown; workspace: WorkspaceView }> {
    return this.call("POST", `/episodes/${episodeId}/action`, {
      activity,
      op,
      inputs,
      params,
    });
  }

  complete(
    episodeId: string,
    activity: string,
    goalValues?: Record<string, unknown>
  ): Promise<EpisodeView> {
    return this.call("POST", `/episodes/${episodeId}/complete`, {
      activity,
      goal_values: goalValues,
    });
  }

  fail(
    episodeId: string,
    failed: string,
    cause: string
  ): Promise<{ replan: unknown; episode: EpisodeView }> {
    return this.call("POST", `/episodes/${episodeId}/fail`, { failed, cause });
  }

  discretion(episodeId: string, edit: Record<string, unknown>): Promise<EpisodeView> {
    return this.call("POST", `/episodes/${episodeId}/discretion`, { edit });
  }

  eventLog(episodeId: string): Promise<{ events: EpisodeEvent[] }> {
    return this.call("GET", `/episodes/${episodeId}/log`);
  }

  retrieve(
    probe: { elements: { typology_path: string[]; value?: unknown }[] },
    k = 5
  ): Promise<{ ranked: RetrievalEntry[] }> {
    return this.call("POST", "/retrieve", { probe, k });
  }

  /** Raw response for the event stream; parsing lives in events.ts. */
  eventStream(episodeId: string, since: number): Promise<Response> {
    return this.fetchFn(
      `${this.baseUrl}/episodes/${episodeId}/events?since=${since}`,
      { method: "GET" }
    );
  }
}
