/** Typed client for the inference service with latest-wins cancellation.
 *
 * Each endpoint keeps an epoch counter: issuing a request supersedes the
 * one in flight (its fetch is aborted and its result discarded), so a burst
 * of interactions resolves to exactly the newest response.
 */

import type {
  CompleteKeypointsRequest,
  CompleteKeypointsResponse,
  GenerateRequest,
  GenerateResponse,
  Manifest,
  ServiceError,
} from "./types.js";

export type FetchLike = (
  url: string,
  init?: {
    method?: string;
    headers?: Record<string, string>;
    body?: string;
    signal?: AbortSignal;
  },
) => Promise<{ status: number; json(): Promise<unknown> }>;

/** Raised for non-2xx responses, carrying the service's error body. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly field: string | null,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** Resolution discarded because a newer request took over. */
export class Superseded extends Error {
  constructor() {
    super("superseded by a newer request");
    this.name = "Superseded";
  }
}

interface Channel {
  epoch: number;
  controller: AbortController | null;
}

export class ApiClient {
  private channels = new Map<string, Channel>();

  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) =>
      fetch(url, init as RequestInit),
  ) {}

  async manifest(): Promise<Manifest> {
    return (await this.request("GET", "/api/manifest")) as Manifest;
  }

  /** Latest-wins per endpoint: older in-flight generate calls are aborted. */
  async generate(req: GenerateRequest): Promise<GenerateResponse> {
    return (await this.latest("generate", "/api/generate", req)) as GenerateResponse;
  }

  async completeKeypoints(
    req: CompleteKeypointsRequest,
  ): Promise<CompleteKeypointsResponse> {
    return (await this.latest(
      "complete",
      "/api/complete-keypoints",
      req,
    )) as CompleteKeypointsResponse;
  }

  private channel(name: string): Channel {
    let ch = this.channels.get(name);
    if (!ch) {
      ch = { epoch: 0, controller: null };
      this.channels.set(name, ch);
    }
    return ch;
  }

  private async latest(
    name: string,
    path: string,
    body: unknown,
  ): Promise<unknown> {
    const ch = this.channel(name);
    ch.controller?.abort();
    const controller = new AbortController();
    ch.controller = controller;
    const epoch = ++ch.epoch;
    try {
      const result = await this.request("POST", path, body, controller.signal);
      if (ch.epoch !== epoch) throw new Superseded();
      return result;
    } catch (err) {
      if (ch.epoch !== epoch) throw new Superseded();
      throw err;
    }
  }

  private async request(
    method: string,
    path: string,
    body?: unknown,
    signal?: AbortSignal,
  ): Promise<unknown> {
    const init: Parameters<FetchLike>[1] = { method };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
      init.headers = { "Content-Type": "application/json" };
    }
    if (signal) init.signal = signal;
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    const payload = (await resp.json()) as unknown;
    if (resp.status >= 200 && resp.status < 300) return payload;
    const err = payload as ServiceError;
    throw new ApiError(resp.status, err.field ?? null, err.error ?? `HTTP ${resp.status}`);
  }
}
