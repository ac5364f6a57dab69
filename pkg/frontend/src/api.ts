/** Typed client for the model-serving JSON API. */

export interface ModelInfo {
  latent_dim: number;
  image_shape: number[];
  conditional: boolean;
  n_classes: number;
  sigma_z: number;
  sigma_eps: number;
  step: number;
  config_digest: string;
}

export interface DirectionInfo {
  id: string;
  name: string;
  source: string;
  metadata: Record<string, unknown>;
  vector?: number[];
}

export interface ImagePayload {
  raw: number[];
  shape: number[];
  image?: string; // base64 PNG for single-channel models
}

export interface TraverseResponse {
  images: ImagePayload[];
  alphas: number[];
}

export interface EpsilonPairResponse {
  z: number[];
  z_plus_eps: number[];
  image_a: ImagePayload;
  image_b: ImagePayload;
  aux_same_prob: number;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    const body = await resp.json();
    if (!resp.ok) {
      throw new ApiError(resp.status, (body as { error?: string }).error ?? resp.statusText);
    }
    return body as T;
  }

  private post<T>(path: string, payload: unknown, signal?: AbortSignal): Promise<T> {
    return this.request<T>(path, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(payload),
      signal,
    });
  }

  modelInfo(): Promise<ModelInfo> {
    return this.request<ModelInfo>('/v1/model/info');
  }

  directions(): Promise<DirectionInfo[]> {
    return this.request<DirectionInfo[]>('/v1/directions');
  }

  generate(latent: number[], cls?: number, signal?: AbortSignal): Promise<ImagePayload> {
    const body: Record<string, unknown> = { latent };
    if (cls !== undefined) body.class = cls;
    return this.post<ImagePayload>('/v1/generate', body, signal);
  }

  traverse(
    latent: number[],
    directionId: string,
    alphas: number[],
    signal?: AbortSignal,
  ): Promise<TraverseResponse> {
    return this.post<TraverseResponse>(
      '/v1/traverse',
      { latent, direction_id: directionId, alphas },
      signal,
    );
  }

  epsilonPair(
    sigmaEps: number,
    seed: number,
    latent?: number[],
    signal?: AbortSignal,
  ): Promise<EpsilonPairResponse> {
    const body: Record<string, unknown> = { sigma_eps: sigmaEps, seed };
    if (latent) body.latent = latent;
    return this.post<EpsilonPairResponse>('/v1/epsilon_pair', body, signal);
  }
}
