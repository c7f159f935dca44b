import type { GraphDoc, GraphEditDoc, ScenePayload } from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    public readonly status: number,
  ) {
    super(message);
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  let res: Response;
  try {
    res = await fetch(`${base}${path}`, init);
  } catch (e) {
    throw new ApiError(`server unreachable: ${String(e)}`, 0);
  }
  const body = await res.json().catch(() => ({}));
  if (!res.ok) {
    throw new ApiError(body.error ?? `HTTP ${res.status}`, res.status);
  }
  return body as T;
}

export class Client {
  constructor(readonly base: string) {}

  health(): Promise<{ version: string; checkpoint_hash: string }> {
    return request(this.base, "/health");
  }

  vocab(): Promise<{ relations: string[]; categories: string[] }> {
    return request(this.base, "/vocab");
  }

  generate(graph: GraphDoc, seed?: number): Promise<ScenePayload> {
    return request(this.base, "/generate", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(seed === undefined ? { graph } : { graph, seed }),
    });
  }

  manipulate(
    graph: GraphDoc,
    edit: GraphEditDoc,
    seed?: number,
    prevNoiseSeed?: number,
  ): Promise<ScenePayload> {
    const body: Record<string, unknown> = { graph, edit };
    if (seed !== undefined) body.seed = seed;
    if (prevNoiseSeed !== undefined) body.prev_noise_seed = prevNoiseSeed;
    return request(this.base, "/manipulate", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }
}
