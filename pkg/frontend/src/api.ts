// REST client for the ingestion server.

import type { ReviewItem, RigidTransformDto } from "./types.js";

export class ApiClient {
  constructor(private base: string = "/api/v1") {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.base + path, init);
    if (!resp.ok) {
      const detail = await resp.text();
      throw new Error(`${init?.method ?? "GET"} ${path}: HTTP ${resp.status} ${detail}`);
    }
    return (await resp.json()) as T;
  }

  pendingReviews(): Promise<ReviewItem[]> {
    return this.json<ReviewItem[]>("/registrations?status=pending");
  }

  submitReview(
    itemId: string,
    verdict: "approve" | "reject",
    adjustment?: RigidTransformDto,
  ): Promise<ReviewItem> {
    return this.json<ReviewItem>(`/registrations/${itemId}/review`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(adjustment ? { verdict, adjustment } : { verdict }),
    });
  }

  async fetchTile(geohash: string): Promise<ArrayBuffer> {
    const resp = await fetch(`${this.base}/udt/${geohash}?format=binary`);
    if (!resp.ok) throw new Error(`tile fetch failed: HTTP ${resp.status}`);
    return resp.arrayBuffer();
  }

  streamUrl(mode: string, geohash?: string, rule?: string): string {
    const params = new URLSearchParams({ mode });
    if (geohash) params.set("geohash", geohash);
    if (rule) params.set("rule", rule);
    return `${this.base}/stream?${params}`;
  }
}

/** Vertex count parsed straight from a binary PLY header. */
export function plyVertexCount(body: ArrayBuffer): number {
  const head = new TextDecoder().decode(body.slice(0, 4096));
  const match = head.match(/element vertex (\d+)/);
  return match ? parseInt(match[1], 10) : 0;
}
