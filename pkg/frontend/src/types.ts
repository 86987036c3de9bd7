// Wire types shared with the ingestion server's REST API.

export type StreamMode = "incremental" | "frame" | "situational";

export interface StreamEvent {
  seq: number;
  kind: StreamMode | "game";
  geohash: string;
  count?: number;
  points?: string; // base64 point buffer
  deltas?: NodeDelta[];
  scores?: Record<string, number>;
}

export interface NodeDelta {
  node_id: string;
  old_team: string | null;
  new_team: string;
}

export interface RigidTransformDto {
  rotation: number[][];
  translation: number[];
}

export interface RegistrationResultDto {
  transform: RigidTransformDto;
  fitness: number;
  inlier_rmse: number | null;
  stage_timings: Record<string, number>;
  status: string;
  failure_reason?: string | null;
}

export interface ReviewItem {
  item_id: string;
  chunk_id: string;
  geohash: string;
  proposed: RegistrationResultDto;
  status: "pending" | "approved" | "rejected";
  created_at: number;
}

export interface PointBatch {
  positions: Float32Array; // xyz triples
  colors: Uint8Array; // rgba quads
  count: number;
}
