/**
 * JSON document shapes shared verbatim with the fitting service.
 * The service is the source of truth; the UI never derives numbers itself.
 */

export interface LandmarkDocument {
  version: number;
  indices: number[];
  points: [number, number][];
}

export interface CameraDocument {
  s: number;
  pitch: number;
  yaw: number;
  roll: number;
  tx: number;
  ty: number;
}

export interface TraceEntry {
  iteration: number;
  e_def: number;
  e_lan: number;
  e_error: number;
  e_def_post_w: number | null;
}

export interface MeshDocument {
  version: number;
  vertices: number[]; // flat xyz triples
  faces: number[];    // flat index triples
}

export interface ResultDocument {
  schema: number;
  version: number;
  e_error: number;
  exit_reason: string;
  camera: CameraDocument;
  weights: { rotation: number[]; scale: number[] };
  trace: TraceEntry[];
  targets: [number, number][];
  reprojected: [number, number][];
  per_point_error: number[];
  mesh: MeshDocument;
}

export interface SessionStatus {
  id: string;
  status: "idle" | "fitting" | "done" | "failed";
  landmark_version: number;
  result_version: number;
  error: string;
}

export const LANDMARK_COUNT = 68;

export function validateLandmarkDocument(doc: unknown): LandmarkDocument {
  const d = doc as Partial<LandmarkDocument>;
  if (!d || !Array.isArray(d.indices) || !Array.isArray(d.points)) {
    throw new Error("landmark document needs 'indices' and 'points' arrays");
  }
  if (d.indices.length !== LANDMARK_COUNT) {
    throw new Error(`landmark document has ${d.indices.length} indices, expected ${LANDMARK_COUNT}`);
  }
  if (d.points.length !== LANDMARK_COUNT) {
    throw new Error(`landmark document has ${d.points.length} points, expected ${LANDMARK_COUNT}`);
  }
  for (const p of d.points) {
    if (!Array.isArray(p) || p.length !== 2 || !isFinite(p[0]) || !isFinite(p[1])) {
      throw new Error("every landmark point must be a finite [x, y] pair");
    }
  }
  return { version: d.version ?? 1, indices: d.indices.slice(), points: d.points.map((p) => [p[0], p[1]]) };
}
