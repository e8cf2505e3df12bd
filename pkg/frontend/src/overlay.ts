/**
 * Residual overlay model: pairs of target and reprojected points with the
 * server-reported per-point errors.  Every number is read straight from the
 * result document; the UI never recomputes residuals (display consistency).
 */

import { ResultDocument } from "./types.js";

export interface ResidualSegment {
  index: number;
  target: [number, number];
  reprojected: [number, number];
  error: number; // pixels, as reported by the service
}

export function residualSegments(result: ResultDocument): ResidualSegment[] {
  const { targets, reprojected, per_point_error } = result;
  if (targets.length !== reprojected.length || targets.length !== per_point_error.length) {
    throw new Error("result document is inconsistent across landmark arrays");
  }
  return targets.map((target, index) => ({
    index,
    target: [target[0], target[1]],
    reprojected: [reprojected[index][0], reprojected[index][1]],
    error: per_point_error[index],
  }));
}

export function worstResiduals(result: ResultDocument, count = 5): ResidualSegment[] {
  return residualSegments(result)
    .slice()
    .sort((a, b) => b.error - a.error)
    .slice(0, count);
}

export interface TracePoint {
  iteration: number;
  eDef: number;
  eError: number;
}

export function energyTrace(result: ResultDocument): TracePoint[] {
  return result.trace.map((entry) => ({
    iteration: entry.iteration,
    eDef: entry.e_def,
    eError: entry.e_error,
  }));
}
