// Series transforms for the reward/entropy panels: phase segmentation for
// boundary markers and min-max bucket downsampling so 10k-point runs render
// in a handful of line segments without losing spikes.

import { MetricRecord } from "./api.js";

export interface Point {
  x: number;
  y: number;
}

export interface PhaseSegment {
  phase: string;
  startUpdate: number;
  endUpdate: number;
}

export function phaseSegments(series: MetricRecord[]): PhaseSegment[] {
  const segments: PhaseSegment[] = [];
  for (const record of series) {
    const last = segments[segments.length - 1];
    if (!last || last.phase !== record.phase) {
      segments.push({ phase: record.phase, startUpdate: record.update, endUpdate: record.update });
    } else {
      last.endUpdate = record.update;
    }
  }
  return segments;
}

export function boundaries(segments: PhaseSegment[]): number[] {
  return segments.slice(1).map((s) => s.startUpdate);
}

export function extract(series: MetricRecord[], key: "mean_reward" | "entropy"): Point[] {
  return series.map((r) => ({ x: r.update, y: r[key] }));
}

// Keeps first/last plus per-bucket min and max; output length <= 2*buckets+2.
export function downsample(points: Point[], buckets: number): Point[] {
  if (buckets < 1 || points.length <= 2 * buckets + 2) {
    return points.slice();
  }
  const out: Point[] = [points[0]];
  const span = (points.length - 2) / buckets;
  for (let b = 0; b < buckets; b++) {
    const lo = 1 + Math.floor(b * span);
    const hi = Math.min(points.length - 1, 1 + Math.floor((b + 1) * span));
    if (lo >= hi) {
      continue;
    }
    let min = points[lo];
    let max = points[lo];
    for (let i = lo; i < hi; i++) {
      if (points[i].y < min.y) min = points[i];
      if (points[i].y > max.y) max = points[i];
    }
    const pair = min.x <= max.x ? [min, max] : [max, min];
    for (const p of pair) {
      if (out[out.length - 1] !== p) {
        out.push(p);
      }
    }
  }
  out.push(points[points.length - 1]);
  return out;
}

export interface ChartModel {
  points: Point[];
  boundaries: number[];
  segments: PhaseSegment[];
  yMin: number;
  yMax: number;
}

export function chartModel(
  series: MetricRecord[],
  key: "mean_reward" | "entropy",
  buckets = 240,
): ChartModel {
  const segments = phaseSegments(series);
  const points = downsample(extract(series, key), buckets);
  let yMin = Infinity;
  let yMax = -Infinity;
  for (const p of points) {
    yMin = Math.min(yMin, p.y);
    yMax = Math.max(yMax, p.y);
  }
  if (!points.length) {
    yMin = 0;
    yMax = 1;
  }
  if (yMin === yMax) {
    yMax = yMin + 1;
  }
  return { points, boundaries: boundaries(segments), segments, yMin, yMax };
}
