import { describe, expect, it } from "vitest";
import { MetricRecord } from "../src/api.js";
import { boundaries, chartModel, downsample, extract, phaseSegments } from "../src/charts.js";

function record(update: number, phase: string, reward = 0.5): MetricRecord {
  return { update, phase, mean_reward: reward, entropy: 1.0 + 0.001 * update };
}

describe("phase segmentation", () => {
  it("marks one boundary for a two-phase run", () => {
    const series = [record(1, "rl1"), record(2, "rl1"), record(3, "rl2"), record(4, "rl2")];
    const segments = phaseSegments(series);
    expect(segments.map((s) => s.phase)).toEqual(["rl1", "rl2"]);
    expect(boundaries(segments)).toEqual([3]);
  });

  it("keeps the sft phase as its own visually distinct segment", () => {
    const series = [record(1, "rl1"), record(2, "sft"), record(3, "rl2")];
    expect(phaseSegments(series).map((s) => s.phase)).toEqual(["rl1", "sft", "rl2"]);
  });

  it("empty metrics produce an empty model, not a crash", () => {
    const model = chartModel([], "mean_reward");
    expect(model.points).toEqual([]);
    expect(model.boundaries).toEqual([]);
  });
});

describe("downsampling", () => {
  it("keeps small series untouched", () => {
    const points = extract([record(1, "a"), record(2, "a")], "mean_reward");
    expect(downsample(points, 100)).toEqual(points);
  });

  it("caps 10k points to the bucket budget while keeping extremes", () => {
    const points = Array.from({ length: 10_000 }, (_, i) => ({
      x: i,
      y: Math.sin(i / 50) + (i === 5000 ? 10 : 0),  // one spike
    }));
    const out = downsample(points, 240);
    expect(out.length).toBeLessThanOrEqual(2 * 240 + 2);
    const trueMax = Math.max(...points.map((p) => p.y));
    const trueMin = Math.min(...points.map((p) => p.y));
    expect(Math.max(...out.map((p) => p.y))).toBe(trueMax);
    expect(Math.min(...out.map((p) => p.y))).toBe(trueMin);
    expect(out[0]).toEqual(points[0]);
    expect(out[out.length - 1]).toEqual(points[points.length - 1]);
    const xs = out.map((p) => p.x);
    expect([...xs].sort((a, b) => a - b)).toEqual(xs);
  });

  it("renders a 10k-point model fast enough for a 1s poll budget", () => {
    const series = Array.from({ length: 10_000 }, (_, i) =>
      record(i + 1, i < 5000 ? "rl1" : "rl2", Math.random()));
    const started = performance.now();
    const model = chartModel(series, "mean_reward");
    const elapsed = performance.now() - started;
    expect(model.points.length).toBeLessThanOrEqual(482);
    expect(elapsed).toBeLessThan(100);
  });
});
