// Live session statistics for the overlay.

import { LatencyAbr } from "./abr.js";
import { FrameMeta } from "./viewport.js";

export interface StatsSnapshot {
  level: number;
  resolution: string;
  emaMbps: number;
  lastLatencyMs: number;
  lastRenderMs: number;
  switchCount: number;
}

export function snapshot(abr: LatencyAbr, lastFrame: FrameMeta | null): StatsSnapshot {
  const profile = abr.profile();
  return {
    level: abr.currentLevel,
    resolution: `${profile.width}x${profile.height}`,
    emaMbps: abr.estimator.ema === null ? 0 : (abr.estimator.ema * 8) / 1e6,
    lastLatencyMs: lastFrame?.durationMs ?? 0,
    lastRenderMs: lastFrame?.renderMs ?? 0,
    switchCount: abr.switchCount,
  };
}

export function formatOverlay(stats: StatsSnapshot): string {
  return [
    `L${stats.level} ${stats.resolution}`,
    `${stats.emaMbps.toFixed(2)} Mbps`,
    `${stats.lastLatencyMs.toFixed(0)} ms (render ${stats.lastRenderMs.toFixed(1)} ms)`,
    `${stats.switchCount} switches`,
  ].join(" | ");
}
