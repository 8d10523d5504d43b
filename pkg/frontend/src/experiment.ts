// Automated trace replay through the viewport path, producing the same CSV
// schema as the headless harness.

import { LatencyAbr } from "./abr.js";
import { Pose } from "./camera.js";
import { ViewportLoop } from "./viewport.js";

export interface TraceEntry {
  tMs: number;
  azimuthDeg: number;
  elevationDeg: number;
  translation: [number, number, number];
}

export interface ReplayRow {
  frame_id: number;
  t_send: number;
  t_recv: number;
  azimuth_deg: number;
  elevation_deg: number;
  tx: number;
  ty: number;
  tz: number;
  level: number;
  width: number;
  height: number;
  jpeg_quality: number;
  bytes: number;
  render_ms: number;
  ema_bps: number;
  ok: boolean;
  error: string;
}

export interface ReplayResult {
  rows: ReplayRow[];
  sampledFrames: Blob[];
  complete: boolean;
}

export class TraceFormatError extends Error {}

/** Parse a movement CSV (t_ms,azimuth_deg,elevation_deg,tx,ty,tz). */
export function parseMovementTrace(text: string): TraceEntry[] {
  const lines = text.split(/\r?\n/).filter((line) => line.trim().length > 0);
  if (lines.length === 0) {
    throw new TraceFormatError("trace is empty");
  }
  const header = lines[0].split(",").map((h) => h.trim());
  const expected = ["t_ms", "azimuth_deg", "elevation_deg", "tx", "ty", "tz"];
  for (const column of expected) {
    if (!header.includes(column)) {
      throw new TraceFormatError(`missing column ${column}`);
    }
  }
  const index = expected.map((column) => header.indexOf(column));
  const entries: TraceEntry[] = [];
  let lastT = -Infinity;
  for (let i = 1; i < lines.length; i++) {
    const parts = lines[i].split(",");
    const values = index.map((j) => Number(parts[j]));
    if (values.some((v) => !Number.isFinite(v))) {
      throw new TraceFormatError(`line ${i + 1}: non-numeric value`);
    }
    if (values[0] <= lastT) {
      throw new TraceFormatError(`line ${i + 1}: t_ms not increasing`);
    }
    lastT = values[0];
    entries.push({
      tMs: values[0],
      azimuthDeg: values[1],
      elevationDeg: values[2],
      translation: [values[3], values[4], values[5]],
    });
  }
  if (entries.length === 0) {
    throw new TraceFormatError("trace has no entries");
  }
  return entries;
}

export interface ReplayControls {
  cancelled: () => boolean;
}

export async function replayTrace(
  viewport: ViewportLoop,
  abr: LatencyAbr,
  entries: TraceEntry[],
  sampleStride: number,
  controls: ReplayControls = { cancelled: () => false },
  now: () => number = () => performance.now(),
  sleep: (ms: number) => Promise<void> = (ms) => new Promise((r) => setTimeout(r, ms)),
): Promise<ReplayResult> {
  const rows: ReplayRow[] = [];
  const sampledFrames: Blob[] = [];
  const started = now();

  for (let i = 0; i < entries.length; i++) {
    if (controls.cancelled()) {
      return { rows, sampledFrames, complete: false };
    }
    const entry = entries[i];
    const lead = entry.tMs - (now() - started);
    if (lead > 0) {
      await sleep(lead);
    }
    const pose: Pose = {
      azimuthDeg: entry.azimuthDeg,
      elevationDeg: entry.elevationDeg,
      translation: [...entry.translation],
    };
    const level = abr.currentLevel;
    const profile = abr.profile(level);
    const tSend = (now() - started) / 1000;
    const result = await viewport.renderOnce(pose);
    rows.push({
      frame_id: result.frameId,
      t_send: tSend,
      t_recv: tSend + result.duration,
      azimuth_deg: entry.azimuthDeg,
      elevation_deg: entry.elevationDeg,
      tx: entry.translation[0],
      ty: entry.translation[1],
      tz: entry.translation[2],
      level,
      width: profile.width,
      height: profile.height,
      jpeg_quality: profile.jpegQuality,
      bytes: result.bytes,
      render_ms: result.renderMs,
      ema_bps: abr.estimator.ema ?? 0,
      ok: result.ok,
      error: result.error,
    });
    if (result.ok && result.blob !== null && i % sampleStride === 0) {
      sampledFrames.push(result.blob);
    }
  }
  return { rows, sampledFrames, complete: true };
}

const CSV_COLUMNS: Array<keyof ReplayRow> = [
  "frame_id", "t_send", "t_recv", "azimuth_deg", "elevation_deg", "tx", "ty",
  "tz", "level", "width", "height", "jpeg_quality", "bytes", "render_ms",
  "ema_bps", "ok", "error",
];

/** Same schema as the harness frames.csv. */
export function toCsv(rows: ReplayRow[]): string {
  const lines = [CSV_COLUMNS.join(",")];
  for (const row of rows) {
    lines.push(CSV_COLUMNS.map((column) => {
      const value = row[column];
      if (typeof value === "boolean") {
        return value ? "True" : "False";
      }
      return String(value);
    }).join(","));
  }
  return lines.join("\n") + "\n";
}
