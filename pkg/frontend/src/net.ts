// Wire schema for POST /render and the timed fetch the viewport uses.

import { Intrinsics, Pose } from "./camera.js";

export interface RenderRequest {
  model_id: string;
  azimuth: number;
  elevation: number;
  translation: [number, number, number];
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  width: number;
  height: number;
  jpeg_quality: number;
  frame_id: number;
}

export interface FrameResult {
  ok: boolean;
  status: number;
  frameId: number;
  bytes: number;
  duration: number;
  renderMs: number;
  blob: Blob | null;
  error: string;
}

export type FetchLike = (url: string, init: RequestInit) => Promise<Response>;

export function buildRenderRequest(modelId: string, pose: Pose, intr: Intrinsics,
                                   jpegQuality: number, frameId: number): RenderRequest {
  return {
    model_id: modelId,
    azimuth: pose.azimuthDeg,
    elevation: pose.elevationDeg,
    translation: [...pose.translation],
    fx: intr.fx,
    fy: intr.fy,
    cx: intr.cx,
    cy: intr.cy,
    width: intr.width,
    height: intr.height,
    jpeg_quality: jpegQuality,
    frame_id: frameId,
  };
}

/** POST one frame request, timing the full transfer for the ABR. */
export async function fetchFrame(fetchImpl: FetchLike, endpoint: string,
                                 request: RenderRequest,
                                 now: () => number = () => performance.now()): Promise<FrameResult> {
  const started = now();
  try {
    const response = await fetchImpl(`${endpoint}/render`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(request),
    });
    const blob = await response.blob();
    const duration = (now() - started) / 1000;
    if (!response.ok) {
      let message = `http ${response.status}`;
      try {
        message = JSON.parse(await blob.text()).error ?? message;
      } catch {
        // non-JSON error body; keep the status line
      }
      return {
        ok: false, status: response.status, frameId: request.frame_id,
        bytes: 0, duration, renderMs: 0, blob: null, error: message,
      };
    }
    const contentLength = Number(response.headers.get("content-length") ?? blob.size);
    return {
      ok: true,
      status: response.status,
      frameId: request.frame_id,
      bytes: contentLength,
      duration,
      renderMs: Number(response.headers.get("x-render-ms") ?? 0),
      blob,
      error: "",
    };
  } catch (err) {
    return {
      ok: false, status: 0, frameId: request.frame_id, bytes: 0,
      duration: (now() - started) / 1000, renderMs: 0, blob: null,
      error: err instanceof Error ? err.message : String(err),
    };
  }
}
