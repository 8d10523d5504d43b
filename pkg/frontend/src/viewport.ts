// Viewport request loop: at most one /render request in flight, newest pose
// wins, and only newer frames ever reach the screen.

import { LatencyAbr } from "./abr.js";
import { Intrinsics, Pose, isPanning, scaleIntrinsics } from "./camera.js";
import { FetchLike, FrameResult, buildRenderRequest, fetchFrame } from "./net.js";

export interface FrameMeta {
  frameId: number;
  level: number;
  width: number;
  height: number;
  bytes: number;
  durationMs: number;
  renderMs: number;
}

export interface Display {
  showFrame(blob: Blob, meta: FrameMeta): void;
  showError(message: string): void;
}

export interface ViewportOptions {
  endpoint: string;
  modelId: string;
  display: Display;
  abr: LatencyAbr;
  baseIntrinsics: Intrinsics;
  fetchImpl: FetchLike;
  now?: () => number;
  /** When false, the manual profile is used instead of the controller. */
  abrEnabled?: boolean;
  manualLevel?: number;
}

export class ViewportLoop {
  private readonly opts: ViewportOptions;
  private pendingPose: Pose | null = null;
  private prevPose: Pose | null = null;
  private nextFrameId = 1;
  private lastShownFrameId = 0;
  private waiters: Array<() => void> = [];
  inFlight = 0;
  abrEnabled: boolean;
  manualLevel: number;
  lastResult: FrameResult | null = null;

  constructor(opts: ViewportOptions) {
    this.opts = opts;
    this.abrEnabled = opts.abrEnabled ?? true;
    this.manualLevel = opts.manualLevel ?? 0;
  }

  /** Queue a pose for rendering; intermediate poses are coalesced away. */
  requestRender(pose: Pose): void {
    this.pendingPose = pose;
    void this.pump();
  }

  /** Render one pose and wait for its completion (experiment replays). */
  async renderOnce(pose: Pose): Promise<FrameResult> {
    this.pendingPose = pose;
    const result = await this.pump();
    if (result !== null) {
      return result;
    }
    await this.idle();
    return this.lastResult as FrameResult;
  }

  /** Resolves when no request is in flight and nothing is queued. */
  idle(): Promise<void> {
    if (this.inFlight === 0 && this.pendingPose === null) {
      return Promise.resolve();
    }
    return new Promise((resolve) => this.waiters.push(resolve));
  }

  private level(): number {
    return this.abrEnabled ? this.opts.abr.currentLevel : this.manualLevel;
  }

  private async pump(): Promise<FrameResult | null> {
    if (this.inFlight > 0 || this.pendingPose === null) {
      return null;
    }
    const pose = this.pendingPose;
    this.pendingPose = null;
    const panning = isPanning(this.prevPose, pose);
    this.prevPose = pose;

    const profile = this.opts.abr.profile(this.level());
    const intr = scaleIntrinsics(this.opts.baseIntrinsics, profile.width, profile.height);
    const request = buildRenderRequest(this.opts.modelId, pose, intr,
                                       profile.jpegQuality, this.nextFrameId++);
    this.inFlight += 1;
    let result: FrameResult;
    try {
      result = await fetchFrame(this.opts.fetchImpl, this.opts.endpoint, request,
                                this.opts.now);
    } finally {
      this.inFlight -= 1;
    }
    this.lastResult = result;

    if (result.ok && result.blob !== null) {
      if (this.abrEnabled) {
        this.opts.abr.onResponse(result.bytes, result.duration, panning);
      }
      if (result.frameId > this.lastShownFrameId) {
        this.lastShownFrameId = result.frameId;
        this.opts.display.showFrame(result.blob, {
          frameId: result.frameId,
          level: profile.level,
          width: profile.width,
          height: profile.height,
          bytes: result.bytes,
          durationMs: result.duration * 1000,
          renderMs: result.renderMs,
        });
      }
    } else {
      this.opts.display.showError(result.error || `http ${result.status}`);
    }

    if (this.pendingPose !== null) {
      void this.pump();
    } else if (this.inFlight === 0) {
      const waiters = this.waiters;
      this.waiters = [];
      for (const wake of waiters) {
        wake();
      }
    }
    return result;
  }
}
