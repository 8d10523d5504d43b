// Viewport request loop: at most one /render request in flight, newest pose
// wins, and only newer frames ever reach the screen.
import { isPanning, scaleIntrinsics } from "./camera.js";
import { buildRenderRequest, fetchFrame } from "./net.js";
export class ViewportLoop {
    constructor(opts) {
        this.pendingPose = null;
        this.prevPose = null;
        this.nextFrameId = 1;
        this.lastShownFrameId = 0;
        this.waiters = [];
        this.inFlight = 0;
        this.lastResult = null;
        this.opts = opts;
        this.abrEnabled = opts.abrEnabled ?? true;
        this.manualLevel = opts.manualLevel ?? 0;
    }
    /** Queue a pose for rendering; intermediate poses are coalesced away. */
    requestRender(pose) {
        this.pendingPose = pose;
        void this.pump();
    }
    /** Render one pose and wait for its completion (experiment replays). */
    async renderOnce(pose) {
        this.pendingPose = pose;
        const result = await this.pump();
        if (result !== null) {
            return result;
        }
        await this.idle();
        return this.lastResult;
    }
    /** Resolves when no request is in flight and nothing is queued. */
    idle() {
        if (this.inFlight === 0 && this.pendingPose === null) {
            return Promise.resolve();
        }
        return new Promise((resolve) => this.waiters.push(resolve));
    }
    level() {
        return this.abrEnabled ? this.opts.abr.currentLevel : this.manualLevel;
    }
    async pump() {
        if (this.inFlight > 0 || this.pendingPose === null) {
            return null;
        }
        const pose = this.pendingPose;
        this.pendingPose = null;
        const panning = isPanning(this.prevPose, pose);
        this.prevPose = pose;
        const profile = this.opts.abr.profile(this.level());
        const intr = scaleIntrinsics(this.opts.baseIntrinsics, profile.width, profile.height);
        const request = buildRenderRequest(this.opts.modelId, pose, intr, profile.jpegQuality, this.nextFrameId++);
        this.inFlight += 1;
        let result;
        try {
            result = await fetchFrame(this.opts.fetchImpl, this.opts.endpoint, request, this.opts.now);
        }
        finally {
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
        }
        else {
            this.opts.display.showError(result.error || `http ${result.status}`);
        }
        if (this.pendingPose !== null) {
            void this.pump();
        }
        else if (this.inFlight === 0) {
            const waiters = this.waiters;
            this.waiters = [];
            for (const wake of waiters) {
                wake();
            }
        }
        return result;
    }
}
