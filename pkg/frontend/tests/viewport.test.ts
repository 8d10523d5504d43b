import { describe, expect, it } from "vitest";

import { LatencyAbr } from "../src/abr.js";
import { Intrinsics, Pose } from "../src/camera.js";
import { InputState } from "../src/input.js";
import { Display, FrameMeta, ViewportLoop } from "../src/viewport.js";

const BASE: Intrinsics = { fx: 1108.5, fy: 1108.5, cx: 640, cy: 360, width: 1280, height: 720 };

function pose(az: number): Pose {
  return { azimuthDeg: az, elevationDeg: 0, translation: [0, 0, 0] };
}

class RecordingDisplay implements Display {
  frames: FrameMeta[] = [];
  errors: string[] = [];

  showFrame(_blob: Blob, meta: FrameMeta): void {
    this.frames.push(meta);
  }

  showError(message: string): void {
    this.errors.push(message);
  }
}

interface FakeServerOptions {
  delayMs?: number;
  status?: number;
  failConnection?: boolean;
}

function fakeServer(options: FakeServerOptions = {}) {
  const state = {
    inFlight: 0,
    maxInFlight: 0,
    requests: [] as Array<{ azimuth: number; frame_id: number; width: number; fx: number }>,
  };
  const fetchImpl = async (_url: string, init: RequestInit): Promise<Response> => {
    if (options.failConnection) {
      throw new Error("connection refused");
    }
    const body = JSON.parse(String(init.body));
    state.inFlight += 1;
    state.maxInFlight = Math.max(state.maxInFlight, state.inFlight);
    state.requests.push(body);
    await new Promise((resolve) => setTimeout(resolve, options.delayMs ?? 2));
    state.inFlight -= 1;
    if (options.status !== undefined && options.status !== 200) {
      return new Response(JSON.stringify({ error: `unknown model '${body.model_id}'` }), {
        status: options.status,
        headers: { "content-type": "application/json" },
      });
    }
    const payload = new Uint8Array(5000);
    return new Response(payload, {
      status: 200,
      headers: {
        "content-type": "image/jpeg",
        "content-length": String(payload.length),
        "x-render-ms": "4.2",
        "x-frame-id": String(body.frame_id),
      },
    });
  };
  return { state, fetchImpl };
}

function makeViewport(display: Display, fetchImpl: any, abrEnabled = true) {
  const abr = new LatencyAbr();
  return {
    abr,
    viewport: new ViewportLoop({
      endpoint: "http://test",
      modelId: "demo",
      display,
      abr,
      baseIntrinsics: BASE,
      fetchImpl,
      abrEnabled,
    }),
  };
}

describe("viewport request coalescing", () => {
  it("keeps at most one request in flight under 30 key-events/s input", async () => {
    const display = new RecordingDisplay();
    const { state, fetchImpl } = fakeServer({ delayMs: 8 });
    const { viewport } = makeViewport(display, fetchImpl);

    // scripted 30 events/s for one second of virtual input
    const input = new InputState();
    input.keyDown("KeyW");
    let current = pose(0);
    for (let event = 0; event < 30; event++) {
      const next = input.tick(current, 1 / 30, { move: 1.5, rotateDeg: 60 });
      if (next !== null) {
        current = next;
        viewport.requestRender(current);
      }
      await new Promise((resolve) => setTimeout(resolve, 1));
    }
    await viewport.idle();

    expect(state.maxInFlight).toBe(1);
    expect(state.requests.length).toBeGreaterThanOrEqual(2);
    // coalescing must have dropped intermediate poses
    expect(state.requests.length).toBeLessThan(30);
  });

  it("latest pose wins when updates race a slow request", async () => {
    const display = new RecordingDisplay();
    const { state, fetchImpl } = fakeServer({ delayMs: 15 });
    const { viewport } = makeViewport(display, fetchImpl);

    viewport.requestRender(pose(1));
    viewport.requestRender(pose(2));
    viewport.requestRender(pose(3));
    await viewport.idle();

    expect(state.requests.map((request) => request.azimuth)).toEqual([1, 3]);
  });

  it("displays frames in monotonically increasing frame-id order", async () => {
    const display = new RecordingDisplay();
    const { fetchImpl } = fakeServer({ delayMs: 1 });
    const { viewport } = makeViewport(display, fetchImpl);

    for (let i = 0; i < 10; i++) {
      viewport.requestRender(pose(i));
      await new Promise((resolve) => setTimeout(resolve, 3));
    }
    await viewport.idle();

    const shown = display.frames.map((f) => f.frameId);
    expect(shown.length).toBeGreaterThan(0);
    for (let i = 1; i < shown.length; i++) {
      expect(shown[i]).toBeGreaterThan(shown[i - 1]);
    }
  });

  it("feeds completed transfers into the ABR", async () => {
    const display = new RecordingDisplay();
    const { fetchImpl } = fakeServer();
    const { abr, viewport } = makeViewport(display, fetchImpl);

    viewport.requestRender(pose(0));
    await viewport.idle();
    expect(abr.estimator.ema).not.toBeNull();
    expect(abr.estimator.ema!).toBeGreaterThan(0);
  });

  it("renders the error overlay on http errors and keeps running", async () => {
    const display = new RecordingDisplay();
    const { fetchImpl } = fakeServer({ status: 404 });
    const { viewport } = makeViewport(display, fetchImpl);

    viewport.requestRender(pose(0));
    await viewport.idle();
    expect(display.errors).toHaveLength(1);
    expect(display.errors[0]).toContain("unknown model");
    expect(display.frames).toHaveLength(0);
  });

  it("renders the overlay on connection failures", async () => {
    const display = new RecordingDisplay();
    const { fetchImpl } = fakeServer({ failConnection: true });
    const { viewport } = makeViewport(display, fetchImpl);

    viewport.requestRender(pose(0));
    await viewport.idle();
    expect(display.errors).toHaveLength(1);
  });

  it("uses the manual profile when ABR is off", async () => {
    const display = new RecordingDisplay();
    const { state, fetchImpl } = fakeServer();
    const { viewport } = makeViewport(display, fetchImpl, false);
    viewport.manualLevel = 2;

    viewport.requestRender(pose(0));
    await viewport.idle();
    expect(state.requests[0].width).toBe(640);
  });

  it("scales intrinsics with the chosen rung so the FoV is constant", async () => {
    const display = new RecordingDisplay();
    const { state, fetchImpl } = fakeServer();
    const { viewport } = makeViewport(display, fetchImpl, false);

    viewport.manualLevel = 0;
    viewport.requestRender(pose(0));
    await viewport.idle();
    viewport.manualLevel = 3;
    viewport.requestRender(pose(0));
    await viewport.idle();

    const [high, low] = state.requests;
    expect(high.width / high.fx).toBeCloseTo(low.width / low.fx, 12);
  });
});
