// Browser entry point: wires the dashboard, viewport, sidebar, stats
// overlay, and the experiment popup against the backend routes.

import { LatencyAbr } from "./abr.js";
import { Intrinsics, Pose, clampElevation } from "./camera.js";
import { Dashboard, DashboardView, ModelInfo } from "./dashboard.js";
import { parseMovementTrace, replayTrace, toCsv } from "./experiment.js";
import { InputState } from "./input.js";
import { formatOverlay, snapshot } from "./stats.js";
import { Display, FrameMeta, ViewportLoop } from "./viewport.js";

const endpoint = "";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function baseIntrinsicsFromSidebar(): Intrinsics {
  return {
    fx: Number((el<HTMLInputElement>("fx")).value),
    fy: Number((el<HTMLInputElement>("fy")).value),
    cx: Number((el<HTMLInputElement>("cx")).value),
    cy: Number((el<HTMLInputElement>("cy")).value),
    width: Number((el<HTMLInputElement>("base-width")).value),
    height: Number((el<HTMLInputElement>("base-height")).value),
  };
}

class ImageDisplay implements Display {
  private liveUrl: string | null = null;
  private readonly img = el<HTMLImageElement>("viewport-image");
  private readonly overlay = el<HTMLDivElement>("viewport-error");
  onFrame: ((meta: FrameMeta) => void) | null = null;

  showFrame(blob: Blob, meta: FrameMeta): void {
    const url = URL.createObjectURL(blob);
    const previous = this.liveUrl;
    this.img.onload = () => {
      if (previous !== null) {
        URL.revokeObjectURL(previous); // keep exactly one object URL alive
      }
    };
    this.img.src = url;
    this.liveUrl = url;
    this.overlay.hidden = true;
    this.onFrame?.(meta);
  }

  showError(message: string): void {
    this.overlay.textContent = message;
    this.overlay.hidden = false;
  }
}

function main(): void {
  const abr = new LatencyAbr();
  const display = new ImageDisplay();
  let viewport: ViewportLoop | null = null;
  let pose: Pose = { azimuthDeg: 0, elevationDeg: 0, translation: [0, 0, 0] };
  let lastMeta: FrameMeta | null = null;

  const statsBox = el<HTMLDivElement>("stats-overlay");
  display.onFrame = (meta) => {
    lastMeta = meta;
    statsBox.textContent = formatOverlay(snapshot(abr, lastMeta));
  };

  const dashboardView: DashboardView = {
    renderCards(models: ModelInfo[]): void {
      const grid = el<HTMLDivElement>("model-grid");
      grid.replaceChildren();
      for (const model of models) {
        const card = document.createElement("button");
        card.className = "model-card";
        card.dataset.modelId = model.id;
        const thumb = document.createElement("div");
        thumb.className = "model-thumb";
        if (model.preview_url !== null) {
          thumb.style.backgroundImage = `url(${model.preview_url})`;
        }
        const label = document.createElement("span");
        label.textContent = `${model.name} (${model.state})`;
        card.append(thumb, label);
        card.addEventListener("click", () => void dashboard.loadModel(model.id));
        grid.append(card);
      }
    },
    setCardState(id: string, state: string): void {
      const card = document.querySelector(`[data-model-id="${id}"] span`);
      if (card !== null) {
        card.textContent = `${id} (${state})`;
      }
    },
    showError(message: string): void {
      const banner = el<HTMLDivElement>("dashboard-error");
      banner.textContent = `${message} - retrying may help`;
      banner.hidden = false;
    },
    clearError(): void {
      el<HTMLDivElement>("dashboard-error").hidden = true;
    },
  };

  const dashboard = new Dashboard(fetch.bind(window), endpoint, dashboardView,
                                  (modelId) => void enterViewport(modelId));
  void dashboard.refresh();
  el<HTMLButtonElement>("dashboard-refresh")
    .addEventListener("click", () => void dashboard.refresh());

  const input = new InputState();
  window.addEventListener("keydown", (event) => {
    if (input.keyDown(event.code)) {
      event.preventDefault();
    }
  });
  window.addEventListener("keyup", (event) => input.keyUp(event.code));

  const abrToggle = el<HTMLInputElement>("abr-toggle");
  const manualLevel = el<HTMLSelectElement>("manual-level");
  abrToggle.addEventListener("change", () => {
    manualLevel.disabled = abrToggle.checked; // manual controls off under ABR
    if (viewport !== null) {
      viewport.abrEnabled = abrToggle.checked;
    }
  });
  manualLevel.addEventListener("change", () => {
    if (viewport !== null) {
      viewport.manualLevel = Number(manualLevel.value);
      viewport.requestRender(pose);
    }
  });
  manualLevel.disabled = abrToggle.checked;

  // super-resolution is an extension point only; the toggle stays disabled
  el<HTMLInputElement>("sr-toggle").disabled = true;

  function enterViewport(modelId: string): void {
    el<HTMLElement>("dashboard-screen").hidden = true;
    el<HTMLElement>("viewport-screen").hidden = false;
    viewport = new ViewportLoop({
      endpoint,
      modelId,
      display,
      abr,
      baseIntrinsics: baseIntrinsicsFromSidebar(),
      fetchImpl: fetch.bind(window),
      abrEnabled: abrToggle.checked,
      manualLevel: Number(manualLevel.value),
    });
    viewport.requestRender(pose);

    let lastTick = performance.now();
    const frame = (t: number): void => {
      const dt = Math.min((t - lastTick) / 1000, 0.1);
      lastTick = t;
      const steps = {
        move: Number(el<HTMLInputElement>("step-move").value),
        rotateDeg: Number(el<HTMLInputElement>("step-rotate").value),
      };
      const next = input.tick(pose, dt, steps);
      if (next !== null && viewport !== null) {
        next.elevationDeg = clampElevation(next.elevationDeg);
        pose = next;
        viewport.requestRender(pose);
      }
      requestAnimationFrame(frame);
    };
    requestAnimationFrame(frame);
  }

  // experiment popup
  const popup = el<HTMLDialogElement>("experiment-popup");
  el<HTMLButtonElement>("experiment-open").addEventListener("click", () => popup.showModal());
  el<HTMLButtonElement>("experiment-close").addEventListener("click", () => popup.close());
  let cancelRequested = false;
  el<HTMLButtonElement>("experiment-cancel")
    .addEventListener("click", () => { cancelRequested = true; });
  el<HTMLButtonElement>("experiment-run").addEventListener("click", async () => {
    if (viewport === null) {
      el<HTMLDivElement>("experiment-status").textContent = "load a model first";
      return;
    }
    const status = el<HTMLDivElement>("experiment-status");
    const traceUrl = el<HTMLInputElement>("experiment-trace-url").value.trim();
    const file = el<HTMLInputElement>("experiment-trace").files?.[0];
    let text: string;
    if (traceUrl.length > 0) {
      try {
        const response = await fetch(traceUrl);
        if (!response.ok) {
          throw new Error(`http ${response.status}`);
        }
        text = await response.text();
      } catch (err) {
        status.textContent = `trace fetch failed: ${err instanceof Error ? err.message : err}`;
        return;
      }
    } else if (file !== undefined) {
      text = await file.text();
    } else {
      status.textContent = "provide a trace URL or choose a CSV file";
      return;
    }
    let entries;
    try {
      entries = parseMovementTrace(text);
    } catch (err) {
      status.textContent = `invalid trace: ${err instanceof Error ? err.message : err}`;
      return;
    }
    cancelRequested = false;
    const stride = Number(el<HTMLInputElement>("experiment-stride").value) || 10;
    const runs = Number(el<HTMLInputElement>("experiment-runs").value) || 1;
    for (let run = 0; run < runs; run++) {
      status.textContent = `running ${run + 1}/${runs}...`;
      const result = await replayTrace(viewport, abr, entries, stride,
                                       { cancelled: () => cancelRequested });
      const suffix = result.complete ? "" : "-partial";
      const blob = new Blob([toCsv(result.rows)], { type: "text/csv" });
      const link = document.createElement("a");
      link.href = URL.createObjectURL(blob);
      link.download = `session-run${run + 1}${suffix}.csv`;
      link.click();
      URL.revokeObjectURL(link.href);
      if (!result.complete) {
        status.textContent = `cancelled during run ${run + 1}; partial CSV downloaded`;
        return;
      }
    }
    status.textContent = "done";
  });
}

main();
