// Browser entry point: wires the dashboard, viewport, sidebar, stats
// overlay, and the experiment popup against the backend routes.
import { LatencyAbr } from "./abr.js";
import { clampElevation } from "./camera.js";
import { Dashboard } from "./dashboard.js";
import { parseMovementTrace, replayTrace, toCsv } from "./experiment.js";
import { InputState } from "./input.js";
import { formatOverlay, snapshot } from "./stats.js";
import { ViewportLoop } from "./viewport.js";
const endpoint = "";
function el(id) {
    const node = document.getElementById(id);
    if (node === null) {
        throw new Error(`missing element #${id}`);
    }
    return node;
}
function baseIntrinsicsFromSidebar() {
    return {
        fx: Number((el("fx")).value),
        fy: Number((el("fy")).value),
        cx: Number((el("cx")).value),
        cy: Number((el("cy")).value),
        width: Number((el("base-width")).value),
        height: Number((el("base-height")).value),
    };
}
class ImageDisplay {
    constructor() {
        this.liveUrl = null;
        this.img = el("viewport-image");
        this.overlay = el("viewport-error");
        this.onFrame = null;
    }
    showFrame(blob, meta) {
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
    showError(message) {
        this.overlay.textContent = message;
        this.overlay.hidden = false;
    }
}
function main() {
    const abr = new LatencyAbr();
    const display = new ImageDisplay();
    let viewport = null;
    let pose = { azimuthDeg: 0, elevationDeg: 0, translation: [0, 0, 0] };
    let lastMeta = null;
    const statsBox = el("stats-overlay");
    display.onFrame = (meta) => {
        lastMeta = meta;
        statsBox.textContent = formatOverlay(snapshot(abr, lastMeta));
    };
    const dashboardView = {
        renderCards(models) {
            const grid = el("model-grid");
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
        setCardState(id, state) {
            const card = document.querySelector(`[data-model-id="${id}"] span`);
            if (card !== null) {
                card.textContent = `${id} (${state})`;
            }
        },
        showError(message) {
            const banner = el("dashboard-error");
            banner.textContent = `${message} - retrying may help`;
            banner.hidden = false;
        },
        clearError() {
            el("dashboard-error").hidden = true;
        },
    };
    const dashboard = new Dashboard(fetch.bind(window), endpoint, dashboardView, (modelId) => void enterViewport(modelId));
    void dashboard.refresh();
    el("dashboard-refresh")
        .addEventListener("click", () => void dashboard.refresh());
    const input = new InputState();
    window.addEventListener("keydown", (event) => {
        if (input.keyDown(event.code)) {
            event.preventDefault();
        }
    });
    window.addEventListener("keyup", (event) => input.keyUp(event.code));
    const abrToggle = el("abr-toggle");
    const manualLevel = el("manual-level");
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
    el("sr-toggle").disabled = true;
    function enterViewport(modelId) {
        el("dashboard-screen").hidden = true;
        el("viewport-screen").hidden = false;
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
        const frame = (t) => {
            const dt = Math.min((t - lastTick) / 1000, 0.1);
            lastTick = t;
            const steps = {
                move: Number(el("step-move").value),
                rotateDeg: Number(el("step-rotate").value),
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
    const popup = el("experiment-popup");
    el("experiment-open").addEventListener("click", () => popup.showModal());
    el("experiment-close").addEventListener("click", () => popup.close());
    let cancelRequested = false;
    el("experiment-cancel")
        .addEventListener("click", () => { cancelRequested = true; });
    el("experiment-run").addEventListener("click", async () => {
        if (viewport === null) {
            el("experiment-status").textContent = "load a model first";
            return;
        }
        const status = el("experiment-status");
        const traceUrl = el("experiment-trace-url").value.trim();
        const file = el("experiment-trace").files?.[0];
        let text;
        if (traceUrl.length > 0) {
            try {
                const response = await fetch(traceUrl);
                if (!response.ok) {
                    throw new Error(`http ${response.status}`);
                }
                text = await response.text();
            }
            catch (err) {
                status.textContent = `trace fetch failed: ${err instanceof Error ? err.message : err}`;
                return;
            }
        }
        else if (file !== undefined) {
            text = await file.text();
        }
        else {
            status.textContent = "provide a trace URL or choose a CSV file";
            return;
        }
        let entries;
        try {
            entries = parseMovementTrace(text);
        }
        catch (err) {
            status.textContent = `invalid trace: ${err instanceof Error ? err.message : err}`;
            return;
        }
        cancelRequested = false;
        const stride = Number(el("experiment-stride").value) || 10;
        const runs = Number(el("experiment-runs").value) || 1;
        for (let run = 0; run < runs; run++) {
            status.textContent = `running ${run + 1}/${runs}...`;
            const result = await replayTrace(viewport, abr, entries, stride, { cancelled: () => cancelRequested });
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
