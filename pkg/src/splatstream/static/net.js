// Wire schema for POST /render and the timed fetch the viewport uses.
export function buildRenderRequest(modelId, pose, intr, jpegQuality, frameId) {
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
export async function fetchFrame(fetchImpl, endpoint, request, now = () => performance.now()) {
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
            }
            catch {
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
    }
    catch (err) {
        return {
            ok: false, status: 0, frameId: request.frame_id, bytes: 0,
            duration: (now() - started) / 1000, renderMs: 0, blob: null,
            error: err instanceof Error ? err.message : String(err),
        };
    }
}
