// Live session statistics for the overlay.
export function snapshot(abr, lastFrame) {
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
export function formatOverlay(stats) {
    return [
        `L${stats.level} ${stats.resolution}`,
        `${stats.emaMbps.toFixed(2)} Mbps`,
        `${stats.lastLatencyMs.toFixed(0)} ms (render ${stats.lastRenderMs.toFixed(1)} ms)`,
        `${stats.switchCount} switches`,
    ].join(" | ");
}
