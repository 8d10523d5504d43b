// Pose state and relative motion, matching the backend's conventions:
// forward is (sin az, 0, cos az) in the x-z plane, world up is -y, and
// elevation stays strictly inside (-90, 90) degrees.
const ELEVATION_LIMIT_DEG = 90 - 0.0057296; // 1e-4 rad expressed in degrees
export function clampElevation(deg) {
    return Math.min(Math.max(deg, -ELEVATION_LIMIT_DEG), ELEVATION_LIMIT_DEG);
}
export function moveRelative(pose, action, step) {
    if (action === "yaw") {
        return { ...pose, azimuthDeg: pose.azimuthDeg + step };
    }
    if (action === "pitch") {
        return { ...pose, elevationDeg: clampElevation(pose.elevationDeg + step) };
    }
    const az = (pose.azimuthDeg * Math.PI) / 180;
    const sa = Math.sin(az);
    const ca = Math.cos(az);
    const [tx, ty, tz] = pose.translation;
    let delta;
    switch (action) {
        case "forward":
            delta = [step * sa, 0, step * ca];
            break;
        case "backward":
            delta = [-(step * sa), 0, -(step * ca)];
            break;
        case "right":
            delta = [step * ca, 0, -(step * sa)];
            break;
        case "left":
            delta = [-(step * ca), 0, step * sa];
            break;
        case "up":
            delta = [0, -step, 0];
            break;
        case "down":
            delta = [0, step, 0];
            break;
    }
    return { ...pose, translation: [tx + delta[0], ty + delta[1], tz + delta[2]] };
}
/** Rescale intrinsics to a rung resolution; the FoV stays constant. */
export function scaleIntrinsics(base, width, height) {
    const sx = width / base.width;
    const sy = height / base.height;
    return {
        fx: base.fx * sx,
        fy: base.fy * sy,
        cx: base.cx * sx,
        cy: base.cy * sy,
        width,
        height,
    };
}
/** Panning means the view direction moved more than 5 degrees in one frame. */
export function isPanning(prev, current) {
    if (prev === null) {
        return false;
    }
    const delta = Math.abs(current.azimuthDeg - prev.azimuthDeg)
        + Math.abs(current.elevationDeg - prev.elevationDeg);
    return delta > 5;
}
