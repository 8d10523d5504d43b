"""Headless streaming client: trace replay, bandwidth shaping, session logs.

A session walks a movement trace, requests one frame per entry through the
ABR controller, and records everything needed for offline evaluation. Runs
with a bandwidth trace execute on a virtual clock and shape response bytes
through a token bucket, which makes level sequences reproducible; live runs
use the wall clock.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, asdict, field
from pathlib import Path

import httpx

from .abr import BitrateLadder, LatencyAbr, default_ladder
from .camera import Intrinsics, scale_intrinsics

logger = logging.getLogger(__name__)

DEFAULT_SAMPLE_STRIDE = 10
DEFAULT_VIRTUAL_RTT = 0.010  # seconds added to every shaped transfer
BUCKET_CAP_BYTES = 65536.0
PANNING_THRESHOLD_DEG = 5.0

# 60 degree horizontal FoV at 1280x720 unless the caller says otherwise.
DEFAULT_BASE_INTRINSICS = Intrinsics(
    fx=1108.512516844081, fy=1108.512516844081,
    cx=640.0, cy=360.0, width=1280, height=720)


class TraceError(Exception):
    pass


class ParseError(TraceError):
    pass


class NonMonotonicTime(TraceError):
    pass


class ServerUnreachable(Exception):
    """Connection-level failure; carries whatever was logged before the abort."""

    def __init__(self, message: str, partial_log=None):
        super().__init__(message)
        self.partial_log = partial_log


@dataclass(frozen=True)
class MovementEntry:
    t_ms: float
    azimuth_deg: float
    elevation_deg: float
    translation: tuple[float, float, float]


@dataclass(frozen=True)
class MovementTrace:
    entries: tuple[MovementEntry, ...]

    def __post_init__(self):
        if not self.entries:
            raise ParseError("movement trace has no entries")


@dataclass(frozen=True)
class BandwidthEntry:
    t_ms: float
    rate_kbps: float


@dataclass(frozen=True)
class BandwidthTrace:
    entries: tuple[BandwidthEntry, ...]

    def __post_init__(self):
        if not self.entries:
            raise ParseError("bandwidth trace has no entries")
        if self.entries[0].t_ms != 0:
            raise ParseError("bandwidth trace must start at t_ms = 0")

    def rate_bps_at(self, t: float) -> float:
        """Bytes per second in effect at virtual time t (step function)."""
        rate = self.entries[0].rate_kbps
        for entry in self.entries:
            if entry.t_ms / 1000.0 <= t:
                rate = entry.rate_kbps
            else:
                break
        return rate * 1000.0 / 8.0

    def changes_after(self, t: float) -> float | None:
        """Virtual time of the next rate change strictly after t, if any."""
        for entry in self.entries:
            if entry.t_ms / 1000.0 > t:
                return entry.t_ms / 1000.0
        return None


def load_movement_trace(path: Path) -> MovementTrace:
    """Read a movement CSV (t_ms,azimuth_deg,elevation_deg,tx,ty,tz)."""
    entries = []
    last_t = None
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"t_ms", "azimuth_deg", "elevation_deg", "tx", "ty", "tz"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ParseError(f"{path}: header must contain {sorted(required)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                entry = MovementEntry(
                    t_ms=float(row["t_ms"]),
                    azimuth_deg=float(row["azimuth_deg"]),
                    elevation_deg=float(row["elevation_deg"]),
                    translation=(float(row["tx"]), float(row["ty"]), float(row["tz"])),
                )
            except (TypeError, ValueError) as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if last_t is not None and entry.t_ms <= last_t:
                raise NonMonotonicTime(
                    f"{path}:{lineno}: t_ms {entry.t_ms} not after {last_t}")
            last_t = entry.t_ms
            entries.append(entry)
    return MovementTrace(entries=tuple(entries))


def load_bandwidth_trace(path: Path) -> BandwidthTrace:
    """Read a bandwidth CSV (t_ms,rate_kbps)."""
    entries = []
    last_t = None
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"t_ms", "rate_kbps"}.issubset(reader.fieldnames):
            raise ParseError(f"{path}: header must contain ['t_ms', 'rate_kbps']")
        for lineno, row in enumerate(reader, start=2):
            try:
                entry = BandwidthEntry(t_ms=float(row["t_ms"]),
                                       rate_kbps=float(row["rate_kbps"]))
            except (TypeError, ValueError) as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if entry.rate_kbps <= 0:
                raise ParseError(f"{path}:{lineno}: rate_kbps must be positive")
            if last_t is not None and entry.t_ms <= last_t:
                raise NonMonotonicTime(
                    f"{path}:{lineno}: t_ms {entry.t_ms} not after {last_t}")
            last_t = entry.t_ms
            entries.append(entry)
    return BandwidthTrace(entries=tuple(entries))


class TokenBucketShaper:
    """In-process token bucket fed by a bandwidth trace on a virtual clock.

    Tokens refill at the trace rate (piecewise over rate changes) up to a
    burst capacity of one rate-second, capped at 64 KiB. Delivering more
    bytes than the bucket holds pushes the completion time forward by the
    piecewise transfer time of the deficit.
    """

    def __init__(self, trace: BandwidthTrace, bucket_cap: float = BUCKET_CAP_BYTES):
        self.trace = trace
        self.bucket_cap = bucket_cap
        self.last_update = 0.0
        self.tokens = self._capacity(trace.rate_bps_at(0.0))

    def _capacity(self, rate_bps: float) -> float:
        return min(rate_bps, self.bucket_cap)

    def _refill(self, now: float) -> None:
        t = self.last_update
        while t < now:
            rate = self.trace.rate_bps_at(t)
            boundary = self.trace.changes_after(t)
            seg_end = now if boundary is None else min(now, boundary)
            self.tokens = min(self._capacity(rate), self.tokens + rate * (seg_end - t))
            t = seg_end
        self.last_update = now

    def deliver(self, nbytes: int, now: float) -> float:
        """Account for nbytes leaving at virtual time `now`; returns completion time."""
        if nbytes <= 0:
            raise ValueError("nbytes must be positive")
        if now < self.last_update:
            now = self.last_update
        self._refill(now)
        if self.tokens >= nbytes:
            self.tokens -= nbytes
            return now

        deficit = nbytes - self.tokens
        self.tokens = 0.0
        t = now
        while deficit > 0:
            rate = self.trace.rate_bps_at(t)
            boundary = self.trace.changes_after(t)
            if boundary is None:
                t += deficit / rate
                deficit = 0.0
            else:
                segment_bytes = rate * (boundary - t)
                if segment_bytes >= deficit:
                    t += deficit / rate
                    deficit = 0.0
                else:
                    deficit -= segment_bytes
                    t = boundary
        self.last_update = t
        return t


@dataclass
class FrameRecord:
    frame_id: int
    t_send: float
    t_recv: float
    azimuth_deg: float
    elevation_deg: float
    tx: float
    ty: float
    tz: float
    level: int
    width: int
    height: int
    jpeg_quality: int
    bytes: int
    render_ms: float
    ema_bps: float
    ok: bool = True
    error: str = ""


@dataclass
class SessionLog:
    model_id: str
    movement_name: str = ""
    bandwidth_name: str = ""
    base_intrinsics: Intrinsics = DEFAULT_BASE_INTRINSICS
    frames: list[FrameRecord] = field(default_factory=list)
    complete: bool = True


def _is_panning(prev: MovementEntry | None, cur: MovementEntry) -> bool:
    if prev is None:
        return False
    delta = abs(cur.azimuth_deg - prev.azimuth_deg) + abs(cur.elevation_deg - prev.elevation_deg)
    return delta > PANNING_THRESHOLD_DEG


def run_session(endpoint: str, model_id: str, movement: MovementTrace,
                bandwidth: BandwidthTrace | None = None,
                ladder: BitrateLadder | None = None,
                abr_policy: LatencyAbr | None = None,
                base_intrinsics: Intrinsics = DEFAULT_BASE_INTRINSICS,
                sample_stride: int = DEFAULT_SAMPLE_STRIDE,
                out_dir: Path | None = None,
                virtual_time: bool | None = None,
                virtual_rtt: float = DEFAULT_VIRTUAL_RTT,
                client: httpx.Client | None = None,
                request_timeout: float = 30.0) -> SessionLog:
    """Replay a movement trace against a streaming backend.

    One request per trace entry, strictly serialized. With a bandwidth trace
    (or virtual_time=True) all timing is virtual: the measured duration is
    the token-bucket transfer time plus a fixed base RTT, making the whole
    session deterministic. Connection failures abort and flag the log as
    partial; per-frame HTTP errors drop that frame and feed nothing to the
    controller.
    """
    if virtual_time is None:
        virtual_time = bandwidth is not None
    abr = abr_policy or LatencyAbr(ladder or default_ladder())
    shaper = TokenBucketShaper(bandwidth) if bandwidth is not None else None
    log = SessionLog(model_id=model_id, base_intrinsics=base_intrinsics)

    frames_dir = None
    sampled: list[dict] = []
    if out_dir is not None:
        out_dir = Path(out_dir)
        frames_dir = out_dir / "frames"
        frames_dir.mkdir(parents=True, exist_ok=True)

    own_client = client is None
    if own_client:
        client = httpx.Client(timeout=request_timeout, verify=False)

    prev_entry: MovementEntry | None = None
    completion = 0.0
    wall_start = time.perf_counter()
    try:
        for index, entry in enumerate(movement.entries):
            frame_id = index + 1
            entry_t = entry.t_ms / 1000.0
            profile = abr.profile()
            intr = scale_intrinsics(base_intrinsics, profile.width, profile.height)
            body = {
                "model_id": model_id,
                "azimuth": entry.azimuth_deg,
                "elevation": entry.elevation_deg,
                "translation": list(entry.translation),
                "fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy,
                "width": intr.width, "height": intr.height,
                "jpeg_quality": profile.jpeg_quality,
                "frame_id": frame_id,
            }

            if virtual_time:
                t_send = max(entry_t, completion)
            else:
                lead = entry_t - (time.perf_counter() - wall_start)
                if lead > 0:
                    time.sleep(lead)
                t_send = time.perf_counter() - wall_start

            try:
                response = client.post(f"{endpoint.rstrip('/')}/render", json=body)
            except httpx.TransportError as exc:
                log.complete = False
                logger.error("session aborted, server unreachable: %s", exc)
                raise ServerUnreachable(str(exc), partial_log=log) from exc

            panning = _is_panning(prev_entry, entry)
            prev_entry = entry

            if response.status_code != 200:
                completion = max(completion, t_send)
                log.frames.append(FrameRecord(
                    frame_id=frame_id, t_send=t_send, t_recv=t_send,
                    azimuth_deg=entry.azimuth_deg, elevation_deg=entry.elevation_deg,
                    tx=entry.translation[0], ty=entry.translation[1], tz=entry.translation[2],
                    level=profile.level, width=intr.width, height=intr.height,
                    jpeg_quality=profile.jpeg_quality, bytes=0, render_ms=0.0,
                    ema_bps=abr.estimator.ema or 0.0, ok=False,
                    error=f"http {response.status_code}"))
                continue

            payload = response.content
            nbytes = int(response.headers.get("content-length", len(payload)))
            render_ms = float(response.headers.get("x-render-ms", 0.0))

            if virtual_time:
                if shaper is not None:
                    t_recv = shaper.deliver(nbytes, t_send) + virtual_rtt
                else:
                    t_recv = t_send + virtual_rtt
            else:
                t_recv = time.perf_counter() - wall_start
            duration = t_recv - t_send
            completion = t_recv

            abr.on_response(nbytes, duration, panning)
            log.frames.append(FrameRecord(
                frame_id=frame_id, t_send=t_send, t_recv=t_recv,
                azimuth_deg=entry.azimuth_deg, elevation_deg=entry.elevation_deg,
                tx=entry.translation[0], ty=entry.translation[1], tz=entry.translation[2],
                level=profile.level, width=intr.width, height=intr.height,
                jpeg_quality=profile.jpeg_quality, bytes=nbytes, render_ms=render_ms,
                ema_bps=abr.estimator.ema or 0.0))

            if frames_dir is not None and index % sample_stride == 0:
                frame_file = frames_dir / f"frame_{frame_id:06d}.jpg"
                frame_file.write_bytes(payload)
                sampled.append({
                    "index": index,
                    "frame_id": frame_id,
                    "file": str(frame_file.relative_to(out_dir)),
                    "azimuth_deg": entry.azimuth_deg,
                    "elevation_deg": entry.elevation_deg,
                    "translation": list(entry.translation),
                    "level": profile.level,
                    "width": intr.width,
                    "height": intr.height,
                    "jpeg_quality": profile.jpeg_quality,
                })
    finally:
        if own_client:
            client.close()
        if out_dir is not None:
            _write_samples_sidecar(out_dir, log, sampled)

    return log


def _write_samples_sidecar(out_dir: Path, log: SessionLog, sampled: list[dict]) -> None:
    sidecar = {
        "model_id": log.model_id,
        "complete": log.complete,
        "base_intrinsics": {
            "fx": log.base_intrinsics.fx, "fy": log.base_intrinsics.fy,
            "cx": log.base_intrinsics.cx, "cy": log.base_intrinsics.cy,
            "width": log.base_intrinsics.width, "height": log.base_intrinsics.height,
        },
        "samples": sampled,
    }
    (out_dir / "samples.json").write_text(json.dumps(sidecar, indent=2))


def export_session_report(log: SessionLog, out_dir: Path) -> dict:
    """Write per-frame CSV and a summary JSON; returns the summary."""
    if not log.frames:
        raise ValueError("cannot export an empty session log")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    fieldnames = list(asdict(log.frames[0]).keys())
    with open(out_dir / "frames.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for frame in log.frames:
            writer.writerow(asdict(frame))

    ok = [f for f in log.frames if f.ok]
    latencies = sorted(f.t_recv - f.t_send for f in ok)
    switches = sum(1 for a, b in zip(log.frames, log.frames[1:]) if a.level != b.level)
    summary = {
        "model_id": log.model_id,
        "frames": len(log.frames),
        "ok_frames": len(ok),
        "complete": log.complete,
        "mean_latency_s": sum(latencies) / len(latencies) if latencies else 0.0,
        "p95_latency_s": latencies[min(len(latencies) - 1, math.ceil(0.95 * len(latencies)) - 1)]
        if latencies else 0.0,
        "mean_bandwidth_bps": (sum(f.bytes * 8 / (f.t_recv - f.t_send) for f in ok
                                   if f.t_recv > f.t_send) / len(ok)) if ok else 0.0,
        "median_height": sorted(f.height for f in ok)[len(ok) // 2] if ok else 0,
        "median_level": sorted(f.level for f in ok)[len(ok) // 2] if ok else None,
        "switch_count": switches,
        "total_bytes": sum(f.bytes for f in ok),
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    return summary
