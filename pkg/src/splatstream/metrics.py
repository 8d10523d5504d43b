"""Image quality metrics and post-session ground-truth evaluation.

Transmitted frames are compared against deterministic lossless re-renders
of the same poses at the session's base resolution. Lower-rung frames are
upscaled bilinearly before comparison, so every triplet is evaluated at
identical dimensions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from .camera import CameraPose, Intrinsics, pose_from_degrees
from .harness import SessionLog
from .model import ActivatedPrimitives
from .render import decode_image, encode_png, render_framebuffer

PSNR_CAP_DB = 100.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_L = 255.0

# ITU-R BT.601 luma weights.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


class MetricError(Exception):
    pass


class DimensionMismatch(MetricError):
    pass


class TooSmall(MetricError):
    pass


class EmptyInput(MetricError):
    pass


class IndexOutOfRange(MetricError):
    pass


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB over all channels of 8-bit images."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    mse = np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2)
    if mse == 0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(255.0 ** 2 / mse))


def _luma(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        return img @ LUMA_WEIGHTS
    return img


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity on luma with an 11x11 Gaussian window.

    Uses sigma 1.5, K1 = 0.01, K2 = 0.03 over an 8-bit dynamic range; local
    statistics are averaged only where the full window fits, so borders do
    not dilute the score.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    if min(a.shape[0], a.shape[1]) < SSIM_WINDOW:
        raise TooSmall(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}")

    x = _luma(a)
    y = _luma(b)
    if np.array_equal(x, y):
        return 1.0

    # Gaussian window truncated to the 11x11 footprint.
    radius = (SSIM_WINDOW - 1) // 2
    truncate = radius / SSIM_SIGMA

    def filt(img):
        return gaussian_filter(img, sigma=SSIM_SIGMA, truncate=truncate, mode="nearest")

    mu_x = filt(x)
    mu_y = filt(y)
    sigma_x = filt(x * x) - mu_x * mu_x
    sigma_y = filt(y * y) - mu_y * mu_y
    sigma_xy = filt(x * y) - mu_x * mu_y

    c1 = (SSIM_K1 * SSIM_L) ** 2
    c2 = (SSIM_K2 * SSIM_L) ** 2
    ssim_map = ((2 * mu_x * mu_y + c1) * (2 * sigma_xy + c2)
                / ((mu_x ** 2 + mu_y ** 2 + c1) * (sigma_x + sigma_y + c2)))

    core = ssim_map[radius:-radius, radius:-radius]
    return float(core.mean())


@dataclass
class EvalTriplet:
    transmitted: np.ndarray   # decoded frame upscaled to base resolution
    ground_truth: np.ndarray  # lossless base-resolution render
    pose: CameraPose
    level: int


def upscale_to(img: np.ndarray, width: int, height: int) -> np.ndarray:
    """Bilinear resize of an (H, W, 3) uint8 image."""
    if img.shape[1] == width and img.shape[0] == height:
        return img
    pil = Image.fromarray(img, mode="RGB")
    return np.asarray(pil.resize((width, height), Image.BILINEAR))


def materialize_ground_truth(prims: ActivatedPrimitives, log: SessionLog,
                             sample_indices: list[int],
                             background=(0.0, 0.0, 0.0)) -> list[bytes]:
    """Re-render logged poses at base resolution as lossless PNGs.

    Output is deterministic: the same call always produces byte-identical
    frames, which is what makes offline comparisons meaningful.
    """
    pngs = []
    for idx in sample_indices:
        if not 0 <= idx < len(log.frames):
            raise IndexOutOfRange(f"sample index {idx} outside log of {len(log.frames)}")
        frame = log.frames[idx]
        pose = pose_from_degrees(frame.azimuth_deg, frame.elevation_deg,
                                 (frame.tx, frame.ty, frame.tz))
        fb = render_framebuffer(prims, pose, log.base_intrinsics, background)
        pngs.append(encode_png(fb))
    return pngs


def aggregate_session(triplets: list[EvalTriplet]) -> dict:
    """Mean/min PSNR and SSIM plus a per-level breakdown."""
    if not triplets:
        raise EmptyInput("no triplets to aggregate")
    psnrs = []
    ssims = []
    by_level: dict[int, list[tuple[float, float]]] = {}
    for t in triplets:
        p = psnr(t.transmitted, t.ground_truth)
        s = ssim(t.transmitted, t.ground_truth)
        psnrs.append(p)
        ssims.append(s)
        by_level.setdefault(t.level, []).append((p, s))

    report = {
        "frames": len(triplets),
        "mean_psnr_db": float(np.mean(psnrs)),
        "min_psnr_db": float(np.min(psnrs)),
        "mean_ssim": float(np.mean(ssims)),
        "min_ssim": float(np.min(ssims)),
        "per_level": {
            str(level): {
                "frames": len(vals),
                "mean_psnr_db": float(np.mean([v[0] for v in vals])),
                "mean_ssim": float(np.mean([v[1] for v in vals])),
            }
            for level, vals in sorted(by_level.items())
        },
    }
    return report


def evaluate_session_dir(prims: ActivatedPrimitives, session_dir: Path,
                         background=(0.0, 0.0, 0.0)) -> dict:
    """Evaluate a harness output directory (samples.json + frames/)."""
    session_dir = Path(session_dir)
    sidecar_path = session_dir / "samples.json"
    if not sidecar_path.is_file():
        raise EmptyInput(f"no samples.json under {session_dir}")
    sidecar = json.loads(sidecar_path.read_text())
    samples = sidecar.get("samples", [])
    if not samples:
        raise EmptyInput("session has no sampled frames")

    base = sidecar["base_intrinsics"]
    base_intr = Intrinsics(fx=base["fx"], fy=base["fy"], cx=base["cx"], cy=base["cy"],
                           width=int(base["width"]), height=int(base["height"]))

    triplets = []
    for sample in samples:
        pose = pose_from_degrees(sample["azimuth_deg"], sample["elevation_deg"],
                                 tuple(sample["translation"]))
        fb = render_framebuffer(prims, pose, base_intr, background)
        gt = decode_image(encode_png(fb))
        transmitted = decode_image((session_dir / sample["file"]).read_bytes())
        transmitted = upscale_to(transmitted, base_intr.width, base_intr.height)
        triplets.append(EvalTriplet(transmitted=transmitted, ground_truth=gt,
                                    pose=pose, level=int(sample["level"])))

    report = aggregate_session(triplets)
    report["model_id"] = sidecar.get("model_id", "")
    return report
