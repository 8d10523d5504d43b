"""CPU splat rasterizer: project, depth-sort, composite, encode.

The pipeline projects activated Gaussians into screen space with the
standard perspective Jacobian, sorts them by depth, and alpha-composites
front to back inside each splat's bounding box. The per-pixel inner loop
is JIT-compiled; everything else is vectorized numpy.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass

import numba
import numpy as np
from numba import njit
from PIL import Image

from .camera import Intrinsics, CameraPose, ViewTransform, Z_NEAR, scale_intrinsics, world_to_camera
from .model import ActivatedPrimitives

# Keeps every projected covariance comfortably positive definite and acts
# as a low-pass filter against sub-pixel splats.
COV2D_FLOOR = 0.3

# Compositing constants: alpha saturates below 1 so transmittance never hits
# zero exactly, and accumulation stops once a pixel is effectively opaque.
ALPHA_MAX = 0.99
TRANSMITTANCE_STOP = 1.0 / 255.0

# Bounding-box / culling radius in units of the splat's largest standard
# deviation. At 4.5 sigma the truncated tail is below exp(-10.125) ~ 4e-5,
# keeping bbox-restricted output within the 1/255 compositing quantum of a
# full evaluation; 3 sigma would leak visible error (exp(-4.5) ~ 1.1e-2).
CUTOFF_SIGMA = 4.5

# Per-splat evaluation radius shrinks with opacity: pixels where the splat
# could contribute less than 1/(255 * TAIL_SAFETY) alpha are never visited.
TAIL_SAFETY = 32.0

# Real spherical-harmonic basis constants, degrees 0..3.
SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
         -1.0925484305920792, 0.5462742152960396)
SH_C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
         0.3731763325901154, -0.4570457994644658, 1.445305721320277,
         -0.5900435899266435)


class RenderError(Exception):
    pass


class EncodeFailure(RenderError):
    pass


@dataclass(frozen=True)
class ScreenSplat:
    """One projected Gaussian in pixel space."""

    mean2d: tuple[float, float]
    cov2d: np.ndarray  # 2x2 symmetric positive definite
    depth: float
    color: np.ndarray  # RGB in [0, 1]
    opacity: float


class ScreenSplatBatch:
    """Column-oriented batch of screen splats (fast path for the kernel)."""

    def __init__(self, means2d, cov2d, depths, colors, opacities):
        self.means2d = means2d      # (K, 2)
        self.cov2d = cov2d          # (K, 3) symmetric entries (a, b, c)
        self.depths = depths        # (K,)
        self.colors = colors        # (K, 3)
        self.opacities = opacities  # (K,)

    def __len__(self) -> int:
        return self.depths.shape[0]

    def __getitem__(self, i: int) -> ScreenSplat:
        a, b, c = self.cov2d[i]
        return ScreenSplat(
            mean2d=(float(self.means2d[i, 0]), float(self.means2d[i, 1])),
            cov2d=np.array([[a, b], [b, c]]),
            depth=float(self.depths[i]),
            color=self.colors[i].copy(),
            opacity=float(self.opacities[i]),
        )


@dataclass
class Framebuffer:
    width: int
    height: int
    rgb: np.ndarray                # (H, W, 3) in [0, 1]
    accumulated_alpha: np.ndarray  # (H, W) in [0, 1]


@dataclass
class RenderStats:
    render_ms: float = 0.0
    splats_drawn: int = 0
    splats_culled: int = 0


def _quaternion_matrices(q: np.ndarray) -> np.ndarray:
    """(N, 4) unit quaternions in (w, x, y, z) order to (N, 3, 3) rotations."""
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    m = np.empty((q.shape[0], 3, 3))
    m[:, 0, 0] = 1 - 2 * (y * y + z * z)
    m[:, 0, 1] = 2 * (x * y - w * z)
    m[:, 0, 2] = 2 * (x * z + w * y)
    m[:, 1, 0] = 2 * (x * y + w * z)
    m[:, 1, 1] = 1 - 2 * (x * x + z * z)
    m[:, 1, 2] = 2 * (y * z - w * x)
    m[:, 2, 0] = 2 * (x * z - w * y)
    m[:, 2, 1] = 2 * (y * z + w * x)
    m[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def eval_sh_colors(prims: ActivatedPrimitives, camera_position: np.ndarray,
                   degree: int) -> np.ndarray:
    """View-dependent colors from the SH coefficients, clamped to [0, 1]."""
    if degree == 0:
        return prims.colors_dc
    if not 0 <= degree <= 3:
        raise ValueError("SH degree must be in 0..3")

    dirs = prims.means - camera_position.reshape(1, 3)
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    dirs = dirs / np.maximum(norms, 1e-12)
    x, y, z = dirs[:, 0:1], dirs[:, 1:2], dirs[:, 2:3]
    sh = prims.sh_coeffs

    result = SH_C0 * sh[:, 0]
    result = result - SH_C1 * y * sh[:, 1] + SH_C1 * z * sh[:, 2] - SH_C1 * x * sh[:, 3]
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        xy, yz, xz = x * y, y * z, x * z
        result = (result
                  + SH_C2[0] * xy * sh[:, 4]
                  + SH_C2[1] * yz * sh[:, 5]
                  + SH_C2[2] * (2.0 * zz - xx - yy) * sh[:, 6]
                  + SH_C2[3] * xz * sh[:, 7]
                  + SH_C2[4] * (xx - yy) * sh[:, 8])
    if degree >= 3:
        result = (result
                  + SH_C3[0] * y * (3 * xx - yy) * sh[:, 9]
                  + SH_C3[1] * xy * z * sh[:, 10]
                  + SH_C3[2] * y * (4 * zz - xx - yy) * sh[:, 11]
                  + SH_C3[3] * z * (2 * zz - 3 * xx - 3 * yy) * sh[:, 12]
                  + SH_C3[4] * x * (4 * zz - xx - yy) * sh[:, 13]
                  + SH_C3[5] * z * (xx - yy) * sh[:, 14]
                  + SH_C3[6] * x * (xx - 3 * yy) * sh[:, 15])
    return np.clip(result + 0.5, 0.0, 1.0)


@njit(cache=True, parallel=True)
def _project_kernel(means, quats, scales, w2c, fx, fy, cx, cy, width, height,
                    z_near, cov_floor, cutoff, do_cull,
                    u_out, v_out, z_out, cov_out, keep_out):
    n = means.shape[0]
    r00, r01, r02 = w2c[0, 0], w2c[0, 1], w2c[0, 2]
    r10, r11, r12 = w2c[1, 0], w2c[1, 1], w2c[1, 2]
    r20, r21, r22 = w2c[2, 0], w2c[2, 1], w2c[2, 2]
    t0, t1, t2 = w2c[0, 3], w2c[1, 3], w2c[2, 3]
    for i in numba.prange(n):
        mx, my, mz = means[i, 0], means[i, 1], means[i, 2]
        x = r00 * mx + r01 * my + r02 * mz + t0
        y = r10 * mx + r11 * my + r12 * mz + t1
        z = r20 * mx + r21 * my + r22 * mz + t2
        z_out[i] = z
        if z <= z_near:
            keep_out[i] = False
            continue

        # quaternion (w,x,y,z) to rotation, scaled columns: L = R_q diag(s)
        qw, qx, qy, qz = quats[i, 0], quats[i, 1], quats[i, 2], quats[i, 3]
        sx, sy, sz = scales[i, 0], scales[i, 1], scales[i, 2]
        m00 = (1.0 - 2.0 * (qy * qy + qz * qz)) * sx
        m01 = (2.0 * (qx * qy - qw * qz)) * sy
        m02 = (2.0 * (qx * qz + qw * qy)) * sz
        m10 = (2.0 * (qx * qy + qw * qz)) * sx
        m11 = (1.0 - 2.0 * (qx * qx + qz * qz)) * sy
        m12 = (2.0 * (qy * qz - qw * qx)) * sz
        m20 = (2.0 * (qx * qz - qw * qy)) * sx
        m21 = (2.0 * (qy * qz + qw * qx)) * sy
        m22 = (1.0 - 2.0 * (qx * qx + qy * qy)) * sz

        # camera-frame axes of L: A = R_view @ L (3x3)
        a00 = r00 * m00 + r01 * m10 + r02 * m20
        a01 = r00 * m01 + r01 * m11 + r02 * m21
        a02 = r00 * m02 + r01 * m12 + r02 * m22
        a10 = r10 * m00 + r11 * m10 + r12 * m20
        a11 = r10 * m01 + r11 * m11 + r12 * m21
        a12 = r10 * m02 + r11 * m12 + r12 * m22
        a20 = r20 * m00 + r21 * m10 + r22 * m20
        a21 = r20 * m01 + r21 * m11 + r22 * m21
        a22 = r20 * m02 + r21 * m12 + r22 * m22

        inv_z = 1.0 / z
        jx = fx * inv_z
        jy = fy * inv_z
        gx = -fx * x * inv_z * inv_z
        gy = -fy * y * inv_z * inv_z
        # rows of J @ A, with J = [[jx, 0, gx], [0, jy, gy]]
        p0 = jx * a00 + gx * a20
        p1 = jx * a01 + gx * a21
        p2 = jx * a02 + gx * a22
        q0 = jy * a10 + gy * a20
        q1 = jy * a11 + gy * a21
        q2 = jy * a12 + gy * a22
        cov_a = p0 * p0 + p1 * p1 + p2 * p2 + cov_floor
        cov_b = p0 * q0 + p1 * q1 + p2 * q2
        cov_c = q0 * q0 + q1 * q1 + q2 * q2 + cov_floor

        u = fx * x * inv_z + cx
        v = fy * y * inv_z + cy
        u_out[i] = u
        v_out[i] = v
        cov_out[i, 0] = cov_a
        cov_out[i, 1] = cov_b
        cov_out[i, 2] = cov_c

        if do_cull:
            mid = 0.5 * (cov_a + cov_c)
            disc = 0.25 * (cov_a - cov_c) ** 2 + cov_b * cov_b
            radius = cutoff * np.sqrt(mid + np.sqrt(disc))
            keep_out[i] = (u + radius > 0.0 and u - radius < width
                           and v + radius > 0.0 and v - radius < height)
        else:
            keep_out[i] = True


def project_gaussians(prims: ActivatedPrimitives, view: ViewTransform,
                      intr: Intrinsics, sh_degree: int = 0,
                      frustum_culling: bool = True,
                      stats: RenderStats | None = None) -> ScreenSplatBatch:
    """Project Gaussians to screen splats, culling invisible ones.

    The 2D covariance is J W Sigma W^T J^T, assembled per splat as the Gram
    matrix of (J W R_q diag(s)). Splats behind the near plane are always
    dropped; with frustum_culling enabled, splats whose cutoff-radius extent
    misses the image are dropped as well (they could not contribute a
    visible amount anyway).
    """
    n = prims.count
    if n == 0:
        empty = ScreenSplatBatch(np.zeros((0, 2)), np.zeros((0, 3)), np.zeros(0),
                                 np.zeros((0, 3)), np.zeros(0))
        if stats is not None:
            stats.splats_drawn = 0
            stats.splats_culled = 0
        return empty

    w2c = np.ascontiguousarray(view.world_to_camera[:3, :])
    u = np.empty(n)
    v = np.empty(n)
    z = np.empty(n)
    cov2d = np.empty((n, 3))
    keep = np.empty(n, dtype=np.bool_)
    _project_kernel(prims.means, prims.rotations, prims.scales, w2c,
                    intr.fx, intr.fy, intr.cx, intr.cy,
                    float(intr.width), float(intr.height),
                    Z_NEAR, COV2D_FLOOR, CUTOFF_SIGMA, frustum_culling,
                    u, v, z, cov2d, keep)

    if sh_degree == 0:
        colors = prims.colors_dc
    else:
        cam_pos = -view.rotation @ view.world_to_camera[:3, 3]
        colors = eval_sh_colors(prims, cam_pos, sh_degree)

    kept = np.flatnonzero(keep)
    batch = ScreenSplatBatch(
        means2d=np.stack([u[kept], v[kept]], axis=1),
        cov2d=cov2d[kept],
        depths=z[kept].copy(),
        colors=np.ascontiguousarray(colors[kept]),
        opacities=prims.opacities[kept].copy(),
    )
    if stats is not None:
        stats.splats_drawn = len(kept)
        stats.splats_culled = n - len(kept)
    return batch


def sort_splats(batch: ScreenSplatBatch) -> ScreenSplatBatch:
    """Stable ascending depth order; ties keep their input order."""
    order = np.argsort(batch.depths, kind="stable")
    return ScreenSplatBatch(
        means2d=batch.means2d[order],
        cov2d=batch.cov2d[order],
        depths=batch.depths[order],
        colors=batch.colors[order],
        opacities=batch.opacities[order],
    )


@njit(cache=True, inline="always")
def _find_live(next_live, i):
    root = i
    while next_live[root] != root:
        root = next_live[root]
    while next_live[i] != root:
        prev = next_live[i]
        next_live[i] = root
        i = prev
    return root


# column layout of the packed per-splat table consumed by the kernel
_P_U, _P_V, _P_IA, _P_IB, _P_IC, _P_RSQ, _P_R, _P_G, _P_B, _P_OP, _P_RY = range(11)


@njit(cache=True, parallel=True)
def _count_kernel(packed, height, n_stripes, rows_per, counts):
    """Per-stripe row occupancy counts (counts[stripe, local_iy + 1])."""
    n = packed.shape[0]
    for stripe in numba.prange(n_stripes):
        y_begin = stripe * rows_per
        y_end = min(height, y_begin + rows_per)
        for s in range(n):
            v = packed[s, _P_V]
            ry = packed[s, _P_RY]
            lo = max(y_begin, int(np.floor(v - ry)))
            hi = min(y_end, int(np.ceil(v + ry)) + 1)
            for iy in range(lo, hi):
                counts[stripe, iy - y_begin + 1] += 1


@njit(cache=True, parallel=True)
def _composite_kernel(packed, width, height, n_stripes, rows_per,
                      offsets, cursor, row_splats, next_live_ws,
                      background, rgb, transmittance):
    """Stripe-parallel front-to-back compositing.

    Splats arrive depth-sorted. Each stripe first materializes its row
    buckets (preserving depth order), then walks each row's exact ellipse
    intervals. Rows are fully independent, so the output does not depend on
    stripe count or thread scheduling. All workspaces are caller-allocated;
    nothing allocates inside the parallel region.
    """
    n = packed.shape[0]

    half = np.float32(0.5)
    two = np.float32(2.0)
    one = np.float32(1.0)
    alpha_max = np.float32(ALPHA_MAX)
    t_stop = np.float32(TRANSMITTANCE_STOP)

    for stripe in numba.prange(n_stripes):
        y_begin = stripe * rows_per
        y_end = min(height, y_begin + rows_per)
        for s in range(n):
            v = packed[s, _P_V]
            ry = packed[s, _P_RY]
            lo = max(y_begin, int(np.floor(v - ry)))
            hi = min(y_end, int(np.ceil(v + ry)) + 1)
            for iy in range(lo, hi):
                local = iy - y_begin
                row_splats[cursor[stripe, local]] = s
                cursor[stripe, local] += 1

        next_live = next_live_ws[stripe]
        for local_iy in range(y_end - y_begin):
            iy = y_begin + local_iy
            py = np.float32(iy) + half
            # skip pointers: next_live[i] is the first non-saturated pixel
            # >= i (path-compressed), so opaque spans cost O(1) amortized.
            for i in range(width + 1):
                next_live[i] = i
            first_live = 0
            for k in range(offsets[stripe, local_iy], offsets[stripe, local_iy + 1]):
                if first_live >= width:
                    break  # row saturated, later splats cannot contribute
                s = row_splats[k]
                u = packed[s, _P_U]
                dy = py - packed[s, _P_V]
                ia = packed[s, _P_IA]
                ib = packed[s, _P_IB]
                ic = packed[s, _P_IC]
                # x-interval where ia*dx^2 + 2*ib*dx*dy + ic*dy^2 <= rsq
                disc = (ib * dy) * (ib * dy) - ia * (ic * dy * dy - packed[s, _P_RSQ])
                if disc <= 0.0:
                    continue
                span = np.sqrt(disc) / ia
                mid = u - ib * dy / ia
                x0 = max(first_live, int(np.floor(mid - span)))
                x1 = min(width, int(np.ceil(mid + span)) + 1)
                if x0 >= x1:
                    continue  # interval off-image; keeps skip lookups in bounds
                color_r = packed[s, _P_R]
                color_g = packed[s, _P_G]
                color_b = packed[s, _P_B]
                opacity = packed[s, _P_OP]
                cy_term = ic * dy * dy
                ib_dy = two * ib * dy
                ix = _find_live(next_live, x0)
                while ix < x1:
                    t = transmittance[iy, ix]
                    dx = np.float32(ix) + half - u
                    power = -half * (ia * dx * dx + ib_dy * dx + cy_term)
                    alpha = opacity * np.exp(power)
                    if alpha > alpha_max:
                        alpha = alpha_max
                    weight = t * alpha
                    rgb[iy, ix, 0] += weight * color_r
                    rgb[iy, ix, 1] += weight * color_g
                    rgb[iy, ix, 2] += weight * color_b
                    new_t = t * (one - alpha)
                    transmittance[iy, ix] = new_t
                    if new_t < t_stop:
                        next_live[ix] = ix + 1
                    ix = _find_live(next_live, ix + 1)
                first_live = _find_live(next_live, first_live)

            for ix in range(width):
                t = transmittance[iy, ix]
                rgb[iy, ix, 0] += t * background[0]
                rgb[iy, ix, 1] += t * background[1]
                rgb[iy, ix, 2] += t * background[2]


def rasterize(batch: ScreenSplatBatch, width: int, height: int,
              background=(0.0, 0.0, 0.0)) -> Framebuffer:
    """Alpha-composite depth-sorted splats front to back over a background.

    Each splat is evaluated only inside the ellipse where it could still
    contribute at least 1/(255 * TAIL_SAFETY) alpha, and pixels stop
    accumulating once their remaining transmittance drops below 1/255; both
    shortcuts stay within one 8-bit quantum of an exhaustive evaluation.
    """
    rgb = np.zeros((height, width, 3), dtype=np.float32)
    transmittance = np.ones((height, width), dtype=np.float32)

    a = batch.cov2d[:, 0]
    b = batch.cov2d[:, 1]
    c = batch.cov2d[:, 2]
    det = a * c - b * b
    rsq = _cutoff_radius_sq(batch.opacities)
    # one interleaved row per splat keeps the kernel's gathers on one line
    packed = np.column_stack([
        batch.means2d[:, 0], batch.means2d[:, 1],
        c / det, -b / det, a / det, rsq,
        batch.colors[:, 0], batch.colors[:, 1], batch.colors[:, 2],
        batch.opacities, np.sqrt(c * rsq),
    ]).astype(np.float32)

    n_stripes = min(max(1, height // 16), 8 * numba.get_num_threads())
    rows_per = (height + n_stripes - 1) // n_stripes
    counts = np.zeros((n_stripes, rows_per + 1), dtype=np.int64)
    _count_kernel(packed, height, n_stripes, rows_per, counts)
    local_offsets = np.cumsum(counts, axis=1)
    stripe_base = np.concatenate([[0], np.cumsum(local_offsets[:, -1])])[:-1]
    offsets = local_offsets + stripe_base[:, None]
    cursor = np.ascontiguousarray(offsets[:, :-1])
    row_splats = np.empty(int(offsets[-1, -1]), dtype=np.int32)
    next_live_ws = np.empty((n_stripes, width + 1), dtype=np.int32)
    _composite_kernel(packed, width, height, n_stripes, rows_per,
                      offsets, cursor, row_splats, next_live_ws,
                      np.asarray(background, dtype=np.float32),
                      rgb, transmittance)

    rgb64 = np.clip(rgb.astype(np.float64), 0.0, 1.0)
    alpha = np.clip(1.0 - transmittance.astype(np.float64), 0.0, 1.0)
    return Framebuffer(width=width, height=height, rgb=rgb64,
                       accumulated_alpha=alpha)


def _cutoff_radius_sq(opacities: np.ndarray) -> np.ndarray:
    """Squared Mahalanobis cutoff per splat, capped at CUTOFF_SIGMA."""
    floor = 1.0 / (255.0 * TAIL_SAFETY)
    with np.errstate(divide="ignore"):
        rsq = 2.0 * np.log(np.maximum(opacities, floor) / floor)
    return np.minimum(rsq, CUTOFF_SIGMA ** 2)


def framebuffer_to_u8(fb: Framebuffer) -> np.ndarray:
    return np.clip(fb.rgb * 255.0 + 0.5, 0.0, 255.0).astype(np.uint8)


def encode_jpeg(fb: Framebuffer, quality: int) -> bytes:
    """Encode as baseline JPEG; 4:2:0 chroma below quality 90, 4:4:4 at 90+."""
    if fb.width == 0 or fb.height == 0:
        raise EncodeFailure("cannot encode a zero-dimension framebuffer")
    if not 1 <= quality <= 100:
        raise EncodeFailure(f"jpeg quality {quality} out of range 1..100")
    img = Image.fromarray(framebuffer_to_u8(fb), mode="RGB")
    buf = io.BytesIO()
    img.save(buf, format="JPEG", quality=quality,
             subsampling=2 if quality < 90 else 0)
    return buf.getvalue()


def encode_png(fb: Framebuffer) -> bytes:
    if fb.width == 0 or fb.height == 0:
        raise EncodeFailure("cannot encode a zero-dimension framebuffer")
    img = Image.fromarray(framebuffer_to_u8(fb), mode="RGB")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def decode_image(data: bytes) -> np.ndarray:
    """Decode JPEG/PNG bytes to an (H, W, 3) uint8 array."""
    with Image.open(io.BytesIO(data)) as img:
        return np.asarray(img.convert("RGB"))


def render_framebuffer(prims: ActivatedPrimitives, pose: CameraPose,
                       intr: Intrinsics, background=(0.0, 0.0, 0.0),
                       sh_degree: int = 0,
                       stats: RenderStats | None = None) -> Framebuffer:
    """Full project/sort/composite pipeline at the given intrinsics."""
    view = world_to_camera(pose)
    batch = project_gaussians(prims, view, intr, sh_degree=sh_degree, stats=stats)
    batch = sort_splats(batch)
    return rasterize(batch, intr.width, intr.height, background)


def render_view(prims: ActivatedPrimitives, pose: CameraPose, base_intr: Intrinsics,
                profile, background=(0.0, 0.0, 0.0),
                sh_degree: int = 0) -> tuple[bytes, RenderStats]:
    """Render one frame at a ladder profile, returning JPEG bytes and stats.

    Intrinsics are given at the session's base resolution and rescaled to
    the profile here, so the field of view is identical on every rung.
    """
    stats = RenderStats()
    start = time.perf_counter()
    intr = scale_intrinsics(base_intr, profile.width, profile.height)
    fb = render_framebuffer(prims, pose, intr, background, sh_degree, stats)
    payload = encode_jpeg(fb, profile.jpeg_quality)
    stats.render_ms = (time.perf_counter() - start) * 1000.0
    return payload, stats
