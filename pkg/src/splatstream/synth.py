"""Synthetic splat scenes for demos and self-contained testing."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .model import GaussianPrimitiveSet, SH_COEFF_COUNT, F_REST_COUNT


def make_synthetic_set(count: int = 1000, seed: int = 7,
                       center=(0.0, 0.0, 4.0), extent=(3.0, 2.0, 2.0),
                       scale_range=(0.02, 0.12),
                       include_rest: bool = False) -> GaussianPrimitiveSet:
    """Random but reproducible cloud of splats in front of the origin."""
    rng = np.random.default_rng(seed)
    center = np.asarray(center)
    extent = np.asarray(extent)

    means = center + (rng.random((count, 3)) - 0.5) * extent
    log_scales = np.log(rng.uniform(scale_range[0], scale_range[1], size=(count, 3)))
    quats = rng.normal(size=(count, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    opacity_logits = rng.uniform(-1.0, 3.0, size=count)

    sh = np.zeros((count, SH_COEFF_COUNT, 3))
    sh[:, 0, :] = rng.uniform(-1.8, 1.8, size=(count, 3))
    if include_rest:
        sh[:, 1:, :] = rng.normal(scale=0.2, size=(count, SH_COEFF_COUNT - 1, 3))

    return GaussianPrimitiveSet(
        count=count,
        means=means,
        log_scales=log_scales,
        quaternions=quats,
        opacity_logits=opacity_logits,
        sh_coeffs=sh,
    )


def serialize_ply(prims: GaussianPrimitiveSet, include_rest: bool = True) -> bytes:
    """Serialize a primitive set in the binary little-endian splat layout."""
    names = ["x", "y", "z",
             "scale_0", "scale_1", "scale_2",
             "rot_0", "rot_1", "rot_2", "rot_3",
             "opacity",
             "f_dc_0", "f_dc_1", "f_dc_2"]
    if include_rest:
        names += [f"f_rest_{i}" for i in range(F_REST_COUNT)]

    header = ["ply", "format binary_little_endian 1.0",
              f"element vertex {prims.count}"]
    header += [f"property float {name}" for name in names]
    header.append("end_header")

    columns = [prims.means, prims.log_scales, prims.quaternions,
               prims.opacity_logits.reshape(-1, 1), prims.sh_coeffs[:, 0, :]]
    if include_rest:
        # channel-major on disk: all red coefficients, then green, then blue
        rest = prims.sh_coeffs[:, 1:, :].transpose(0, 2, 1).reshape(prims.count, -1)
        columns.append(rest)

    table = np.concatenate(columns, axis=1).astype("<f4")
    return ("\n".join(header) + "\n").encode("ascii") + table.tobytes()


def write_demo_model(directory: Path, count: int = 1000, seed: int = 7) -> Path:
    """Create `<directory>/point_cloud.ply` with a synthetic scene."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    prims = make_synthetic_set(count=count, seed=seed)
    path = directory / "point_cloud.ply"
    path.write_bytes(serialize_ply(prims))
    return path
