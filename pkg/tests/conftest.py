"""Shared fixtures and independent oracles used across the suite."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
import pytest

from splatstream.model import GaussianPrimitiveSet


def write_ply_bytes(count, rows, property_names, fmt="binary_little_endian 1.0"):
    """Reference PLY writer built on struct.pack, independent of the parser
    and of the package's own serializer.

    `rows` is a list of per-vertex float lists matching property_names.
    """
    lines = ["ply", f"format {fmt}", f"element vertex {count}"]
    lines += [f"property float {name}" for name in property_names]
    lines.append("end_header")
    header = ("\n".join(lines) + "\n").encode("ascii")
    body = b""
    for row in rows:
        assert len(row) == len(property_names)
        body += struct.pack("<" + "f" * len(row), *row)
    return header + body


SPLAT_PROPS = ["x", "y", "z",
               "scale_0", "scale_1", "scale_2",
               "rot_0", "rot_1", "rot_2", "rot_3",
               "opacity",
               "f_dc_0", "f_dc_1", "f_dc_2"]
F_REST_PROPS = [f"f_rest_{i}" for i in range(45)]


def splat_rows_from_arrays(means, log_scales, quats, opacities, f_dc, f_rest=None):
    """Arrange attribute arrays into writer rows (f_rest channel-major)."""
    rows = []
    for i in range(len(means)):
        row = list(means[i]) + list(log_scales[i]) + list(quats[i])
        row.append(float(opacities[i]))
        row += list(f_dc[i])
        if f_rest is not None:
            for ch in range(3):
                row += [float(f_rest[i][k][ch]) for k in range(15)]
        rows.append(row)
    return rows


def random_raw_set(rng: np.random.Generator, count: int,
                   with_rest: bool = True) -> GaussianPrimitiveSet:
    """Random raw attributes in float32-representable ranges."""
    f32 = lambda a: a.astype(np.float32).astype(np.float64)
    means = f32(rng.uniform(-50, 50, (count, 3)))
    log_scales = f32(rng.uniform(-6, 1, (count, 3)))
    quats = f32(rng.normal(size=(count, 4)))
    opacities = f32(rng.uniform(-8, 8, count))
    sh = np.zeros((count, 16, 3))
    sh[:, 0, :] = f32(rng.uniform(-2, 2, (count, 3)))
    if with_rest:
        sh[:, 1:, :] = f32(rng.normal(scale=0.3, size=(count, 15, 3)))
    return GaussianPrimitiveSet(count=count, means=means, log_scales=log_scales,
                                quaternions=quats, opacity_logits=opacities,
                                sh_coeffs=sh)


def oracle_ply_bytes(prims: GaussianPrimitiveSet, with_rest: bool = True) -> bytes:
    names = SPLAT_PROPS + (F_REST_PROPS if with_rest else [])
    rest = prims.sh_coeffs[:, 1:, :] if with_rest else None
    rows = splat_rows_from_arrays(prims.means, prims.log_scales, prims.quaternions,
                                  prims.opacity_logits, prims.sh_coeffs[:, 0, :],
                                  rest)
    return write_ply_bytes(prims.count, rows, names)


@pytest.fixture
def model_root(tmp_path: Path) -> Path:
    """Two small models on disk, ids 'train' and 'truck'."""
    rng = np.random.default_rng(11)
    for name, count in (("train", 40), ("truck", 25)):
        prims = random_raw_set(rng, count)
        directory = tmp_path / name
        directory.mkdir()
        (directory / "point_cloud.ply").write_bytes(oracle_ply_bytes(prims))
    return tmp_path
