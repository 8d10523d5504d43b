"""Gaussian-splat PLY parsing, attribute activation, and the model registry.

Scenes arrive as binary little-endian PLY files with one float32 vertex
element (the de-facto splat export layout). Parsing is strict: anything
that would produce a partial or non-finite primitive set rejects the whole
file. The registry loads scenes lazily, shares them across renders with a
reference count, and evicts idle ones after a timeout.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.special import expit

logger = logging.getLogger(__name__)

# DC spherical-harmonic coefficient to linear color: c = SH_DC * f_dc + 0.5.
SH_DC_COEFF = 0.28209479177

SH_COEFF_COUNT = 16  # degree-3 layout, slot 0 is the DC term
F_REST_COUNT = (SH_COEFF_COUNT - 1) * 3

DEFAULT_EVICTION_TIMEOUT = 300.0

REQUIRED_PROPERTIES = (
    "x", "y", "z",
    "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
    "opacity",
    "f_dc_0", "f_dc_1", "f_dc_2",
)


class ModelError(Exception):
    """Base class for model loading and registry errors."""


class MalformedHeader(ModelError):
    pass


class MissingProperty(ModelError):
    pass


class TruncatedBody(ModelError):
    pass


class NonFiniteAttribute(ModelError):
    pass


class RootNotFound(ModelError):
    pass


class UnknownModel(ModelError):
    pass


class LoadFailed(ModelError):
    pass


class UnderflowRelease(ModelError):
    pass


@dataclass
class GaussianPrimitiveSet:
    """Raw per-Gaussian attributes exactly as stored in the file."""

    count: int
    means: np.ndarray          # (N, 3)
    log_scales: np.ndarray     # (N, 3)
    quaternions: np.ndarray    # (N, 4), (w, x, y, z)
    opacity_logits: np.ndarray  # (N,)
    sh_coeffs: np.ndarray      # (N, 16, 3)


@dataclass
class ActivatedPrimitives:
    """Primitives after activation, ready for rendering."""

    means: np.ndarray       # (N, 3)
    scales: np.ndarray      # (N, 3), strictly positive
    rotations: np.ndarray   # (N, 4), unit quaternions
    opacities: np.ndarray   # (N,), in [0, 1]
    colors_dc: np.ndarray   # (N, 3), in [0, 1]
    sh_coeffs: np.ndarray   # (N, 16, 3), kept for degree > 0 rendering

    @property
    def count(self) -> int:
        return self.means.shape[0]


def _parse_header(data: bytes):
    """Split the header, returning (property names, vertex count, body offset)."""
    end = data.find(b"end_header")
    if end < 0:
        raise MalformedHeader("no end_header line found")
    newline = data.find(b"\n", end)
    if newline < 0:
        raise MalformedHeader("end_header line is not terminated")
    body_offset = newline + 1

    try:
        header_text = data[:end].decode("ascii")
    except UnicodeDecodeError as exc:
        raise MalformedHeader(f"header is not ASCII: {exc}") from None

    lines = [ln.strip() for ln in header_text.splitlines() if ln.strip()]
    if not lines or lines[0] != "ply":
        raise MalformedHeader("missing 'ply' magic line")

    format_seen = False
    vertex_count = None
    properties: list[str] = []
    in_vertex_element = False

    for line in lines[1:]:
        parts = line.split()
        if parts[0] == "comment":
            continue
        if parts[0] == "format":
            if parts[1:] != ["binary_little_endian", "1.0"]:
                raise MalformedHeader(f"unsupported format: {line!r}")
            format_seen = True
        elif parts[0] == "element":
            if len(parts) != 3:
                raise MalformedHeader(f"bad element line: {line!r}")
            if parts[1] != "vertex":
                raise MalformedHeader(f"unsupported element {parts[1]!r}")
            if vertex_count is not None:
                raise MalformedHeader("multiple vertex elements")
            try:
                vertex_count = int(parts[2])
            except ValueError:
                raise MalformedHeader(f"bad vertex count: {parts[2]!r}") from None
            if vertex_count < 0:
                raise MalformedHeader("negative vertex count")
            in_vertex_element = True
        elif parts[0] == "property":
            if not in_vertex_element:
                raise MalformedHeader("property outside the vertex element")
            if len(parts) != 3:
                raise MalformedHeader(f"bad property line: {line!r}")
            if parts[1] != "float":
                raise MalformedHeader(f"only float32 properties supported, got {parts[1]!r}")
            properties.append(parts[2])
        else:
            raise MalformedHeader(f"unexpected header line: {line!r}")

    if not format_seen:
        raise MalformedHeader("missing format line")
    if vertex_count is None:
        raise MalformedHeader("missing vertex element")
    return properties, vertex_count, body_offset


def parse_ply(data: bytes) -> GaussianPrimitiveSet:
    """Parse a binary splat PLY into a raw primitive set.

    Raises MalformedHeader / MissingProperty / TruncatedBody on bad input and
    never returns a partially populated set.
    """
    properties, count, body_offset = _parse_header(data)

    for name in REQUIRED_PROPERTIES:
        if name not in properties:
            raise MissingProperty(f"required property {name!r} absent")

    n_props = len(properties)
    expected = count * n_props * 4
    body = data[body_offset:body_offset + expected]
    if len(body) < expected:
        raise TruncatedBody(
            f"body holds {len(body)} bytes, need {expected} for {count} vertices")

    table = np.frombuffer(body, dtype="<f4").reshape(count, n_props).astype(np.float64)
    col = {name: i for i, name in enumerate(properties)}

    def grab(names):
        return table[:, [col[n] for n in names]]

    means = grab(("x", "y", "z"))
    log_scales = grab(("scale_0", "scale_1", "scale_2"))
    quaternions = grab(("rot_0", "rot_1", "rot_2", "rot_3"))
    opacity_logits = table[:, col["opacity"]]

    sh = np.zeros((count, SH_COEFF_COUNT, 3))
    sh[:, 0, :] = grab(("f_dc_0", "f_dc_1", "f_dc_2"))
    rest_names = [f"f_rest_{i}" for i in range(F_REST_COUNT)]
    if all(name in col for name in rest_names):
        # f_rest is channel-major on disk: 15 red, 15 green, 15 blue.
        rest = grab(rest_names).reshape(count, 3, SH_COEFF_COUNT - 1)
        sh[:, 1:, :] = rest.transpose(0, 2, 1)

    for name, arr in (("means", means), ("scales", log_scales),
                      ("rotations", quaternions), ("opacities", opacity_logits),
                      ("sh", sh)):
        if not np.all(np.isfinite(arr)):
            raise NonFiniteAttribute(f"non-finite values in {name}")

    return GaussianPrimitiveSet(
        count=count,
        means=means,
        log_scales=log_scales,
        quaternions=quaternions,
        opacity_logits=opacity_logits,
        sh_coeffs=sh,
    )


def activate(prims: GaussianPrimitiveSet) -> ActivatedPrimitives:
    """Map raw attributes to their rendering domains.

    Log-scales are exponentiated, opacity logits pass through a sigmoid,
    quaternions are normalized, and the DC color term is converted to
    clamped linear RGB.
    """
    with np.errstate(over="ignore"):
        scales = np.exp(prims.log_scales)
    opacities = expit(prims.opacity_logits)

    norms = np.linalg.norm(prims.quaternions, axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        rotations = prims.quaternions / norms

    colors_dc = np.clip(SH_DC_COEFF * prims.sh_coeffs[:, 0, :] + 0.5, 0.0, 1.0)

    for name, arr in (("scales", scales), ("opacities", opacities),
                      ("rotations", rotations), ("colors", colors_dc)):
        if not np.all(np.isfinite(arr)):
            raise NonFiniteAttribute(f"activation produced non-finite {name}")

    return ActivatedPrimitives(
        means=prims.means.copy(),
        scales=scales,
        rotations=rotations,
        opacities=opacities,
        colors_dc=colors_dc,
        sh_coeffs=prims.sh_coeffs.copy(),
    )


class ModelState(Enum):
    UNLOADED = "Unloaded"
    LOADING = "Loading"
    LOADED = "Loaded"


@dataclass
class ModelRecord:
    id: str
    name: str
    directory_path: Path
    ply_path: Path
    preview_path: Path | None = None
    state: ModelState = ModelState.UNLOADED
    last_access: float = 0.0
    ref_count: int = 0
    load_count: int = 0  # number of parses actually performed


def scan_model_directory(root: Path) -> list[ModelRecord]:
    """Discover models under root, one per subdirectory with a PLY file.

    A subdirectory qualifies if it contains point_cloud.ply, or exactly one
    .ply file of any name. Records come back sorted by id; unreadable
    directories are skipped with a warning.
    """
    root = Path(root)
    if not root.is_dir():
        raise RootNotFound(f"model root {root} does not exist")

    records = []
    for entry in sorted(root.iterdir()):
        if not entry.is_dir():
            continue
        try:
            canonical = entry / "point_cloud.ply"
            if canonical.is_file():
                ply_path = canonical
            else:
                candidates = sorted(entry.glob("*.ply"))
                if len(candidates) != 1:
                    continue
                ply_path = candidates[0]
            preview = entry / "preview.jpg"
            records.append(ModelRecord(
                id=entry.name,
                name=entry.name,
                directory_path=entry,
                ply_path=ply_path,
                preview_path=preview if preview.is_file() else None,
            ))
        except OSError as exc:
            logger.warning("skipping unreadable model directory %s: %s", entry, exc)
    return records


class ModelRegistry:
    """Thread-safe registry of splat models with lazy load and eviction.

    Concurrent acquires of the same unloaded model share a single parse;
    primitives are immutable once loaded and may be read by any number of
    renders in parallel. Eviction only ever touches models whose reference
    count is zero.
    """

    def __init__(self, records: list[ModelRecord] | None = None,
                 eviction_timeout: float = DEFAULT_EVICTION_TIMEOUT,
                 clock=time.monotonic):
        self._lock = threading.Lock()
        self._cond = threading.Condition(self._lock)
        self._clock = clock
        self.eviction_timeout = eviction_timeout
        self.records: dict[str, ModelRecord] = {}
        self.loaded: dict[str, ActivatedPrimitives] = {}
        for rec in records or []:
            rec.last_access = self._clock()
            self.records[rec.id] = rec

    @classmethod
    def from_directory(cls, root: Path, **kwargs) -> "ModelRegistry":
        return cls(records=scan_model_directory(root), **kwargs)

    def _get_record(self, model_id: str) -> ModelRecord:
        try:
            return self.records[model_id]
        except KeyError:
            raise UnknownModel(f"unknown model {model_id!r}") from None

    def acquire(self, model_id: str) -> ActivatedPrimitives:
        """Return live primitives for model_id, loading them if needed.

        Every acquire must be paired with a release; the model cannot be
        evicted in between.
        """
        with self._cond:
            rec = self._get_record(model_id)
            while rec.state is ModelState.LOADING:
                self._cond.wait()
            if rec.state is ModelState.LOADED:
                rec.ref_count += 1
                rec.last_access = self._clock()
                return self.loaded[model_id]
            rec.state = ModelState.LOADING

        try:
            prims = activate(parse_ply(rec.ply_path.read_bytes()))
        except Exception as exc:
            with self._cond:
                rec.state = ModelState.UNLOADED
                self._cond.notify_all()
            raise LoadFailed(f"loading model {model_id!r} failed: {exc}") from exc

        with self._cond:
            self.loaded[model_id] = prims
            rec.state = ModelState.LOADED
            rec.load_count += 1
            rec.ref_count += 1
            rec.last_access = self._clock()
            self._cond.notify_all()
            return prims

    def release(self, model_id: str) -> None:
        with self._lock:
            rec = self._get_record(model_id)
            if rec.ref_count <= 0:
                raise UnderflowRelease(f"release of {model_id!r} with no outstanding acquire")
            rec.ref_count -= 1
            rec.last_access = self._clock()

    def lease(self, model_id: str):
        """Context manager wrapping acquire/release."""
        return _ModelLease(self, model_id)

    def ensure_loaded(self, model_id: str) -> ModelRecord:
        """Load a model without holding a reference (idempotent)."""
        self.acquire(model_id)
        self.release(model_id)
        return self._get_record(model_id)

    def evict_inactive(self, now: float | None = None) -> list[str]:
        """Unload every idle model whose last access is older than the timeout."""
        if now is None:
            now = self._clock()
        evicted = []
        with self._lock:
            for model_id, rec in self.records.items():
                if (rec.state is ModelState.LOADED and rec.ref_count == 0
                        and now - rec.last_access > self.eviction_timeout):
                    del self.loaded[model_id]
                    rec.state = ModelState.UNLOADED
                    evicted.append(model_id)
        if evicted:
            logger.info("evicted idle models: %s", ", ".join(evicted))
        return evicted

    def snapshot(self) -> list[dict]:
        """Stable-ordered view of the registry for the models endpoint."""
        with self._lock:
            return [
                {
                    "id": rec.id,
                    "name": rec.name,
                    "state": rec.state.value,
                    "has_preview": rec.preview_path is not None,
                }
                for rec in sorted(self.records.values(), key=lambda r: r.id)
            ]


class _ModelLease:
    def __init__(self, registry: ModelRegistry, model_id: str):
        self._registry = registry
        self._model_id = model_id
        self.primitives: ActivatedPrimitives | None = None

    def __enter__(self) -> ActivatedPrimitives:
        self.primitives = self._registry.acquire(self._model_id)
        return self.primitives

    def __exit__(self, *exc_info):
        self._registry.release(self._model_id)
        return False
