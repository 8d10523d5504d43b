import math
import threading
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splatstream.model import (LoadFailed, MalformedHeader, MissingProperty,
                               ModelRegistry, ModelState, NonFiniteAttribute,
                               RootNotFound, TruncatedBody, UnderflowRelease,
                               UnknownModel, activate, parse_ply,
                               scan_model_directory)

from conftest import SPLAT_PROPS, oracle_ply_bytes, random_raw_set, write_ply_bytes


class TestParse:
    def test_empty_scene(self):
        data = write_ply_bytes(0, [], SPLAT_PROPS)
        prims = parse_ply(data)
        assert prims.count == 0
        assert prims.means.shape == (0, 3)
        assert prims.sh_coeffs.shape == (0, 16, 3)

    def test_single_gaussian_exact_values(self):
        row = [0.0, 0.0, 0.0,
               math.log(0.5), math.log(0.5), math.log(0.5),
               1.0, 0.0, 0.0, 0.0,
               4.0,
               1.0, 0.0, 0.0]
        data = write_ply_bytes(1, [row], SPLAT_PROPS)
        prims = parse_ply(data)
        assert prims.count == 1
        assert np.allclose(prims.means[0], [0, 0, 0])
        assert prims.log_scales[0] == pytest.approx([np.float32(math.log(0.5))] * 3)
        assert np.array_equal(prims.quaternions[0], [1, 0, 0, 0])
        assert prims.opacity_logits[0] == 4.0
        assert np.array_equal(prims.sh_coeffs[0, 0], [1, 0, 0])
        assert np.all(prims.sh_coeffs[0, 1:] == 0)

    def test_ascii_format_rejected(self):
        data = write_ply_bytes(0, [], SPLAT_PROPS, fmt="ascii 1.0")
        with pytest.raises(MalformedHeader):
            parse_ply(data)

    def test_big_endian_rejected(self):
        data = write_ply_bytes(0, [], SPLAT_PROPS, fmt="binary_big_endian 1.0")
        with pytest.raises(MalformedHeader):
            parse_ply(data)

    def test_missing_magic(self):
        data = write_ply_bytes(0, [], SPLAT_PROPS)
        with pytest.raises(MalformedHeader):
            parse_ply(data[4:])

    def test_missing_property(self):
        props = [p for p in SPLAT_PROPS if p != "opacity"]
        data = write_ply_bytes(0, [], props)
        with pytest.raises(MissingProperty, match="opacity"):
            parse_ply(data)

    def test_truncated_body(self):
        rng = np.random.default_rng(0)
        prims = random_raw_set(rng, 10, with_rest=False)
        data = oracle_ply_bytes(prims, with_rest=False)
        with pytest.raises(TruncatedBody):
            parse_ply(data[:-5])

    def test_non_float_property_rejected(self):
        data = write_ply_bytes(0, [], SPLAT_PROPS)
        bad = data.replace(b"property float opacity", b"property uchar opacity")
        with pytest.raises(MalformedHeader):
            parse_ply(bad)

    def test_nan_body_rejected(self):
        row = [float("nan")] + [0.0] * 13
        data = write_ply_bytes(1, [row], SPLAT_PROPS)
        with pytest.raises(NonFiniteAttribute):
            parse_ply(data)

    def test_extra_properties_ignored(self):
        props = SPLAT_PROPS[:3] + ["nx", "ny", "nz"] + SPLAT_PROPS[3:]
        row = [1.0, 2.0, 3.0, 0.1, 0.2, 0.3,
               -1.0, -1.0, -1.0, 1.0, 0.0, 0.0, 0.0, 2.0, 0.5, 0.6, 0.7]
        data = write_ply_bytes(1, [row], props)
        prims = parse_ply(data)
        assert np.allclose(prims.means[0], [1, 2, 3])
        assert prims.opacity_logits[0] == pytest.approx(np.float32(2.0))

    def test_round_trip_with_rest_coeffs(self):
        rng = np.random.default_rng(5)
        prims = random_raw_set(rng, 33, with_rest=True)
        parsed = parse_ply(oracle_ply_bytes(prims, with_rest=True))
        assert np.array_equal(parsed.means, prims.means)
        assert np.array_equal(parsed.log_scales, prims.log_scales)
        assert np.array_equal(parsed.quaternions, prims.quaternions)
        assert np.array_equal(parsed.opacity_logits, prims.opacity_logits)
        assert np.array_equal(parsed.sh_coeffs, prims.sh_coeffs)

    def test_round_trip_without_rest_zero_fills(self):
        rng = np.random.default_rng(6)
        prims = random_raw_set(rng, 17, with_rest=False)
        parsed = parse_ply(oracle_ply_bytes(prims, with_rest=False))
        assert np.array_equal(parsed.sh_coeffs[:, 0, :], prims.sh_coeffs[:, 0, :])
        assert np.all(parsed.sh_coeffs[:, 1:, :] == 0)

    def test_file_order_preserved(self):
        rows = []
        for i in range(5):
            rows.append([float(i), 0.0, 0.0, 0, 0, 0, 1, 0, 0, 0, 0.0, 0, 0, 0])
        prims = parse_ply(write_ply_bytes(5, rows, SPLAT_PROPS))
        assert np.array_equal(prims.means[:, 0], [0, 1, 2, 3, 4])


class TestActivate:
    def test_zero_log_scale_gives_unit_scale(self):
        rng = np.random.default_rng(1)
        prims = random_raw_set(rng, 4)
        prims.log_scales[:] = 0.0
        assert np.all(activate(prims).scales == 1.0)

    def test_zero_logit_gives_half_opacity(self):
        rng = np.random.default_rng(2)
        prims = random_raw_set(rng, 4)
        prims.opacity_logits[:] = 0.0
        assert np.allclose(activate(prims).opacities, 0.5)

    def test_dc_color_conversion(self):
        rng = np.random.default_rng(3)
        prims = random_raw_set(rng, 1)
        prims.sh_coeffs[0, 0] = [1.77245, 0.0, 0.0]
        colors = activate(prims).colors_dc
        # hand oracle: 0.28209479177 * 1.77245 + 0.5 = 0.99998..., clamped path
        assert colors[0, 0] == pytest.approx(0.28209479177 * 1.77245 + 0.5, abs=1e-9)
        assert colors[0, 1] == pytest.approx(0.5)
        assert colors[0, 2] == pytest.approx(0.5)

    def test_color_clamped_to_unit_interval(self):
        rng = np.random.default_rng(4)
        prims = random_raw_set(rng, 2)
        prims.sh_coeffs[0, 0] = [100.0, -100.0, 0.0]
        colors = activate(prims).colors_dc
        assert colors[0, 0] == 1.0
        assert colors[0, 1] == 0.0

    def test_overflowing_scale_rejected(self):
        rng = np.random.default_rng(5)
        prims = random_raw_set(rng, 2)
        prims.log_scales[0, 0] = 1000.0
        with pytest.raises(NonFiniteAttribute):
            activate(prims)

    def test_zero_quaternion_rejected(self):
        rng = np.random.default_rng(6)
        prims = random_raw_set(rng, 2)
        prims.quaternions[1] = 0.0
        with pytest.raises(NonFiniteAttribute):
            activate(prims)

    @given(st.integers(0, 60), st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_output_constraints_hold_for_any_finite_input(self, count, seed):
        prims = random_raw_set(np.random.default_rng(seed), count)
        act = activate(prims)
        assert np.all(act.scales > 0)
        assert np.all((act.opacities >= 0) & (act.opacities <= 1))
        if count:
            norms = np.linalg.norm(act.rotations, axis=1)
            assert np.all(np.abs(norms - 1.0) < 1e-6)
        assert np.all((act.colors_dc >= 0) & (act.colors_dc <= 1))


class TestScan:
    def test_empty_root(self, tmp_path):
        assert scan_model_directory(tmp_path) == []

    def test_missing_root(self, tmp_path):
        with pytest.raises(RootNotFound):
            scan_model_directory(tmp_path / "nope")

    def test_two_models_sorted(self, model_root):
        records = scan_model_directory(model_root)
        assert [r.id for r in records] == ["train", "truck"]
        assert all(r.state is ModelState.UNLOADED for r in records)

    def test_directory_without_ply_excluded(self, model_root):
        (model_root / "empty_dir").mkdir()
        records = scan_model_directory(model_root)
        assert "empty_dir" not in [r.id for r in records]

    def test_single_differently_named_ply(self, tmp_path):
        d = tmp_path / "bike"
        d.mkdir()
        rng = np.random.default_rng(7)
        (d / "scene.ply").write_bytes(oracle_ply_bytes(random_raw_set(rng, 3)))
        records = scan_model_directory(tmp_path)
        assert records[0].ply_path.name == "scene.ply"

    def test_preview_detected(self, model_root):
        (model_root / "train" / "preview.jpg").write_bytes(b"\xff\xd8\xff\xd9")
        records = scan_model_directory(model_root)
        by_id = {r.id: r for r in records}
        assert by_id["train"].preview_path is not None
        assert by_id["truck"].preview_path is None


class TestRegistry:
    def test_unknown_model(self, model_root):
        registry = ModelRegistry.from_directory(model_root)
        with pytest.raises(UnknownModel):
            registry.acquire("x")

    def test_acquire_release_cycle(self, model_root):
        registry = ModelRegistry.from_directory(model_root)
        prims = registry.acquire("train")
        rec = registry.records["train"]
        assert rec.state is ModelState.LOADED
        assert rec.ref_count == 1
        assert prims.count == 40
        registry.release("train")
        assert rec.ref_count == 0
        assert rec.state is ModelState.LOADED  # stays resident until eviction

    def test_release_underflow(self, model_root):
        registry = ModelRegistry.from_directory(model_root)
        registry.acquire("train")
        registry.release("train")
        with pytest.raises(UnderflowRelease):
            registry.release("train")

    def test_load_failure_resets_state(self, model_root):
        (model_root / "broken").mkdir()
        good = (model_root / "train" / "point_cloud.ply").read_bytes()
        (model_root / "broken" / "point_cloud.ply").write_bytes(good[:-10])
        registry = ModelRegistry.from_directory(model_root)
        with pytest.raises(LoadFailed, match="Truncated|truncated|body"):
            registry.acquire("broken")
        assert registry.records["broken"].state is ModelState.UNLOADED

    def test_concurrent_acquires_share_one_parse(self, model_root):
        registry = ModelRegistry.from_directory(model_root)
        barrier = threading.Barrier(8)
        results = []

        def worker():
            barrier.wait()
            results.append(registry.acquire("train"))

        threads = [threading.Thread(target=worker) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

        rec = registry.records["train"]
        assert rec.load_count == 1
        assert rec.ref_count == 8
        assert all(r is results[0] for r in results)

    def test_eviction_respects_timeout_and_refs(self, model_root):
        clock = {"now": 0.0}
        registry = ModelRegistry.from_directory(model_root)
        registry._clock = lambda: clock["now"]
        registry.eviction_timeout = 300.0

        registry.acquire("train")
        registry.release("train")
        registry.acquire("truck")  # stays referenced

        clock["now"] = 301.0
        evicted = registry.evict_inactive()
        assert evicted == ["train"]
        assert registry.records["train"].state is ModelState.UNLOADED
        assert registry.records["truck"].state is ModelState.LOADED

    def test_eviction_within_timeout_noop(self, model_root):
        clock = {"now": 0.0}
        registry = ModelRegistry.from_directory(model_root)
        registry._clock = lambda: clock["now"]
        registry.ensure_loaded("train")
        clock["now"] = 10.0
        assert registry.evict_inactive() == []
        assert registry.records["train"].state is ModelState.LOADED

    def test_eviction_monotone_loaded_count(self, model_root):
        registry = ModelRegistry.from_directory(model_root)
        registry.ensure_loaded("train")
        registry.ensure_loaded("truck")
        before = len(registry.loaded)
        registry.evict_inactive(now=time.monotonic() + 10_000)
        assert len(registry.loaded) <= before

    def test_ensure_loaded_idempotent(self, model_root):
        registry = ModelRegistry.from_directory(model_root)
        registry.ensure_loaded("train")
        registry.ensure_loaded("train")
        assert registry.records["train"].load_count == 1

    def test_lease_context_manager(self, model_root):
        registry = ModelRegistry.from_directory(model_root)
        with registry.lease("train") as prims:
            assert prims.count == 40
            assert registry.records["train"].ref_count == 1
        assert registry.records["train"].ref_count == 0

    def test_interleaved_acquire_evict_keeps_handles_live(self, model_root):
        """A handle stays valid across eviction passes until released."""
        clock = {"now": 0.0}
        registry = ModelRegistry.from_directory(model_root)
        registry._clock = lambda: clock["now"]
        registry.eviction_timeout = 5.0

        prims = registry.acquire("train")
        clock["now"] = 100.0
        registry.evict_inactive()
        assert registry.records["train"].state is ModelState.LOADED
        assert np.all(np.isfinite(prims.means))
        registry.release("train")
        clock["now"] = 200.0
        assert registry.evict_inactive() == ["train"]
