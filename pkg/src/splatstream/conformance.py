"""Golden ABR decision traces shared with the browser client.

The web client re-implements the controller in TypeScript; rather than
sharing code across languages, both sides replay the JSON fixture emitted
here and must produce identical level sequences. Regenerate with
`splatstream abr-golden` whenever the controller semantics change.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

from .abr import BitrateLadder, LatencyAbr, default_ladder


def _ladder_spec(ladder: BitrateLadder) -> list[dict]:
    return [
        {
            "level": p.level,
            "width": p.width,
            "height": p.height,
            "jpeg_quality": p.jpeg_quality,
            "expected_size_bytes": p.expected_size_bytes,
        }
        for p in ladder.profiles
    ]


def _run_case(samples: list[dict]) -> list[int]:
    abr = LatencyAbr(default_ladder())
    levels = []
    for sample in samples:
        levels.append(abr.on_response(sample["size_bytes"], sample["duration"],
                                      sample["panning"]))
    return levels


def _sample(size_bytes: int, duration: float, panning: bool = False) -> dict:
    return {"size_bytes": size_bytes, "duration": duration, "panning": panning}


def build_cases() -> list[dict]:
    cases = []

    # Fast network: the controller climbs one rung per hold period all the
    # way to the top (3.5 MB/s makes even the 240 KB rung fit the target).
    cases.append(("upgrade_hold",
                  [_sample(7_000, 0.002) for _ in range(16)]))

    # Deadband: durations above target but at/below margin, throughput too
    # low for the next rung; nothing should ever switch.
    cases.append(("deadband_hold",
                  [_sample(7_000, 0.13) for _ in range(30)]))

    # Climb to a middle rung first, then sustained over-margin requests
    # force hold-gated consecutive downgrades.
    climb = [_sample(7_000, 0.01) for _ in range(9)]
    cases.append(("downgrade_over_margin",
                  climb + [_sample(55_000, 0.4) for _ in range(12)]))

    # Same congestion but with panning: the second over-margin request
    # must drop immediately, possibly several rungs.
    cases.append(("panning_bypass",
                  climb + [_sample(55_000, 0.4, panning=True) for _ in range(6)]))

    # Panning during an upgrade window must NOT shortcut the hold.
    cases.append(("panning_never_bypasses_upgrades",
                  [_sample(7_000, 0.002, panning=True) for _ in range(16)]))

    # Panning with healthy requests is a no-op (no downgrade candidate).
    cases.append(("panning_without_congestion_noop",
                  [_sample(7_000, 0.12, panning=True) for _ in range(10)]))

    rng = random.Random(2024)
    for i in range(3):
        samples = []
        for _ in range(60):
            size = rng.randrange(2_000, 120_000)
            duration = rng.uniform(0.005, 0.35)
            samples.append(_sample(size, round(duration, 4), rng.random() < 0.15))
        cases.append((f"random_{i}", samples))

    out = []
    for name, samples in cases:
        out.append({
            "name": name,
            "ladder": _ladder_spec(default_ladder()),
            "t_target": 0.100,
            "t_margin": 0.150,
            "hold_required": 3,
            "samples": samples,
            "expected_levels": _run_case(samples),
        })
    return out


def write_fixture(path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"cases": build_cases()}, indent=2) + "\n")
    return path
