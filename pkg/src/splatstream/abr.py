"""Client-side throughput estimation and the latency-targeting ABR controller.

The controller picks a ladder rung per frame so the expected request time
stays under a 100 ms budget. Upgrades are predicted from a smoothed
throughput estimate; downgrades react to measured request times crossing a
safety margin. A deadband between the two thresholds plus a hold counter
keeps the level from oscillating, and rapid panning short-circuits the hold
for downgrades only.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace

DEFAULT_ALPHA = 0.3
DEFAULT_HISTORY = 5
T_TARGET = 0.100
T_MARGIN = 0.150
HOLD_REQUIRED = 3
OVER_MARGIN_REQUIRED = 2
EXPECTED_SIZE_FLOOR = 1024.0
EXPECTED_SIZE_EMA = 0.8  # weight on the previous expectation


class InvalidSample(ValueError):
    pass


@dataclass(frozen=True)
class QualityProfile:
    level: int
    width: int
    height: int
    jpeg_quality: int
    expected_size_bytes: float


@dataclass(frozen=True)
class BitrateLadder:
    """Ordered quality rungs, level 0 best.

    Resolutions must shrink strictly with the level number. Expected sizes
    start out monotone too (checked when a ladder is configured), but online
    refinement from observed payloads may transiently soften that ordering.
    """

    profiles: tuple[QualityProfile, ...]

    def __post_init__(self):
        if len(self.profiles) < 2:
            raise ValueError("ladder needs at least two rungs")
        levels = [p.level for p in self.profiles]
        if levels != list(range(len(self.profiles))):
            raise ValueError("profile levels must be 0..n-1 in order")
        for better, worse in zip(self.profiles, self.profiles[1:]):
            if not (better.width > worse.width and better.height > worse.height):
                raise ValueError("lower levels must have larger resolution")

    def __len__(self) -> int:
        return len(self.profiles)

    def __getitem__(self, level: int) -> QualityProfile:
        return self.profiles[level]

    @property
    def worst_level(self) -> int:
        return self.profiles[-1].level


def validate_monotone_sizes(ladder: BitrateLadder) -> BitrateLadder:
    for better, worse in zip(ladder.profiles, ladder.profiles[1:]):
        if better.expected_size_bytes <= worse.expected_size_bytes:
            raise ValueError("expected sizes must shrink with the level number")
    return ladder


def default_ladder() -> BitrateLadder:
    """The four standard rungs; expected sizes start at their range midpoints."""
    return validate_monotone_sizes(BitrateLadder(profiles=(
        QualityProfile(level=0, width=1280, height=720, jpeg_quality=90,
                       expected_size_bytes=240_000.0),
        QualityProfile(level=1, width=960, height=540, jpeg_quality=65,
                       expected_size_bytes=55_000.0),
        QualityProfile(level=2, width=640, height=360, jpeg_quality=35,
                       expected_size_bytes=20_000.0),
        QualityProfile(level=3, width=320, height=180, jpeg_quality=10,
                       expected_size_bytes=7_000.0),
    )))


def ladder_from_config(rungs: list[dict]) -> BitrateLadder:
    """Build a ladder from config entries {width, height, jpeg_quality, expected_kb}."""
    profiles = tuple(
        QualityProfile(level=i, width=int(r["width"]), height=int(r["height"]),
                       jpeg_quality=int(r["jpeg_quality"]),
                       expected_size_bytes=float(r["expected_kb"]) * 1000.0)
        for i, r in enumerate(rungs)
    )
    return validate_monotone_sizes(BitrateLadder(profiles=profiles))


class ThroughputEstimator:
    """EMA over per-request throughput samples.

    Each sample is size/duration in bytes per second; the EMA seeds on the
    first sample and then follows ema = alpha * sample + (1 - alpha) * ema.
    A short ring of raw samples is kept for inspection and does not affect
    the estimate beyond what already flowed into the EMA.
    """

    def __init__(self, alpha: float = DEFAULT_ALPHA, history: int = DEFAULT_HISTORY):
        self.alpha = alpha
        self.history: deque[float] = deque(maxlen=history)
        self.ema: float | None = None

    @property
    def sample_count(self) -> int:
        return self._count

    _count: int = 0

    def record_sample(self, size_bytes: int, duration: float) -> float:
        """Fold one completed request into the estimate; returns the new EMA."""
        if size_bytes <= 0 or duration <= 0:
            raise InvalidSample(
                f"need positive size and duration, got {size_bytes} B / {duration} s")
        rate = size_bytes / duration
        self.history.append(rate)
        self.ema = rate if self.ema is None else self.alpha * rate + (1 - self.alpha) * self.ema
        self._count += 1
        return self.ema


def predict_time(profile: QualityProfile, throughput_bps: float) -> float:
    """Expected seconds to fetch a rung at the given bytes-per-second rate."""
    if throughput_bps <= 0:
        raise ValueError("throughput must be positive")
    return profile.expected_size_bytes / throughput_bps


def update_expected_size(ladder: BitrateLadder, level: int,
                         observed_bytes: int) -> BitrateLadder:
    """Refine one rung's expected size from an observed payload (per-rung EMA)."""
    if observed_bytes <= 0:
        raise ValueError("observed size must be positive")
    profile = ladder[level]
    new_size = max(EXPECTED_SIZE_FLOOR,
                   EXPECTED_SIZE_EMA * profile.expected_size_bytes
                   + (1 - EXPECTED_SIZE_EMA) * observed_bytes)
    profiles = list(ladder.profiles)
    profiles[level] = replace(profile, expected_size_bytes=new_size)
    return BitrateLadder(profiles=tuple(profiles))


@dataclass
class AbrState:
    """Mutable controller state for one streaming session."""

    current_level: int
    hold_counter: int = 0
    pending_candidate: int | None = None
    consecutive_over_margin: int = 0
    t_target: float = T_TARGET
    t_margin: float = T_MARGIN
    hold_required: int = HOLD_REQUIRED

    def __post_init__(self):
        if not self.t_target < self.t_margin:
            raise ValueError("t_target must be below t_margin (deadband)")


def decide(state: AbrState, ladder: BitrateLadder, est: ThroughputEstimator,
           last_request_time: float, panning: bool = False) -> int:
    """Choose the level for the next request and update the controller state.

    An upgrade candidate appears when the predicted time for the next better
    rung fits the target; a downgrade candidate appears once the measured
    request time has exceeded the margin twice in a row. Either candidate
    only takes effect after it has been proposed on `hold_required`
    consecutive decisions -- except that panning applies a downgrade
    immediately, dropping straight to the first rung predicted to fit the
    target. Throughput between the two thresholds is the deadband: no
    candidate, level held, hold counter cleared.
    """
    if est.ema is None:
        raise ValueError("decide() needs at least one throughput sample")

    if last_request_time > state.t_margin:
        state.consecutive_over_margin += 1
    else:
        state.consecutive_over_margin = 0

    worst = ladder.worst_level
    candidate = None
    if state.consecutive_over_margin >= OVER_MARGIN_REQUIRED and state.current_level < worst:
        candidate = state.current_level + 1
    elif state.current_level > 0:
        if predict_time(ladder[state.current_level - 1], est.ema) <= state.t_target:
            candidate = state.current_level - 1

    if candidate is None:
        state.pending_candidate = None
        state.hold_counter = 0
        return state.current_level

    if candidate > state.current_level and panning:
        # Immediate downgrade; fall through to the deepest rung that fits.
        target = candidate
        while target < worst and predict_time(ladder[target], est.ema) > state.t_target:
            target += 1
        state.current_level = target
        state.pending_candidate = None
        state.hold_counter = 0
        return state.current_level

    if candidate == state.pending_candidate:
        state.hold_counter += 1
    else:
        state.pending_candidate = candidate
        state.hold_counter = 1

    if state.hold_counter >= state.hold_required:
        state.current_level = candidate
        state.pending_candidate = None
        state.hold_counter = 0
    return state.current_level


class LatencyAbr:
    """Session-facing wrapper tying the estimator, ladder, and state together.

    One instance per streaming session; the request loop feeds completed
    transfers through `on_response` and asks `next_level` before each frame.
    """

    def __init__(self, ladder: BitrateLadder | None = None,
                 t_target: float = T_TARGET, t_margin: float = T_MARGIN,
                 alpha: float = DEFAULT_ALPHA):
        self.ladder = ladder or default_ladder()
        self.estimator = ThroughputEstimator(alpha=alpha)
        self.state = AbrState(current_level=self.ladder.worst_level,
                              t_target=t_target, t_margin=t_margin)

    @property
    def current_level(self) -> int:
        return self.state.current_level

    def profile(self, level: int | None = None) -> QualityProfile:
        return self.ladder[self.state.current_level if level is None else level]

    def on_response(self, size_bytes: int, duration: float, panning: bool = False) -> int:
        """Record one completed request and return the level for the next one."""
        try:
            self.estimator.record_sample(size_bytes, duration)
        except InvalidSample:
            return self.state.current_level
        self.ladder = update_expected_size(self.ladder, self.state.current_level,
                                           size_bytes)
        return decide(self.state, self.ladder, self.estimator, duration, panning)
