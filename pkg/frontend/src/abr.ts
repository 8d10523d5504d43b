// Client-side latency ABR. This mirrors the backend controller exactly --
// same branch order, same float64 expressions -- and both implementations
// must reproduce tests/fixtures/abr_conformance.json level-for-level.

export interface QualityProfile {
  level: number;
  width: number;
  height: number;
  jpegQuality: number;
  expectedSizeBytes: number;
}

export const DEFAULT_ALPHA = 0.3;
export const T_TARGET = 0.1;
export const T_MARGIN = 0.15;
export const HOLD_REQUIRED = 3;
export const OVER_MARGIN_REQUIRED = 2;
export const EXPECTED_SIZE_FLOOR = 1024;
export const EXPECTED_SIZE_EMA = 0.8;
const HISTORY_LENGTH = 5;

export function defaultLadder(): QualityProfile[] {
  return [
    { level: 0, width: 1280, height: 720, jpegQuality: 90, expectedSizeBytes: 240_000 },
    { level: 1, width: 960, height: 540, jpegQuality: 65, expectedSizeBytes: 55_000 },
    { level: 2, width: 640, height: 360, jpegQuality: 35, expectedSizeBytes: 20_000 },
    { level: 3, width: 320, height: 180, jpegQuality: 10, expectedSizeBytes: 7_000 },
  ];
}

export class ThroughputEstimator {
  readonly alpha: number;
  history: number[] = [];
  ema: number | null = null;

  constructor(alpha: number = DEFAULT_ALPHA) {
    this.alpha = alpha;
  }

  /** Fold one completed request in; returns the new EMA in bytes/second. */
  recordSample(sizeBytes: number, duration: number): number {
    if (sizeBytes <= 0 || duration <= 0) {
      throw new RangeError(`need positive size and duration, got ${sizeBytes} B / ${duration} s`);
    }
    const rate = sizeBytes / duration;
    this.history.push(rate);
    if (this.history.length > HISTORY_LENGTH) {
      this.history.shift();
    }
    this.ema = this.ema === null ? rate : this.alpha * rate + (1 - this.alpha) * this.ema;
    return this.ema;
  }
}

export function predictTime(profile: QualityProfile, throughputBps: number): number {
  if (throughputBps <= 0) {
    throw new RangeError("throughput must be positive");
  }
  return profile.expectedSizeBytes / throughputBps;
}

export function updateExpectedSize(
  ladder: QualityProfile[], level: number, observedBytes: number,
): QualityProfile[] {
  if (observedBytes <= 0) {
    throw new RangeError("observed size must be positive");
  }
  const profile = ladder[level];
  const size = Math.max(
    EXPECTED_SIZE_FLOOR,
    EXPECTED_SIZE_EMA * profile.expectedSizeBytes + (1 - EXPECTED_SIZE_EMA) * observedBytes,
  );
  const next = ladder.slice();
  next[level] = { ...profile, expectedSizeBytes: size };
  return next;
}

export interface AbrState {
  currentLevel: number;
  holdCounter: number;
  pendingCandidate: number | null;
  consecutiveOverMargin: number;
  tTarget: number;
  tMargin: number;
  holdRequired: number;
}

export function initialState(currentLevel: number, tTarget = T_TARGET,
                             tMargin = T_MARGIN, holdRequired = HOLD_REQUIRED): AbrState {
  if (!(tTarget < tMargin)) {
    throw new RangeError("tTarget must be below tMargin (deadband)");
  }
  return {
    currentLevel,
    holdCounter: 0,
    pendingCandidate: null,
    consecutiveOverMargin: 0,
    tTarget,
    tMargin,
    holdRequired,
  };
}

export function decide(state: AbrState, ladder: QualityProfile[],
                       est: ThroughputEstimator, lastRequestTime: number,
                       panning = false): number {
  if (est.ema === null) {
    throw new Error("decide() needs at least one throughput sample");
  }

  if (lastRequestTime > state.tMargin) {
    state.consecutiveOverMargin += 1;
  } else {
    state.consecutiveOverMargin = 0;
  }

  const worst = ladder[ladder.length - 1].level;
  let candidate: number | null = null;
  if (state.consecutiveOverMargin >= OVER_MARGIN_REQUIRED && state.currentLevel < worst) {
    candidate = state.currentLevel + 1;
  } else if (state.currentLevel > 0) {
    if (predictTime(ladder[state.currentLevel - 1], est.ema) <= state.tTarget) {
      candidate = state.currentLevel - 1;
    }
  }

  if (candidate === null) {
    state.pendingCandidate = null;
    state.holdCounter = 0;
    return state.currentLevel;
  }

  if (candidate > state.currentLevel && panning) {
    // immediate downgrade, falling through to the deepest rung that fits
    let target = candidate;
    while (target < worst && predictTime(ladder[target], est.ema) > state.tTarget) {
      target += 1;
    }
    state.currentLevel = target;
    state.pendingCandidate = null;
    state.holdCounter = 0;
    return state.currentLevel;
  }

  if (candidate === state.pendingCandidate) {
    state.holdCounter += 1;
  } else {
    state.pendingCandidate = candidate;
    state.holdCounter = 1;
  }

  if (state.holdCounter >= state.holdRequired) {
    state.currentLevel = candidate;
    state.pendingCandidate = null;
    state.holdCounter = 0;
  }
  return state.currentLevel;
}

/** Session-facing controller, one per viewer session. */
export class LatencyAbr {
  ladder: QualityProfile[];
  estimator: ThroughputEstimator;
  state: AbrState;
  switchCount = 0;

  constructor(ladder?: QualityProfile[], tTarget = T_TARGET, tMargin = T_MARGIN,
              alpha = DEFAULT_ALPHA) {
    this.ladder = ladder ?? defaultLadder();
    this.estimator = new ThroughputEstimator(alpha);
    this.state = initialState(this.ladder[this.ladder.length - 1].level,
                              tTarget, tMargin);
  }

  get currentLevel(): number {
    return this.state.currentLevel;
  }

  profile(level?: number): QualityProfile {
    return this.ladder[level ?? this.state.currentLevel];
  }

  /** Record one completed request; returns the level for the next one. */
  onResponse(sizeBytes: number, duration: number, panning = false): number {
    if (sizeBytes <= 0 || duration <= 0) {
      return this.state.currentLevel; // dropped sample, controller untouched
    }
    this.estimator.recordSample(sizeBytes, duration);
    this.ladder = updateExpectedSize(this.ladder, this.state.currentLevel, sizeBytes);
    const before = this.state.currentLevel;
    const level = decide(this.state, this.ladder, this.estimator, duration, panning);
    if (level !== before) {
      this.switchCount += 1;
    }
    return level;
  }
}
