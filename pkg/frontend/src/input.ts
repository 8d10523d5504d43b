// Keyboard state polled once per animation frame. The input loop only
// produces poses; issuing requests is the viewport's job, which keeps the
// two loops decoupled.

import { MoveAction, Pose, moveRelative } from "./camera.js";

export interface StepSizes {
  move: number;     // world units per second
  rotateDeg: number; // degrees per second
}

export const KEY_ACTIONS: Record<string, MoveAction> = {
  KeyW: "forward",
  KeyS: "backward",
  KeyA: "left",
  KeyD: "right",
  Space: "up",
  ShiftLeft: "down",
  ShiftRight: "down",
  ArrowLeft: "yaw",
  ArrowRight: "yaw",
  ArrowUp: "pitch",
  ArrowDown: "pitch",
};

// arrows that move in the negative direction of their action
const NEGATIVE_KEYS = new Set(["ArrowLeft", "ArrowDown"]);

export class InputState {
  private readonly held = new Set<string>();

  keyDown(code: string): boolean {
    if (code in KEY_ACTIONS) {
      this.held.add(code);
      return true;
    }
    return false;
  }

  keyUp(code: string): void {
    this.held.delete(code);
  }

  get anyHeld(): boolean {
    return this.held.size > 0;
  }

  /** Advance the pose by dt seconds of held keys; null when nothing moved. */
  tick(pose: Pose, dtSeconds: number, steps: StepSizes): Pose | null {
    if (this.held.size === 0) {
      return null;
    }
    let next = pose;
    for (const code of this.held) {
      const action = KEY_ACTIONS[code];
      const magnitude = action === "yaw" || action === "pitch"
        ? steps.rotateDeg * dtSeconds
        : steps.move * dtSeconds;
      const step = NEGATIVE_KEYS.has(code) ? -magnitude : magnitude;
      next = moveRelative(next, action, step);
    }
    return next;
  }
}
