// Keyboard teleoperation pad: WASD/arrows held -> rate-limited command
// stream; release -> immediate zero twist. Deadman stop is enforced by
// the backend; the pad only shapes the stream.

import { CommandGate } from "./commands.js";

export interface TeleopConfig {
  v: number;     // m/s while a forward/back key is held
  omega: number; // rad/s while a turn key is held
  streamHz: number;
}

const DEFAULTS: TeleopConfig = { v: 0.2, omega: 0.5, streamHz: 8 };

export class TeleopPad {
  private held = new Set<string>();
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(private gate: CommandGate, private cfg: TeleopConfig = DEFAULTS) {}

  private twist(): [number, number] {
    let v = 0;
    let omega = 0;
    if (this.held.has("forward")) v += this.cfg.v;
    if (this.held.has("back")) v -= this.cfg.v;
    if (this.held.has("left")) omega += this.cfg.omega;
    if (this.held.has("right")) omega -= this.cfg.omega;
    return [v, omega];
  }

  keyDown(action: string): void {
    if (!["forward", "back", "left", "right"].includes(action)) return;
    this.held.add(action);
    this.ensureStreaming();
  }

  keyUp(action: string): void {
    if (!this.held.delete(action)) return;
    if (this.held.size === 0) {
      this.stopStreaming();
      this.gate.teleopRelease(); // zero twist right away
    }
  }

  releaseAll(): void {
    if (this.held.size === 0) return;
    this.held.clear();
    this.stopStreaming();
    this.gate.teleopRelease();
  }

  tick(): void {
    if (this.held.size === 0) return;
    const [v, omega] = this.twist();
    this.gate.teleop(v, omega);
  }

  private ensureStreaming(): void {
    this.tick();
    if (this.timer === null) {
      this.timer = setInterval(() => this.tick(), 1000 / this.cfg.streamHz);
    }
  }

  private stopStreaming(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }
}
