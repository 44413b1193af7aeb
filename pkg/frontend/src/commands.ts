// Outbound command gate: selection safety, teleop rate limiting, and
// click-to-goal conversion. Every message the console originates passes
// through here, so the no-selection rule cannot be bypassed by a panel.

import { ClientMessage, CommandKind, OUTBOUND_TYPES } from "./protocol.js";
import { ConsoleState } from "./state.js";
import { ScreenPoint, ViewportTransform } from "./viewport.js";

export interface Sender {
  send(msg: ClientMessage): void;
}

export const TELEOP_MAX_HZ = 10;

export class CommandGate {
  sentCount = 0;
  warnings: string[] = [];
  private lastTeleopMs = -Infinity;

  constructor(
    private state: ConsoleState,
    private sender: Sender,
    private now: () => number = () => Date.now(),
  ) {}

  private send(kind: CommandKind, args: Record<string, unknown>): boolean {
    const msg: ClientMessage = { type: "command", kind, args };
    if (!(OUTBOUND_TYPES as readonly string[]).includes(msg.type)) {
      throw new Error(`forbidden outbound type ${msg.type}`);
    }
    this.sender.send(msg);
    this.sentCount += 1;
    return true;
  }

  select(name: string | null): void {
    // selection changes are commands too, but carry no actuation
    this.send("select", { name });
    this.state.selection = name; // optimistic; snapshot confirms
  }

  private requireSelection(what: string): boolean {
    if (this.state.selection === null) {
      this.warnings.push(`no robot selected; ${what} not sent`);
      return false;
    }
    return true;
  }

  teleop(v: number, omega: number): boolean {
    if (!this.requireSelection("teleop")) return false;
    const now = this.now();
    const minIntervalMs = 1000 / TELEOP_MAX_HZ;
    const isStop = v === 0 && omega === 0;
    // release (zero twist) always goes out immediately
    if (!isStop && now - this.lastTeleopMs < minIntervalMs) return false;
    this.lastTeleopMs = now;
    return this.send("teleop", { v, omega });
  }

  teleopRelease(): boolean {
    if (!this.requireSelection("teleop release")) return false;
    return this.send("teleop", { v: 0, omega: 0 });
  }

  lights(on: boolean): boolean {
    if (!this.requireSelection("lights")) return false;
    return this.send("lights", { on });
  }

  resetOdometry(x?: number, y?: number, theta?: number): boolean {
    if (!this.requireSelection("odometry reset")) return false;
    const args: Record<string, unknown> = {};
    if (x !== undefined && y !== undefined) {
      args.x = x;
      args.y = y;
      args.theta = theta ?? 0;
    }
    return this.send("reset_odom", args);
  }

  reboot(): boolean {
    if (!this.requireSelection("reboot")) return false;
    return this.send("reboot", {});
  }

  /** Click in the merged viewport -> nav goal in world coordinates. */
  clickToGoal(point: ScreenPoint, viewport: ViewportTransform,
              arenaWidth: number, arenaHeight: number): boolean {
    if (!this.requireSelection("nav goal")) return false;
    const world = viewport.screenToWorld(point);
    if (world.x < 0 || world.y < 0 || world.x > arenaWidth || world.y > arenaHeight) {
      this.warnings.push(`click outside the arena (${world.x.toFixed(1)}, ${world.y.toFixed(1)})`);
      return false;
    }
    return this.send("nav_goal", { x: world.x, y: world.y });
  }

  pause(sender: Sender = this.sender): void {
    sender.send({ type: "pause" });
  }

  resume(sender: Sender = this.sender): void {
    sender.send({ type: "resume" });
  }

  setRate(factor: number, sender: Sender = this.sender): void {
    sender.send({ type: "set_rate", factor });
  }
}
