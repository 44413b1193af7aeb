// Console safety acceptance: with no robot selected, operating every
// control must emit zero command messages, audited by message count.

import { describe, expect, it } from "vitest";

import { CommandGate, TELEOP_MAX_HZ } from "../src/commands.js";
import { ConsoleState } from "../src/state.js";
import { TeleopPad } from "../src/teleop.js";
import { ViewportTransform } from "../src/viewport.js";
import { RecordingSender, makeSnapshot } from "./helpers.js";

function makeGate(nowRef?: { t: number }) {
  const state = new ConsoleState();
  const sender = new RecordingSender();
  const gate = new CommandGate(state, sender, nowRef ? () => nowRef.t : undefined);
  return { state, sender, gate };
}

describe("console safety (no selection)", () => {
  it("every control emits zero messages without a selection", () => {
    const { state, sender, gate } = makeGate();
    state.applyMessage(makeSnapshot({ namespaces: { leo1: 1 } }));
    expect(state.selection).toBeNull();

    const vp = new ViewportTransform(800, 600);
    vp.fit(50, 36);
    gate.teleop(0.2, 0.0);
    gate.teleopRelease();
    gate.lights(true);
    gate.lights(false);
    gate.resetOdometry();
    gate.reboot();
    gate.clickToGoal({ px: 400, py: 300 }, vp, 50, 36);

    expect(sender.sent).toHaveLength(0);
    expect(gate.sentCount).toBe(0);
    expect(gate.warnings.length).toBeGreaterThan(0);
  });

  it("controls work once a robot is selected", () => {
    const { sender, gate } = makeGate();
    gate.select("leo1");
    gate.lights(true);
    gate.teleop(0.1, 0);
    expect(sender.ofKind("select")).toHaveLength(1);
    expect(sender.ofKind("lights")).toHaveLength(1);
    expect(sender.ofKind("teleop")).toHaveLength(1);
  });

  it("only whitelisted message types ever leave the console", () => {
    const { sender, gate } = makeGate();
    gate.select("leo1");
    gate.teleop(0.1, 0);
    gate.pause();
    gate.resume();
    gate.setRate(2);
    const allowed = new Set(["command", "pause", "resume", "set_rate", "hello"]);
    for (const msg of sender.sent) {
      expect(allowed.has((msg as { type: string }).type)).toBe(true);
    }
  });
});

describe("teleop pad", () => {
  it("limits the stream to 10 Hz", () => {
    const now = { t: 0 };
    const { sender, gate } = makeGate(now);
    gate.select("leo1");
    for (let i = 0; i < 200; i++) {
      gate.teleop(0.2, 0);
      now.t += 20; // 50 Hz attempts for 4 s
    }
    const teleops = sender.ofKind("teleop").length;
    expect(teleops).toBeLessThanOrEqual(4 * TELEOP_MAX_HZ + 1);
    expect(teleops).toBeGreaterThanOrEqual(4 * TELEOP_MAX_HZ - 2);
  });

  it("release sends an immediate zero twist even inside the rate window", () => {
    const now = { t: 0 };
    const { sender, gate } = makeGate(now);
    gate.select("leo1");
    const pad = new TeleopPad(gate);
    pad.keyDown("forward");
    now.t += 10; // well inside the 100 ms window
    pad.keyUp("forward");
    const teleops = sender.ofKind("teleop") as { args: { v: number } }[];
    expect(teleops).toHaveLength(2);
    expect(teleops[1].args.v).toBe(0);
  });

  it("clearing the selection mid-drive stops the stream", () => {
    const now = { t: 0 };
    const { state, sender, gate } = makeGate(now);
    gate.select("leo1");
    const pad = new TeleopPad(gate);
    pad.keyDown("forward");
    now.t += 200;
    pad.tick();
    const before = sender.ofKind("teleop").length;
    expect(before).toBeGreaterThan(0);
    state.applyMessage(makeSnapshot({ selected: null }));
    now.t += 200;
    pad.tick();
    now.t += 200;
    pad.tick();
    expect(sender.ofKind("teleop")).toHaveLength(before);
  });
});
