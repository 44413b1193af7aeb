import { describe, expect, it } from "vitest";

import { ConsoleState } from "../src/state.js";
import { emptyGrid, makeSnapshot } from "./helpers.js";

describe("console state", () => {
  it("applies snapshots and mirrors the backend selection", () => {
    const state = new ConsoleState();
    state.applyMessage(makeSnapshot({ sim_time: 5, selected: "leo2",
                                      namespaces: { leo2: 4.5 } }));
    expect(state.snapshot?.sim_time).toBe(5);
    expect(state.selection).toBe("leo2");
  });

  it("ignores non-snapshot messages", () => {
    const state = new ConsoleState();
    state.applyMessage({ type: "hello", protocol: 1 });
    expect(state.snapshot).toBeNull();
  });

  it("freezes the last state on disconnect", () => {
    const state = new ConsoleState();
    state.onOpen();
    state.applyMessage(makeSnapshot({ sim_time: 9 }));
    state.onClose();
    expect(state.status).toBe("disconnected");
    expect(state.snapshot?.sim_time).toBe(9);
  });

  it("splits anchored and unanchored namespaces", () => {
    const state = new ConsoleState();
    state.applyMessage(makeSnapshot({
      anchors: {
        leo1: { anchored: true, x: 0, y: 0, theta: 0 },
        leo2: { anchored: false },
      },
    }));
    expect(state.anchoredNamespaces()).toEqual(["leo1"]);
    expect(state.unanchoredNamespaces()).toEqual(["leo2"]);
  });

  it("rendering model is a pure function of the snapshot stream", () => {
    const snapshots = [
      makeSnapshot({ sim_time: 1, namespaces: { leo1: 1 } }),
      makeSnapshot({ sim_time: 2, namespaces: { leo1: 2, leo2: 2 },
                     merged_map: emptyGrid() }),
    ];
    const a = new ConsoleState();
    const b = new ConsoleState();
    for (const s of snapshots) {
      a.applyMessage(s);
      b.applyMessage(s);
    }
    expect(a.selectorEntries()).toEqual(b.selectorEntries());
    expect(a.snapshot).toEqual(b.snapshot);
  });
});
