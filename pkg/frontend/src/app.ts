// Browser entry: connect to the gateway bridge, wire panels and inputs.

import { CommandGate } from "./commands.js";
import { PanelRefs, attachViewportInput, bindTeleopKeys, renderPanels } from "./panels.js";
import { ConsoleState } from "./state.js";
import { TeleopPad } from "./teleop.js";
import { WebSocketTransport } from "./transport.js";
import { ViewportTransform } from "./viewport.js";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

export function startConsole(wsUrl: string): void {
  const state = new ConsoleState();
  const transport = new WebSocketTransport(wsUrl);
  const gate = new CommandGate(state, transport);
  const pad = new TeleopPad(gate);

  const merged = byId<HTMLCanvasElement>("merged");
  const viewport = new ViewportTransform(merged.width, merged.height);
  let fitted = false;

  const refs: PanelRefs = {
    banner: byId("banner"),
    selector: byId("selector"),
    roverCards: byId("rovers"),
    merged,
    holding: byId("holding"),
    bandwidth: byId("bandwidth"),
    events: byId("events"),
    simTime: byId("simtime"),
  };

  const arenaSize = (): [number, number] => {
    const m = state.snapshot?.merged_map;
    return m ? [m.width * m.resolution, m.height * m.resolution] : [50, 36];
  };

  transport.onOpen(() => state.onOpen());
  transport.onClose(() => {
    state.onClose();
    renderPanels(state, refs, gate, viewport);
  });
  transport.onMessage((msg) => {
    state.applyMessage(msg);
    if (!fitted && state.snapshot?.merged_map) {
      const [w, h] = arenaSize();
      viewport.fit(w, h);
      fitted = true;
    }
    renderPanels(state, refs, gate, viewport);
  });

  attachViewportInput(merged, viewport, state, gate, arenaSize);
  bindTeleopKeys(document, pad);

  byId("lights-on").onclick = () => gate.lights(true);
  byId("lights-off").onclick = () => gate.lights(false);
  byId("reset-odom").onclick = () => gate.resetOdometry();
  byId("reboot").onclick = () => gate.reboot();
  byId("pause").onclick = () => gate.pause();
  byId("resume").onclick = () => gate.resume();
  const rate = byId<HTMLInputElement>("rate");
  rate.onchange = () => gate.setRate(Number(rate.value) || 1);
}

declare global {
  interface Window {
    startConsole: typeof startConsole;
  }
}
window.startConsole = startConsole;
