// Panel rendering: robot selector with controls, per-rover map cards,
// teleop pad, merged-map viewport with a holding strip for unanchored
// maps, bandwidth table, and the sim rate controls.
//
// Rendering is a pure function of (state, viewport): every call rebuilds
// panel contents from the stored snapshot only.

import { CommandGate } from "./commands.js";
import { drawGrid } from "./grid.js";
import { GridMessage } from "./protocol.js";
import { ConsoleState } from "./state.js";
import { TeleopPad } from "./teleop.js";
import { ViewportTransform } from "./viewport.js";

const ROVER_TINTS: [number, number, number][] = [
  [70, 130, 255], [80, 200, 120], [235, 90, 80], [230, 200, 60],
];

export interface PanelRefs {
  banner: HTMLElement;
  selector: HTMLElement;
  roverCards: HTMLElement;
  merged: HTMLCanvasElement;
  holding: HTMLElement;
  bandwidth: HTMLElement;
  events: HTMLElement;
  simTime: HTMLElement;
}

export function renderPanels(state: ConsoleState, refs: PanelRefs,
                             gate: CommandGate, viewport: ViewportTransform): void {
  renderBanner(state, refs.banner);
  renderSelector(state, refs.selector, gate);
  renderRoverCards(state, refs.roverCards);
  renderMerged(state, refs.merged, viewport);
  renderHoldingStrip(state, refs.holding);
  renderBandwidth(state, refs.bandwidth);
  renderEvents(state, refs.events);
  const snap = state.snapshot;
  refs.simTime.textContent = snap
    ? `t = ${snap.sim_time.toFixed(1)} s${snap.paused ? " (paused)" : ""}`
    : "no data";
}

function renderBanner(state: ConsoleState, el: HTMLElement): void {
  if (state.status === "disconnected") {
    el.textContent = "CONNECTION LOST — showing last received state";
    el.style.display = "block";
  } else {
    el.style.display = "none";
  }
}

function renderSelector(state: ConsoleState, el: HTMLElement, gate: CommandGate): void {
  el.replaceChildren();
  const entries = state.selectorEntries();
  const doc = el.ownerDocument;
  const none = doc.createElement("button");
  none.textContent = "none";
  none.className = state.selection === null ? "sel active" : "sel";
  none.onclick = () => gate.select(null);
  el.appendChild(none);
  for (const entry of entries) {
    const b = doc.createElement("button");
    b.textContent = entry.namespace;
    b.className = "sel"
      + (state.selection === entry.namespace ? " active" : "")
      + (entry.live ? "" : " stale");
    b.disabled = false; // selecting a stale rover is allowed; backend holds
    b.onclick = () => gate.select(entry.namespace);
    el.appendChild(b);
  }
  if (entries.length === 0) {
    const hint = doc.createElement("span");
    hint.textContent = "no rovers discovered yet";
    el.appendChild(hint);
  }
}

function renderRoverCards(state: ConsoleState, el: HTMLElement): void {
  el.replaceChildren();
  const snap = state.snapshot;
  if (!snap) return;
  const doc = el.ownerDocument;
  Object.entries(snap.rovers).forEach(([ns, view], i) => {
    const card = doc.createElement("div");
    card.className = "card";
    const title = doc.createElement("h3");
    const age = view.telemetry_age;
    title.textContent = `${ns} — age ${age === null ? "?" : age.toFixed(1) + " s"}`;
    if (age !== null && age > 6) title.className = "stale";
    card.appendChild(title);
    const status = doc.createElement("pre");
    const s = view.status ?? {};
    status.textContent =
      `nav: ${view.nav_status ?? "-"}  powered: ${s["powered"] ?? "?"}\n` +
      `lights: ${s["headlights"] ?? "?"}  drift: ${s["drift_m"] ?? "?"} m` +
      `${s["degraded"] ? "  ODOMETRY DEGRADED" : ""}`;
    card.appendChild(status);
    if (view.map) {
      const canvas = doc.createElement("canvas");
      const scale = Math.max(1, Math.floor(180 / Math.max(view.map.width, view.map.height)));
      canvas.width = view.map.width * scale;
      canvas.height = view.map.height * scale;
      const ctx = canvas.getContext("2d");
      if (ctx) drawGrid(ctx, view.map, scale, ROVER_TINTS[i % ROVER_TINTS.length]);
      card.appendChild(canvas);
    }
    el.appendChild(card);
  });
}

function renderMerged(state: ConsoleState, canvas: HTMLCanvasElement,
                      viewport: ViewportTransform): void {
  const ctx = canvas.getContext("2d");
  const snap = state.snapshot;
  if (!ctx || !snap) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const merged = snap.merged_map;
  if (merged) {
    const originPx = viewport.worldToScreen({
      x: merged.origin[0],
      y: merged.origin[1] + merged.height * merged.resolution,
    });
    ctx.save();
    ctx.translate(originPx.px, originPx.py);
    const scale = merged.resolution * viewport.zoom;
    drawGrid(ctx, merged, scale);
    ctx.restore();
  }
  // anchored rover poses from odometry + anchor transforms
  for (const ns of state.anchoredNamespaces()) {
    const view = snap.rovers[ns];
    const anchor = snap.anchors[ns];
    if (!view?.odom || anchor?.x === undefined) continue;
    const c = Math.cos(anchor.theta ?? 0);
    const s = Math.sin(anchor.theta ?? 0);
    const wx = c * view.odom.x - s * view.odom.y + anchor.x;
    const wy = s * view.odom.x + c * view.odom.y + (anchor.y ?? 0);
    const p = viewport.worldToScreen({ x: wx, y: wy });
    ctx.beginPath();
    ctx.arc(p.px, p.py, 5, 0, 2 * Math.PI);
    ctx.fillStyle = state.selection === ns ? "#ffcc00" : "#44aaff";
    ctx.fill();
    ctx.fillStyle = "#fff";
    ctx.fillText(ns, p.px + 7, p.py - 7);
  }
}

function renderHoldingStrip(state: ConsoleState, el: HTMLElement): void {
  el.replaceChildren();
  const snap = state.snapshot;
  if (!snap) return;
  const doc = el.ownerDocument;
  for (const ns of state.unanchoredNamespaces()) {
    const view = snap.rovers[ns];
    const box = doc.createElement("div");
    box.className = "unanchored";
    const label = doc.createElement("span");
    label.textContent = `${ns} (unanchored)`;
    box.appendChild(label);
    if (view?.map) {
      const canvas = doc.createElement("canvas");
      const scale = Math.max(1, Math.floor(120 / Math.max(view.map.width, view.map.height)));
      canvas.width = view.map.width * scale;
      canvas.height = view.map.height * scale;
      const ctx = canvas.getContext("2d");
      if (ctx) drawGrid(ctx, view.map, scale);
      box.appendChild(canvas);
    }
    el.appendChild(box);
  }
}

function renderBandwidth(state: ConsoleState, el: HTMLElement): void {
  const snap = state.snapshot;
  if (!snap) return;
  const rows = Object.entries(snap.bandwidth)
    .sort(([a], [b]) => (a < b ? -1 : 1))
    .map(([ns, bw]) =>
      `${ns.padEnd(14)} ↓${(bw.in_bps / 1000).toFixed(1).padStart(8)} kb/s` +
      ` ↑${(bw.out_bps / 1000).toFixed(1).padStart(8)} kb/s`);
  const hops = Object.entries(snap.rovers)
    .map(([ns, v]) => `${ns}: ${Math.max(0, (v.path_to_gs?.length ?? 1) - 1)} hops`);
  el.textContent = rows.join("\n") + (hops.length ? "\n" + hops.join("  ") : "");
}

function renderEvents(state: ConsoleState, el: HTMLElement): void {
  const snap = state.snapshot;
  if (!snap) return;
  el.textContent = snap.events
    .slice(-8)
    .map(([t, kind, detail]) => `[${t.toFixed(1)}] ${kind}: ${detail}`)
    .join("\n");
}

export function attachViewportInput(canvas: HTMLCanvasElement,
                                    viewport: ViewportTransform,
                                    state: ConsoleState,
                                    gate: CommandGate,
                                    arena: () => [number, number]): void {
  let dragging = false;
  let moved = false;
  let last = { px: 0, py: 0 };
  canvas.addEventListener("mousedown", (ev) => {
    dragging = true;
    moved = false;
    last = { px: ev.offsetX, py: ev.offsetY };
  });
  canvas.addEventListener("mousemove", (ev) => {
    if (!dragging) return;
    const dx = ev.offsetX - last.px;
    const dy = ev.offsetY - last.py;
    if (Math.abs(dx) + Math.abs(dy) > 2) moved = true;
    viewport.panBy(dx, dy);
    last = { px: ev.offsetX, py: ev.offsetY };
  });
  canvas.addEventListener("mouseup", (ev) => {
    dragging = false;
    if (moved) return; // it was a pan, not a goal click
    const [w, h] = arena();
    gate.clickToGoal({ px: ev.offsetX, py: ev.offsetY }, viewport, w, h);
  });
  canvas.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    viewport.zoomAt(ev.deltaY < 0 ? 1.2 : 1 / 1.2,
                    { px: ev.offsetX, py: ev.offsetY });
  });
}

export function bindTeleopKeys(doc: Document, pad: TeleopPad): void {
  const keymap: Record<string, string> = {
    w: "forward", ArrowUp: "forward",
    s: "back", ArrowDown: "back",
    a: "left", ArrowLeft: "left",
    d: "right", ArrowRight: "right",
  };
  doc.addEventListener("keydown", (ev) => {
    const action = keymap[ev.key];
    if (action) pad.keyDown(action);
  });
  doc.addEventListener("keyup", (ev) => {
    const action = keymap[ev.key];
    if (action) pad.keyUp(action);
  });
  doc.defaultView?.addEventListener("blur", () => pad.releaseAll());
}
