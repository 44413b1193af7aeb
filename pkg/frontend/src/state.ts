// Console state: the latest gateway snapshot plus connection bookkeeping.
// Rendering reads only this store, so a replayed snapshot stream always
// reproduces the same scene.

import { AnchorEntry, Snapshot, isSnapshot } from "./protocol.js";

export type ConnectionStatus = "connecting" | "connected" | "disconnected";

export interface SelectorEntry {
  namespace: string;
  live: boolean; // still announced; false renders greyed out
  lastSeen: number;
}

export class ConsoleState {
  status: ConnectionStatus = "connecting";
  snapshot: Snapshot | null = null;
  /** namespaces ever seen; entries grey out instead of disappearing */
  private known = new Map<string, number>();
  selection: string | null = null; // mirrors the backend after ack

  applyMessage(msg: unknown): void {
    if (isSnapshot(msg)) {
      this.snapshot = msg;
      for (const [ns, t] of Object.entries(msg.namespaces)) {
        this.known.set(ns, t);
      }
      this.selection = msg.selected;
    }
  }

  onOpen(): void {
    this.status = "connected";
  }

  onClose(): void {
    // keep the last snapshot frozen; the UI shows a banner
    this.status = "disconnected";
  }

  selectorEntries(): SelectorEntry[] {
    const live = new Set(Object.keys(this.snapshot?.namespaces ?? {}));
    return [...this.known.entries()]
      .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
      .map(([ns, t]) => ({ namespace: ns, live: live.has(ns), lastSeen: t }));
  }

  anchorFor(ns: string): AnchorEntry | undefined {
    return this.snapshot?.anchors?.[ns];
  }

  /** Namespaces whose maps merge at an accepted transform. */
  anchoredNamespaces(): string[] {
    const anchors = this.snapshot?.anchors ?? {};
    return Object.keys(anchors).filter((ns) => anchors[ns].anchored).sort();
  }

  /** Maps shown in the holding strip instead of the merged overlay. */
  unanchoredNamespaces(): string[] {
    const anchors = this.snapshot?.anchors ?? {};
    return Object.keys(anchors).filter((ns) => !anchors[ns].anchored).sort();
  }

  telemetryAge(ns: string): number | null {
    return this.snapshot?.rovers?.[ns]?.telemetry_age ?? null;
  }
}
