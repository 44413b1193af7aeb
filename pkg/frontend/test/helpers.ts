import { GridMessage, Snapshot } from "../src/protocol.js";

export function emptyGrid(width = 10, height = 10, resolution = 0.1): GridMessage {
  return {
    width,
    height,
    resolution,
    origin: [0, 0, 0],
    rle: `${width * height}u`,
  };
}

export function makeSnapshot(partial: Partial<Snapshot> = {}): Snapshot {
  return {
    type: "snapshot",
    sim_time: 0,
    namespaces: {},
    selected: null,
    commands_sent: 0,
    rovers: {},
    merged_map: null,
    anchors: {},
    bandwidth: {},
    events: [],
    ...partial,
  };
}

export class RecordingSender {
  sent: unknown[] = [];

  send(msg: unknown): void {
    this.sent.push(msg);
  }

  ofKind(kind: string): unknown[] {
    return this.sent.filter(
      (m) => (m as { type?: string; kind?: string }).kind === kind,
    );
  }
}
