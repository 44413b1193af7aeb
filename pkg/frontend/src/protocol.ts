// Gateway wire protocol: length-prefixed UTF-8 JSON messages.
// Framing: "<byte-count><LF><body>"; see the simulator's docs/protocol.md.

export interface GridMessage {
  width: number;
  height: number;
  resolution: number;
  origin: [number, number, number];
  rle: string;
}

export interface RoverView {
  last_seen: number;
  telemetry_age: number | null;
  odom: { x: number; y: number; theta: number; degraded?: boolean } | null;
  status: Record<string, unknown> | null;
  nav_status: string | null;
  map_version: number;
  map: GridMessage | null;
  path_to_gs: string[];
}

export interface AnchorEntry {
  anchored: boolean;
  source?: string;
  x?: number;
  y?: number;
  theta?: number;
  overlap?: number;
  inliers?: number;
}

export interface Snapshot {
  type: "snapshot";
  sim_time: number;
  paused?: boolean;
  namespaces: Record<string, number>;
  selected: string | null;
  commands_sent: number;
  rovers: Record<string, RoverView>;
  merged_map: GridMessage | null;
  anchors: Record<string, AnchorEntry>;
  bandwidth: Record<string, { in_bytes: number; out_bytes: number; in_bps: number; out_bps: number }>;
  events: [number, string, string][];
  true_poses?: Record<string, { x: number; y: number; theta: number }>;
}

export type ServerMessage =
  | { type: "hello"; protocol: number }
  | Snapshot
  | { type: "delta"; [k: string]: unknown }
  | { type: "error"; error: string };

export type ClientMessage =
  | { type: "command"; kind: CommandKind; args: Record<string, unknown> }
  | { type: "pause" }
  | { type: "resume" }
  | { type: "set_rate"; factor: number }
  | { type: "hello" };

export type CommandKind =
  | "select"
  | "teleop"
  | "lights"
  | "reset_odom"
  | "reboot"
  | "nav_goal";

// the console must never put anything else on the wire
export const OUTBOUND_TYPES = ["command", "pause", "resume", "set_rate", "hello"] as const;

const encoder = new TextEncoder();
const decoderUtf8 = new TextDecoder();

export function encodeMessage(msg: ClientMessage | ServerMessage): Uint8Array<ArrayBuffer> {
  const body = encoder.encode(JSON.stringify(msg));
  const prefix = encoder.encode(`${body.length}\n`);
  const out = new Uint8Array(new ArrayBuffer(prefix.length + body.length));
  out.set(prefix, 0);
  out.set(body, prefix.length);
  return out;
}

/** Incremental decoder for the length-prefixed framing. */
export class MessageDecoder {
  private buf = new Uint8Array(0);

  feed(data: Uint8Array): unknown[] {
    const joined = new Uint8Array(this.buf.length + data.length);
    joined.set(this.buf, 0);
    joined.set(data, this.buf.length);
    this.buf = joined;

    const out: unknown[] = [];
    for (;;) {
      const nl = this.buf.indexOf(0x0a);
      if (nl < 0) break;
      const prefix = decoderUtf8.decode(this.buf.subarray(0, nl));
      const length = Number(prefix);
      if (!Number.isInteger(length) || length < 0) {
        throw new Error(`bad length prefix: ${JSON.stringify(prefix)}`);
      }
      if (this.buf.length < nl + 1 + length) break;
      const body = this.buf.subarray(nl + 1, nl + 1 + length);
      this.buf = this.buf.slice(nl + 1 + length);
      out.push(JSON.parse(decoderUtf8.decode(body)));
    }
    return out;
  }
}

/** Expand a trinary RLE grid into one byte per cell: 0 unknown, 1 free, 2 occupied.
 *  Cell (ix, iy) is at index iy * width + ix (iy is the outer loop). */
export function decodeRle(msg: GridMessage): Uint8Array {
  const total = msg.width * msg.height;
  const cells = new Uint8Array(total);
  let pos = 0;
  let count = 0;
  for (const ch of msg.rle) {
    if (ch >= "0" && ch <= "9") {
      count = count * 10 + (ch.charCodeAt(0) - 48);
      continue;
    }
    if (count === 0) throw new Error("malformed rle: symbol without count");
    let value: number;
    if (ch === "u") value = 0;
    else if (ch === "f") value = 1;
    else if (ch === "o") value = 2;
    else throw new Error(`malformed rle: unknown symbol ${ch}`);
    if (value !== 0) cells.fill(value, pos, pos + count);
    pos += count;
    count = 0;
  }
  if (pos !== total || count !== 0) {
    throw new Error(`malformed rle: covers ${pos} of ${total} cells`);
  }
  return cells;
}

export function isSnapshot(msg: unknown): msg is Snapshot {
  return typeof msg === "object" && msg !== null && (msg as { type?: string }).type === "snapshot";
}
