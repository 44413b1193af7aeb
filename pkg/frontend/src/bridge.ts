// WebSocket <-> TCP bridge: browsers cannot open raw TCP sockets, so this
// small Node process pipes WS frames to the gateway byte stream and frames
// the return stream per protocol message.
//
//   node dist/bridge.js [--gateway-host H] [--gateway-port P] [--ws-port P]

import net from "node:net";
import { WebSocketServer, WebSocket } from "ws";

import { MessageDecoder, encodeMessage } from "./protocol.js";

function arg(name: string, fallback: string): string {
  const i = process.argv.indexOf(`--${name}`);
  return i >= 0 && process.argv[i + 1] ? process.argv[i + 1] : fallback;
}

const gatewayHost = arg("gateway-host", "127.0.0.1");
const gatewayPort = Number(arg("gateway-port", "8765"));
const wsPort = Number(arg("ws-port", "8080"));

const wss = new WebSocketServer({ port: wsPort });
console.log(`bridge: ws://127.0.0.1:${wsPort} <-> tcp ${gatewayHost}:${gatewayPort}`);

wss.on("connection", (ws: WebSocket) => {
  const tcp = net.createConnection({ host: gatewayHost, port: gatewayPort });
  const decoder = new MessageDecoder();

  tcp.on("data", (data: Buffer) => {
    // re-frame per message so each WS frame is one protocol message
    try {
      for (const msg of decoder.feed(new Uint8Array(data))) {
        ws.send(encodeMessage(msg as never));
      }
    } catch (err) {
      console.error("bridge: bad gateway stream:", err);
      ws.close();
    }
  });
  tcp.on("close", () => ws.close());
  tcp.on("error", (err) => {
    console.error("bridge: gateway connection failed:", err.message);
    ws.close();
  });

  ws.on("message", (data: Buffer) => tcp.write(data));
  ws.on("close", () => tcp.end());
});
