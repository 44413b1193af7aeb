// Transports speaking the gateway framing: raw TCP under Node (tests,
// bridge) and WebSocket in the browser (each WS frame carries one
// already-framed protocol message).

import { ClientMessage, MessageDecoder, encodeMessage } from "./protocol.js";

export interface Transport {
  send(msg: ClientMessage): void;
  onMessage(cb: (msg: unknown) => void): void;
  onOpen(cb: () => void): void;
  onClose(cb: () => void): void;
  close(): void;
}

export class TcpTransport implements Transport {
  private decoder = new MessageDecoder();
  private messageCb: (msg: unknown) => void = () => {};
  private openCb: () => void = () => {};
  private closeCb: () => void = () => {};
  // typed loosely: the net module only exists under Node
  private socket: any = null;

  async connect(host: string, port: number): Promise<void> {
    const net = await import("node:net");
    await new Promise<void>((resolve, reject) => {
      const socket = net.createConnection({ host, port }, () => {
        this.socket = socket;
        this.openCb();
        resolve();
      });
      socket.on("data", (data: Uint8Array) => {
        for (const msg of this.decoder.feed(data)) this.messageCb(msg);
      });
      socket.on("error", (err: Error) => {
        if (this.socket === null) reject(err);
      });
      socket.on("close", () => this.closeCb());
    });
  }

  send(msg: ClientMessage): void {
    if (!this.socket) throw new Error("not connected");
    this.socket.write(encodeMessage(msg));
  }

  onMessage(cb: (msg: unknown) => void): void {
    this.messageCb = cb;
  }

  onOpen(cb: () => void): void {
    this.openCb = cb;
  }

  onClose(cb: () => void): void {
    this.closeCb = cb;
  }

  close(): void {
    this.socket?.end();
  }
}

export class WebSocketTransport implements Transport {
  private decoder = new MessageDecoder();
  private messageCb: (msg: unknown) => void = () => {};
  private ws: WebSocket;

  constructor(url: string) {
    this.ws = new WebSocket(url);
    this.ws.binaryType = "arraybuffer";
    this.ws.onmessage = (ev) => {
      const data = new Uint8Array(ev.data as ArrayBuffer);
      for (const msg of this.decoder.feed(data)) this.messageCb(msg);
    };
  }

  send(msg: ClientMessage): void {
    this.ws.send(encodeMessage(msg));
  }

  onMessage(cb: (msg: unknown) => void): void {
    this.messageCb = cb;
  }

  onOpen(cb: () => void): void {
    this.ws.onopen = () => cb();
  }

  onClose(cb: () => void): void {
    this.ws.onclose = () => cb();
  }

  close(): void {
    this.ws.close();
  }
}
