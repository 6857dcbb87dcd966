/**
 * Scripting client for the emulated panel: one session per connection,
 * one method per wire command. Non-OK statuses surface as PanelError.
 */

import { Socket, createConnection } from "node:net";

import {
  Frame,
  MAGIC_REQUEST,
  Opcode,
  STATUS_NAMES,
  Status,
  StreamDecoder,
  encode,
} from "./frames.js";

export class PanelError extends Error {
  constructor(readonly status: number) {
    super(STATUS_NAMES[status] ?? `STATUS_${status.toString(16)}`);
  }
}

export class TransportError extends Error {}

export interface Faults {
  supplyOverload: boolean;
  overcurrent: boolean;
  negativeSignalAtCounter: boolean;
}

export class PanelSession {
  private decoder = new StreamDecoder();
  private pending: Array<{
    resolve: (f: Frame) => void;
    reject: (e: Error) => void;
  }> = [];

  constructor(private sock: Socket) {
    sock.on("data", (data: Buffer | string) => {
      const chunk = typeof data === "string" ? Buffer.from(data) : data;
      for (const event of this.decoder.feed(chunk)) {
        const waiter = this.pending.shift();
        if (!waiter) continue;
        if (event.kind === "frame") waiter.resolve(event.frame);
        else waiter.reject(new TransportError(event.error.message));
      }
    });
    sock.on("error", (err) => this.fail(new TransportError(err.message)));
    sock.on("close", () => this.fail(new TransportError("connection closed")));
  }

  private fail(err: Error) {
    const waiters = this.pending;
    this.pending = [];
    for (const w of waiters) w.reject(err);
  }

  close(): void {
    this.sock.destroy();
  }

  private exchange(opcode: Opcode, payload: Buffer = Buffer.alloc(0)): Promise<Frame> {
    return new Promise((resolve, reject) => {
      this.pending.push({ resolve, reject });
      this.sock.write(encode({ magic: MAGIC_REQUEST, code: opcode, payload }));
    });
  }

  private async command(opcode: Opcode, payload?: Buffer): Promise<Buffer> {
    const frame = await this.exchange(opcode, payload);
    if (frame.code !== Status.Ok) throw new PanelError(frame.code);
    return frame.payload;
  }

  /** Raw access used by the transcript runner. */
  async raw(opcode: Opcode, payload?: Buffer): Promise<Frame> {
    return this.exchange(opcode, payload);
  }

  async setDout(pin: number, level: boolean): Promise<void> {
    await this.command(Opcode.SetDout, Buffer.from([pin, level ? 1 : 0]));
  }

  async getDin(pin: number): Promise<number> {
    return (await this.command(Opcode.GetDin, Buffer.from([pin])))[0];
  }

  async setDac(code: number): Promise<void> {
    await this.command(Opcode.SetDac, Buffer.from([code]));
  }

  async getAdc(channel: number): Promise<number> {
    return (await this.command(Opcode.GetAdc, Buffer.from([channel]))).readUInt16LE(0);
  }

  async capture(channel: number, count: number, dtUs: number): Promise<number[]> {
    const payload = Buffer.alloc(7);
    payload.writeUInt8(channel, 0);
    payload.writeUInt16LE(count, 1);
    payload.writeUInt32LE(dtUs, 3);
    const data = await this.command(Opcode.Capture, payload);
    const codes: number[] = [];
    for (let off = 0; off < data.length; off += 2) codes.push(data.readUInt16LE(off));
    return codes;
  }

  /** Returns the quantized frequency actually programmed, in hertz. */
  async setPwg(hz: number): Promise<number> {
    const payload = Buffer.alloc(4);
    payload.writeUInt32LE(Math.round(hz * 1000), 0);
    const data = await this.command(Opcode.SetPwg, payload);
    return data.readUInt32LE(0) / 1000;
  }

  /** Rising-edge count over the gate; hertz = count / gate seconds. */
  async getCntr(gateMs: number): Promise<number> {
    const payload = Buffer.alloc(2);
    payload.writeUInt16LE(gateMs, 0);
    return (await this.command(Opcode.GetCntr, payload)).readUInt32LE(0);
  }

  async getCmp(): Promise<number> {
    return (await this.command(Opcode.GetCmp))[0];
  }

  async getStatus(): Promise<Faults> {
    const mask = (await this.command(Opcode.GetStatus))[0];
    return {
      supplyOverload: Boolean(mask & 0x01),
      overcurrent: Boolean(mask & 0x02),
      negativeSignalAtCounter: Boolean(mask & 0x04),
    };
  }

  async clearFault(): Promise<void> {
    await this.command(Opcode.ClearFault);
  }

  /** Returns the diagnostic count; throws PanelError(LINT_ERROR) on errors. */
  async loadPatch(text: string): Promise<number> {
    const data = await this.command(Opcode.LoadPatch, Buffer.from(text, "utf-8"));
    return data.readUInt16LE(0);
  }

  async getVersion(): Promise<string> {
    return (await this.command(Opcode.GetVersion)).toString("ascii");
  }
}

export function connect(host: string, port: number, timeoutMs = 10000): Promise<PanelSession> {
  return new Promise((resolve, reject) => {
    const sock = createConnection({ host, port });
    const timer = setTimeout(
      () => reject(new TransportError("connect timeout")),
      timeoutMs,
    );
    sock.once("connect", () => {
      clearTimeout(timer);
      sock.setNoDelay(true);
      resolve(new PanelSession(sock));
    });
    sock.once("error", (err) => {
      clearTimeout(timer);
      reject(new TransportError(err.message));
    });
  });
}
