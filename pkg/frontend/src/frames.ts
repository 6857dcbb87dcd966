/**
 * Framed binary wire protocol, implemented from the wire contract alone.
 *
 * Frame: magic (0xEB request / 0xEC response), opcode-or-status byte,
 * payload length as u16 little-endian (max 4096), payload, then CRC-8
 * (poly 0x07, init 0x00, unreflected) over all preceding bytes.
 */

export const MAGIC_REQUEST = 0xeb;
export const MAGIC_RESPONSE = 0xec;
export const MAX_PAYLOAD = 4096;
export const OVERHEAD = 5;

export enum Opcode {
  SetDout = 0x01,
  GetDin = 0x02,
  SetDac = 0x03,
  GetAdc = 0x04,
  Capture = 0x05,
  SetPwg = 0x06,
  GetCntr = 0x07,
  GetCmp = 0x08,
  GetStatus = 0x09,
  ClearFault = 0x0a,
  LoadPatch = 0x0b,
  GetVersion = 0x0c,
}

export enum Status {
  Ok = 0x00,
  BadOpcode = 0x01,
  BadArg = 0x02,
  FaultActive = 0x03,
  CrcError = 0x04,
  Limit = 0x05,
  LintError = 0x06,
}

export const STATUS_NAMES: Record<number, string> = {
  [Status.Ok]: "OK",
  [Status.BadOpcode]: "BAD_OPCODE",
  [Status.BadArg]: "BAD_ARG",
  [Status.FaultActive]: "FAULT_ACTIVE",
  [Status.CrcError]: "CRC_ERROR",
  [Status.Limit]: "LIMIT",
  [Status.LintError]: "LINT_ERROR",
};

export interface Frame {
  magic: number;
  code: number;
  payload: Buffer;
}

const CRC_TABLE: number[] = (() => {
  const table: number[] = [];
  for (let byte = 0; byte < 256; byte++) {
    let crc = byte;
    for (let i = 0; i < 8; i++) {
      crc = crc & 0x80 ? ((crc << 1) ^ 0x07) & 0xff : (crc << 1) & 0xff;
    }
    table.push(crc);
  }
  return table;
})();

export function crc8(data: Buffer): number {
  let crc = 0x00;
  for (const b of data) crc = CRC_TABLE[crc ^ b];
  return crc;
}

export class DecodeError extends Error {
  constructor(
    readonly kind: "BadMagic" | "BadCrc" | "Truncated" | "PayloadTooLarge" | "LengthMismatch",
    message: string,
  ) {
    super(`${kind}: ${message}`);
  }
}

export function encode(frame: Frame): Buffer {
  if (frame.payload.length > MAX_PAYLOAD) {
    throw new DecodeError("PayloadTooLarge", `${frame.payload.length} bytes`);
  }
  const head = Buffer.alloc(4);
  head.writeUInt8(frame.magic, 0);
  head.writeUInt8(frame.code, 1);
  head.writeUInt16LE(frame.payload.length, 2);
  const body = Buffer.concat([head, frame.payload]);
  return Buffer.concat([body, Buffer.from([crc8(body)])]);
}

export function decode(data: Buffer): Frame {
  if (data.length < OVERHEAD) {
    throw new DecodeError("Truncated", `${data.length} bytes`);
  }
  const magic = data.readUInt8(0);
  if (magic !== MAGIC_REQUEST && magic !== MAGIC_RESPONSE) {
    throw new DecodeError("BadMagic", `0x${magic.toString(16)}`);
  }
  const plen = data.readUInt16LE(2);
  if (plen > MAX_PAYLOAD) {
    throw new DecodeError("PayloadTooLarge", `${plen} bytes declared`);
  }
  const total = OVERHEAD + plen;
  if (data.length < total) {
    throw new DecodeError("Truncated", `${data.length} of ${total} bytes`);
  }
  if (data.length > total) {
    throw new DecodeError("LengthMismatch", `${data.length} of ${total} bytes`);
  }
  if (crc8(data.subarray(0, total - 1)) !== data[total - 1]) {
    throw new DecodeError("BadCrc", "checksum mismatch");
  }
  return { magic, code: data.readUInt8(1), payload: Buffer.from(data.subarray(4, total - 1)) };
}

export type StreamEvent =
  | { kind: "frame"; frame: Frame }
  | { kind: "error"; error: DecodeError };

/** Incremental decoder that resynchronizes on the next magic byte. */
export class StreamDecoder {
  private buf = Buffer.alloc(0);

  feed(data: Buffer): StreamEvent[] {
    this.buf = Buffer.concat([this.buf, data]);
    const events: StreamEvent[] = [];
    for (;;) {
      const start = this.buf.findIndex(
        (b) => b === MAGIC_REQUEST || b === MAGIC_RESPONSE,
      );
      if (start < 0) {
        this.buf = Buffer.alloc(0);
        break;
      }
      if (start > 0) this.buf = this.buf.subarray(start);
      if (this.buf.length < 4) break;
      const plen = this.buf.readUInt16LE(2);
      if (plen > MAX_PAYLOAD) {
        events.push({
          kind: "error",
          error: new DecodeError("PayloadTooLarge", `${plen} bytes declared`),
        });
        this.buf = this.buf.subarray(1);
        continue;
      }
      const total = OVERHEAD + plen;
      if (this.buf.length < total) break;
      const chunk = this.buf.subarray(0, total);
      if (crc8(chunk.subarray(0, total - 1)) !== chunk[total - 1]) {
        events.push({
          kind: "error",
          error: new DecodeError("BadCrc", "checksum mismatch"),
        });
        this.buf = this.buf.subarray(1);
        continue;
      }
      this.buf = this.buf.subarray(total);
      events.push({
        kind: "frame",
        frame: {
          magic: chunk.readUInt8(0),
          code: chunk.readUInt8(1),
          payload: Buffer.from(chunk.subarray(4, total - 1)),
        },
      });
    }
    return events;
  }
}
