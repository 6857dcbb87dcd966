/**
 * Script runner producing transcripts in the same line format as the
 * operator CLI, so the two implementations can be diffed byte-for-byte.
 */

import { readFileSync } from "node:fs";

import { PanelSession } from "./client.js";
import { Frame, Opcode, STATUS_NAMES, Status } from "./frames.js";

class ArgError extends Error {}

function intArg(text: string, lo: number, hi: number): number {
  const value = /^0[xX]/.test(text) ? parseInt(text, 16) : Number(text);
  if (!Number.isInteger(value)) throw new ArgError(`not an integer: ${text}`);
  if (value < lo || value > hi) throw new ArgError(`${value} outside ${lo}..${hi}`);
  return value;
}

function u16(v: number): Buffer {
  const b = Buffer.alloc(2);
  b.writeUInt16LE(v, 0);
  return b;
}

function u32(v: number): Buffer {
  const b = Buffer.alloc(4);
  b.writeUInt32LE(v, 0);
  return b;
}

export function encodeCommand(name: string, args: string[]): { opcode: Opcode; payload: Buffer } {
  const want = (n: number) => {
    if (args.length !== n) throw new ArgError(`${name} takes ${n} argument(s)`);
  };
  switch (name) {
    case "set-dout":
      want(2);
      return {
        opcode: Opcode.SetDout,
        payload: Buffer.from([intArg(args[0], 0, 3), intArg(args[1], 0, 1)]),
      };
    case "get-din":
      want(1);
      return { opcode: Opcode.GetDin, payload: Buffer.from([intArg(args[0], 0, 3)]) };
    case "set-dac":
      want(1);
      return { opcode: Opcode.SetDac, payload: Buffer.from([intArg(args[0], 0, 255)]) };
    case "get-adc":
      want(1);
      return { opcode: Opcode.GetAdc, payload: Buffer.from([intArg(args[0], 0, 3)]) };
    case "set-pwg": {
      want(1);
      const hz = Number(args[0]);
      if (!Number.isFinite(hz) || hz < 0 || hz > 4e6) {
        throw new ArgError(`bad frequency: ${args[0]}`);
      }
      return { opcode: Opcode.SetPwg, payload: u32(Math.round(hz * 1000)) };
    }
    case "get-cntr":
      want(1);
      return { opcode: Opcode.GetCntr, payload: u16(intArg(args[0], 0, 65535)) };
    case "get-cmp":
      want(0);
      return { opcode: Opcode.GetCmp, payload: Buffer.alloc(0) };
    case "get-status":
      want(0);
      return { opcode: Opcode.GetStatus, payload: Buffer.alloc(0) };
    case "clear-fault":
      want(0);
      return { opcode: Opcode.ClearFault, payload: Buffer.alloc(0) };
    case "load-patch": {
      want(1);
      const text = readFileSync(args[0], "utf-8");
      return { opcode: Opcode.LoadPatch, payload: Buffer.from(text, "utf-8") };
    }
    case "get-version":
      want(0);
      return { opcode: Opcode.GetVersion, payload: Buffer.alloc(0) };
    default:
      throw new ArgError(`unknown command ${name}`);
  }
}

export function renderResponse(name: string, frame: Frame, gateMs = 0): string {
  if (frame.code !== Status.Ok) {
    return STATUS_NAMES[frame.code] ?? `STATUS_${frame.code.toString(16).padStart(2, "0").toUpperCase()}`;
  }
  const p = frame.payload;
  switch (name) {
    case "get-din":
    case "get-cmp":
      return `OK level=${p[0]}`;
    case "get-adc":
      return `OK code=${p.readUInt16LE(0)}`;
    case "set-pwg":
      return `OK actual_hz=${(p.readUInt32LE(0) / 1000).toFixed(3)}`;
    case "get-cntr": {
      const count = p.readUInt32LE(0);
      const hz = gateMs ? count / (gateMs / 1000) : 0;
      return `OK count=${count} hz=${hz.toFixed(3)}`;
    }
    case "get-status":
      return `OK faults=0x${p[0].toString(16).padStart(2, "0").toUpperCase()}`;
    case "load-patch":
      return `OK diagnostics=${p.readUInt16LE(0)}`;
    case "get-version":
      return `OK version="${p.toString("ascii")}"`;
    default:
      return "OK";
  }
}

export interface ScriptResult {
  transcript: string;
  allOk: boolean;
}

/** Run a command script; the transcript matches the CLI's byte-for-byte. */
export async function runScript(
  session: PanelSession,
  source: string,
): Promise<ScriptResult> {
  const lines: string[] = [];
  let allOk = true;
  for (const raw of source.split("\n")) {
    const words = raw.split("#", 1)[0].trim().split(/\s+/).filter(Boolean);
    if (!words.length) continue;
    const [name, ...args] = words;
    let line: string;
    let ok: boolean;
    try {
      const { opcode, payload } = encodeCommand(name, args);
      const gateMs = name === "get-cntr" ? Number(args[0]) : 0;
      const frame = await session.raw(opcode, payload);
      ok = frame.code === Status.Ok;
      line = renderResponse(name, frame, gateMs);
    } catch (err) {
      if (err instanceof ArgError) {
        ok = false;
        line = "BAD_ARG";
      } else {
        throw err;
      }
    }
    lines.push(line);
    allOk &&= ok;
  }
  return { transcript: lines.map((l) => l + "\n").join(""), allOk };
}
