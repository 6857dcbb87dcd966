import { ChildProcess, spawn } from "node:child_process";
import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { PanelError, PanelSession, connect } from "../src/client.js";
import { runScript } from "../src/script.js";

const HERE = dirname(fileURLToPath(import.meta.url));
const FIXTURES = join(HERE, "..", "..", "fixtures");
const BENCH_PATCH = join(FIXTURES, "bench.patch");

interface Emulator {
  proc: ChildProcess;
  port: number;
}

function startEmulator(): Promise<Emulator> {
  return new Promise((resolve, reject) => {
    const proc = spawn(
      "python3",
      ["-m", "panelsim", "serve", "--patch", BENCH_PATCH,
       "--seed", "42", "--port", "0", "--ready-fd", "3"],
      { stdio: ["ignore", "pipe", "pipe", "pipe"] },
    );
    let announce = "";
    proc.stdio[3]!.on("data", (chunk: Buffer) => {
      announce += chunk.toString("ascii");
      if (announce.includes("\n")) resolve({ proc, port: parseInt(announce, 10) });
    });
    proc.once("error", reject);
    proc.once("exit", (code) => reject(new Error(`server exited early (${code})`)));
    setTimeout(() => reject(new Error("server start timeout")), 15000).unref();
  });
}

function stopEmulator(emu: Emulator): Promise<void> {
  return new Promise((resolve) => {
    emu.proc.removeAllListeners("exit");
    emu.proc.once("exit", () => resolve());
    emu.proc.kill("SIGTERM");
  });
}

describe("session against a live emulator", () => {
  let emu: Emulator;
  let session: PanelSession;

  beforeAll(async () => {
    emu = await startEmulator();
    session = await connect("127.0.0.1", emu.port);
  });

  afterAll(async () => {
    session?.close();
    if (emu) await stopEmulator(emu);
  });

  it("reports the emulator version", async () => {
    expect(await session.getVersion()).toBe("panelsim 0.1.0");
  });

  it("reads back a DAC level through the wired ADC channel", async () => {
    await session.setDac(128);
    expect(await session.getAdc(0)).toBe(514);
  });

  it("quantizes the square-wave frequency to the clock divider", async () => {
    expect(await session.setPwg(1000)).toBe(1000);
    expect(await session.setPwg(300)).toBeCloseTo(300.008, 3);
    await session.setPwg(1000);
  });

  it("counts rising edges over the gate window", async () => {
    await session.setPwg(1000);
    const count = await session.getCntr(100);
    expect(count).toBeGreaterThanOrEqual(99);
    expect(count).toBeLessThanOrEqual(101);
  });

  it("flips the comparator around its internal reference", async () => {
    await session.setDac(50);
    expect(await session.getCmp()).toBe(1);
    await session.setDac(200);
    expect(await session.getCmp()).toBe(0);
  });

  it("echoes a buffered digital output back through the input", async () => {
    // the buffered pin updates about a millisecond after the command
    await session.setDout(0, true);
    await session.getCntr(2);
    expect(await session.getDin(0)).toBe(1);
    await session.setDout(0, false);
    await session.getCntr(2);
    expect(await session.getDin(0)).toBe(0);
  });

  it("captures a waveform as quantized sample codes", async () => {
    await session.setDac(100);
    const codes = await session.capture(0, 50, 4);
    expect(codes.length).toBe(50);
    for (const code of codes) expect(code).toBe(401);
  });

  it("starts with no latched faults", async () => {
    const faults = await session.getStatus();
    expect(faults.supplyOverload).toBe(false);
    expect(faults.overcurrent).toBe(false);
    expect(faults.negativeSignalAtCounter).toBe(false);
    await session.clearFault();
  });

  it("rejects out-of-range arguments with a status error", async () => {
    await expect(session.getAdc(9)).rejects.toThrow(PanelError);
    await expect(session.getAdc(9)).rejects.toThrow("BAD_ARG");
  });

  it("rejects a patch with safety errors and keeps the old wiring", async () => {
    await expect(session.loadPatch("connect INV1.OUT CNTR\n")).rejects.toThrow("LINT_ERROR");
    await session.setDac(128);
    expect(await session.getAdc(0)).toBe(514);
  });

  it("accepts a clean replacement patch", async () => {
    const count = await session.loadPatch("connect DAC ADC0\n");
    expect(count).toBe(0);
    const original = readFileSync(BENCH_PATCH, "utf-8");
    await session.loadPatch(original);
  });
});

describe("transcript parity with the reference CLI", () => {
  it("replays the golden script byte-for-byte", async () => {
    const emu = await startEmulator();
    const session = await connect("127.0.0.1", emu.port);
    try {
      const source = readFileSync(join(FIXTURES, "golden.script"), "utf-8");
      const expected = readFileSync(join(FIXTURES, "golden_transcript.txt"), "utf-8");
      const { transcript, allOk } = await runScript(session, source);
      expect(transcript).toBe(expected);
      expect(allOk).toBe(true);
    } finally {
      session.close();
      await stopEmulator(emu);
    }
  });
});
