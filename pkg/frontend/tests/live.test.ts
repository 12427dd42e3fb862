/** Live checks against a real frame service.
 *
 * Skipped unless VIEWER_LIVE_URL points at a running service; use
 * `npm run live` to build a demo field, start the service, and run these.
 */

import { describe, expect, it } from "vitest";

import { decodeDepthPng } from "../src/png16.js";
import { buildRenderBody, ViewerSession } from "../src/session.js";
import { HttpTransport } from "../src/transport.js";
import { TransportError } from "../src/types.js";

const URL = process.env.VIEWER_LIVE_URL;
const PNG_MAGIC = [137, 80, 78, 71];

const SIZES = { panoHeight: 256, perspectiveSide: 256, fov: 90 } as const;

describe.skipIf(!URL)("live service", () => {
  const transport = () => new HttpTransport(URL!);

  it("advertises a usable scene", async () => {
    const scene = await transport().scene();
    expect(scene.near).toBeGreaterThan(0);
    expect(scene.far).toBeGreaterThan(scene.near);
    expect(scene.w).toBeGreaterThan(0);
    expect(scene.d).toBeGreaterThanOrEqual(2);
    expect(scene.referenceThumbnail).toBeTruthy();
  });

  it("sustains at least 2 fps of 256x512 panoramas at distinct poses", async () => {
    const t = transport();
    const scene = await t.scene();
    const step = scene.near * 0.04;
    const frames = 7;
    let checked: number | null = null;
    // distinct translations so the service cache cannot serve repeats
    const times: number[] = [];
    for (let i = 0; i < frames; i++) {
      const pose = {
        yaw: 0.1 * i,
        pitch: 0,
        t: [step * i, 0, -step * i] as [number, number, number],
      };
      const start = performance.now();
      const res = await t.render(buildRenderBody(pose, "panorama", false, SIZES));
      times.push(performance.now() - start);
      expect(Array.from(res.bytes.slice(0, 4))).toEqual(PNG_MAGIC);
      if (res.renderMillis !== null) checked = res.renderMillis;
    }
    expect(checked).not.toBeNull(); // latency header present and exposed
    const laterFrames = times.slice(1); // first request pays warm-up costs
    const meanMs = laterFrames.reduce((a, b) => a + b, 0) / laterFrames.length;
    const fps = 1000 / meanMs;
    console.log(`live fps at 256x512: ${fps.toFixed(2)} (mean ${meanMs.toFixed(0)} ms)`);
    expect(fps).toBeGreaterThanOrEqual(2.0);
  }, 60_000);

  it("returns decodable millimeter depth for depth=true", async () => {
    const t = transport();
    const scene = await t.scene();
    const pose = { yaw: 0, pitch: 0, t: [0, 0, 0] as [number, number, number] };
    const res = await t.render(buildRenderBody(pose, "panorama", true, SIZES));
    const depth = await decodeDepthPng(res.bytes);
    expect(depth.width).toBe(512);
    expect(depth.height).toBe(256);
    const inRange = Array.from(depth.mm).filter(
      (v) => v >= scene.near * 1000 * 0.5 && v <= scene.far * 1000 * 1.5,
    ).length;
    expect(inRange / depth.mm.length).toBeGreaterThan(0.5);
  }, 30_000);

  it("rejects a pose outside the near cube with 422", async () => {
    const t = transport();
    const scene = await t.scene();
    const pose = {
      yaw: 0,
      pitch: 0,
      t: [scene.near * 2, 0, 0] as [number, number, number],
    };
    await expect(
      t.render(buildRenderBody(pose, "panorama", false, SIZES)),
    ).rejects.toSatisfy(
      (e: unknown) => e instanceof TransportError && e.kind === "rejected",
    );
  });

  it("drives a full session end to end", async () => {
    const s = new ViewerSession(transport(), SIZES);
    await s.connect();
    await waitIdle(s);
    expect(s.state.displayed).not.toBeNull();
    s.input({ kind: "move", forward: 1, right: 0, up: 0 });
    s.input({ kind: "toggle-depth" });
    await waitIdle(s);
    expect(s.state.displayed!.depth).toBe(true);
    expect(s.state.displayed!.pose).toEqual(s.state.pose);
    expect(s.state.banner).toBe("none");
  }, 30_000);
});

async function waitIdle(s: ViewerSession, timeoutMs = 20_000): Promise<void> {
  const start = Date.now();
  while (s.state.inFlight !== null || s.state.dirty) {
    if (Date.now() - start > timeoutMs) throw new Error("session never settled");
    await new Promise((r) => setTimeout(r, 25));
  }
}
