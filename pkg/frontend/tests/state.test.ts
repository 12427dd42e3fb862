import { describe, expect, it } from "vitest";

import { quatFromYawPitch, rotate } from "../src/quat.js";
import {
  DEFAULT_STEP_METERS,
  initialState,
  reduce,
  type Action,
  type ViewerState,
} from "../src/state.js";
import { MOCK_SCENE } from "./mock.js";

function connected(): ViewerState {
  return reduce(initialState(), { kind: "connected", scene: MOCK_SCENE });
}

function run(state: ViewerState, ...actions: Action[]): ViewerState {
  return actions.reduce(reduce, state);
}

describe("movement", () => {
  it("starts at the origin with the default step", () => {
    const s = connected();
    expect(s.pose).toEqual({ yaw: 0, pitch: 0, t: [0, 0, 0] });
    expect(s.stepMeters).toBe(DEFAULT_STEP_METERS);
    expect(s.dirty).toBe(true);
  });

  it("forward at yaw 0 moves the camera along +z (t goes negative)", () => {
    const s = run(connected(), { kind: "move", forward: 1, right: 0, up: 0 });
    expect(s.pose.t[0]).toBeCloseTo(0, 12);
    expect(s.pose.t[2]).toBeCloseTo(-DEFAULT_STEP_METERS, 12);
  });

  it("forward follows the yaw direction", () => {
    const quarter = Math.PI / 2; // facing +x
    const s = run(
      connected(),
      { kind: "look", dyaw: quarter, dpitch: 0 },
      { kind: "move", forward: 1, right: 0, up: 0 },
    );
    expect(s.pose.t[0]).toBeCloseTo(-DEFAULT_STEP_METERS, 12);
    expect(s.pose.t[2]).toBeCloseTo(0, 12);
  });

  it("up moves against the world y axis (y points down)", () => {
    const s = run(connected(), { kind: "move", forward: 0, right: 0, up: 1 });
    // center moves to -y, so t moves to +y
    expect(s.pose.t[1]).toBeCloseTo(DEFAULT_STEP_METERS, 12);
  });

  it("is ignored before the scene arrives", () => {
    const s = run(initialState(), { kind: "move", forward: 1, right: 0, up: 0 });
    expect(s.pose.t).toEqual([0, 0, 0]);
    expect(s.dirty).toBe(false);
  });
});

describe("near-cube clamping", () => {
  it("clamps every axis strictly inside near and flags the wall", () => {
    let s = connected();
    const before = s.wallFlash;
    for (let i = 0; i < 100; i++) {
      s = reduce(s, { kind: "move", forward: 1, right: 0, up: 0 });
    }
    expect(Math.abs(s.pose.t[2])).toBeLessThan(MOCK_SCENE.near);
    expect(Math.abs(s.pose.t[2])).toBeGreaterThan(MOCK_SCENE.near * 0.99);
    expect(s.wallFlash).toBeGreaterThan(before);
  });

  it("pushing into the wall does not mark the state dirty", () => {
    let s = connected();
    for (let i = 0; i < 100; i++) {
      s = reduce(s, { kind: "move", forward: 1, right: 0, up: 0 });
    }
    s = reduce(s, { kind: "request-started", id: 1 });
    const pinned = reduce(s, { kind: "move", forward: 1, right: 0, up: 0 });
    expect(pinned.pose).toEqual(s.pose);
    expect(pinned.dirty).toBe(false);
    expect(pinned.wallFlash).toBe(s.wallFlash + 1);
  });
});

describe("look", () => {
  it("wraps yaw and clamps pitch", () => {
    const s = run(
      connected(),
      { kind: "look", dyaw: 2 * Math.PI + 0.25, dpitch: 3.0 },
    );
    expect(s.pose.yaw).toBeCloseTo(0.25, 12);
    expect(s.pose.pitch).toBeLessThan(Math.PI / 2);
  });
});

describe("yaw/pitch quaternion", () => {
  it("identity pose gives the exact identity quaternion", () => {
    expect(quatFromYawPitch(0, 0)).toEqual([1, 0, 0, 0]);
  });

  it("yaw 90 degrees turns +z into +x", () => {
    const q = quatFromYawPitch(Math.PI / 2, 0);
    const v = rotate(q, [0, 0, 1]);
    expect(v[0]).toBeCloseTo(1, 12);
    expect(v[1]).toBeCloseTo(0, 12);
    expect(v[2]).toBeCloseTo(0, 12);
  });

  it("positive pitch looks up (y is down)", () => {
    const q = quatFromYawPitch(0, Math.PI / 4);
    const v = rotate(q, [0, 0, 1]);
    expect(v[1]).toBeLessThan(0);
    expect(v[2]).toBeCloseTo(Math.SQRT1_2, 12);
  });

  it("stays unit-norm for arbitrary angles", () => {
    for (const [yaw, pitch] of [[0.3, -0.8], [-2.9, 1.2], [3.1, 0.0]]) {
      const q = quatFromYawPitch(yaw, pitch);
      const n = Math.hypot(...q);
      expect(n).toBeCloseTo(1, 12);
    }
  });
});

describe("bookkeeping", () => {
  it("frame responses for stale request ids are dropped", () => {
    let s = run(connected(), { kind: "request-started", id: 1 });
    s = reduce(s, {
      kind: "frame",
      id: 99,
      pose: s.pose,
      mode: "panorama",
      depth: false,
      bytes: new Uint8Array(),
      renderMillis: null,
      roundTripMillis: 1,
    });
    expect(s.displayed).toBeNull();
    expect(s.inFlight).toBe(1);
  });

  it("step size is configurable and clamped to a sane range", () => {
    let s = reduce(connected(), { kind: "set-step", meters: 0.25 });
    expect(s.stepMeters).toBe(0.25);
    s = reduce(s, { kind: "set-step", meters: 1e9 });
    expect(s.stepMeters).toBe(1.0);
  });
});
