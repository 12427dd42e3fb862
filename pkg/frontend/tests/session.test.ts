import { describe, expect, it } from "vitest";

import { ViewerSession } from "../src/session.js";
import { flush, ManualTimer, MockTransport, MOCK_SCENE } from "./mock.js";

async function connected(opts: Parameters<typeof session>[1] = {}) {
  return session(new MockTransport(), opts);
}

async function session(
  transport: MockTransport,
  opts: ConstructorParameters<typeof ViewerSession>[1] = {},
) {
  const s = new ViewerSession(transport, opts);
  await s.connect();
  await flush();
  return { s, transport };
}

describe("request lifecycle", () => {
  it("makes exactly one initial request when there is no input", async () => {
    const { s, transport } = await connected();
    expect(transport.calls.length).toBe(1);
    transport.resolveNext();
    await flush();
    expect(transport.calls.length).toBe(1);
    expect(transport.pendingCount).toBe(0);
    expect(s.state.displayed).not.toBeNull();
    expect(s.state.displayed!.pose).toEqual({ yaw: 0, pitch: 0, t: [0, 0, 0] });
  });

  it("keeps at most one request in flight under a 50-event burst", async () => {
    const { s, transport } = await connected();
    for (let i = 0; i < 50; i++) {
      if (i % 3 === 2) s.input({ kind: "look", dyaw: 0.01, dpitch: 0.002 });
      else s.input({ kind: "move", forward: i % 2 ? 1 : -1, right: 1, up: 0 });
    }
    // the burst coalesced: still only the initial request
    expect(transport.calls.length).toBe(1);
    expect(transport.maxInFlight).toBe(1);

    transport.resolveNext();
    await flush();
    // one follow-up carrying the final pose, not 50 replays
    expect(transport.calls.length).toBe(2);
    expect(transport.maxInFlight).toBe(1);
    const followUp = transport.calls[1];
    expect(followUp.pose.translation).toEqual(s.state.pose.t);

    transport.resolveNext();
    await flush();
    expect(transport.calls.length).toBe(2);
    expect(transport.maxInFlight).toBe(1);
  });

  it("renders queued input that arrived during the initial request", async () => {
    const { s, transport } = await connected();
    s.input({ kind: "move", forward: 1, right: 0, up: 0 });
    s.input({ kind: "move", forward: 1, right: 0, up: 0 });
    transport.resolveNext();
    await flush();
    transport.resolveNext();
    await flush();
    expect(transport.calls.length).toBe(2);
    expect(s.state.displayed!.pose.t[2]).toBeCloseTo(-0.1, 12);
    expect(s.state.pose).toEqual(s.state.displayed!.pose);
  });
});

describe("HUD pose consistency", () => {
  it("displayed pose always matches the frame's request, never the target", async () => {
    const { s, transport } = await connected();
    transport.resolveNext();
    await flush();

    s.input({ kind: "move", forward: 1, right: 0, up: 0 }); // -> request 2 (pose A)
    await flush();
    s.input({ kind: "move", forward: 1, right: 0, up: 0 }); // newer pose B, coalesced
    const poseA = transport.calls[1].pose.translation;
    const poseB = [...s.state.pose.t];
    expect(poseA).not.toEqual(poseB);

    // while request 2 is in flight the screen still shows the origin frame
    expect(s.state.displayed!.pose.t).toEqual([0, 0, 0]);

    transport.resolveNext();
    await flush();
    // frame 2 landed: HUD shows pose A even though the user wants pose B
    expect(s.state.displayed!.pose.t).toEqual(poseA);
    expect(s.state.pose.t).toEqual(poseB);

    transport.resolveNext();
    await flush();
    expect(s.state.displayed!.pose.t).toEqual(poseB);
    expect(s.state.pose.t).toEqual(poseB);
    expect(transport.calls.length).toBe(3);
  });

  it("records latency from the response header", async () => {
    const { s, transport } = await connected();
    transport.resolveNext(42.5);
    await flush();
    expect(s.state.displayed!.renderMillis).toBe(42.5);
    expect(s.state.displayed!.roundTripMillis).toBeGreaterThanOrEqual(0);
  });
});

describe("request bodies", () => {
  it("initial request is the golden panorama body", async () => {
    const { transport } = await connected();
    expect(transport.calls[0]).toEqual({
      pose: { rotation: [1, 0, 0, 0], translation: [0, 0, 0] },
      output: "panorama",
      fov: 90,
      width: 512,
      height: 256,
      depth: false,
    });
  });

  it("depth toggle requests depth=true and keeps everything else", async () => {
    const { s, transport } = await connected();
    transport.resolveNext();
    await flush();
    s.input({ kind: "toggle-depth" });
    await flush();
    expect(transport.calls.length).toBe(2);
    expect(transport.calls[1]).toEqual({
      pose: { rotation: [1, 0, 0, 0], translation: [0, 0, 0] },
      output: "panorama",
      fov: 90,
      width: 512,
      height: 256,
      depth: true,
    });
    transport.resolveNext();
    await flush();
    expect(s.state.displayed!.depth).toBe(true);
  });

  it("perspective mode sends square frames with the configured fov", async () => {
    const { s, transport } = await session(new MockTransport(), {
      perspectiveSide: 200,
      fov: 75,
    });
    transport.resolveNext();
    await flush();
    s.input({ kind: "set-mode", mode: "perspective" });
    await flush();
    expect(transport.calls[1].output).toBe("perspective");
    expect(transport.calls[1].width).toBe(200);
    expect(transport.calls[1].height).toBe(200);
    expect(transport.calls[1].fov).toBe(75);
  });

  it("pano height is configurable, width locked to 2x", async () => {
    const { transport } = await session(new MockTransport(), { panoHeight: 128 });
    expect(transport.calls[0].height).toBe(128);
    expect(transport.calls[0].width).toBe(256);
  });
});

describe("failure handling", () => {
  it("422 rolls the pose back to the displayed frame and flashes the wall", async () => {
    const { s, transport } = await connected();
    transport.resolveNext();
    await flush();
    s.input({ kind: "move", forward: 1, right: 0, up: 0 });
    await flush();
    const flashes = s.state.wallFlash;
    transport.rejectNext("rejected");
    await flush();
    expect(s.state.pose).toEqual(s.state.displayed!.pose);
    expect(s.state.wallFlash).toBe(flashes + 1);
    expect(s.state.banner).toBe("none");
    // rolled back, nothing newer to render
    expect(transport.pendingCount).toBe(0);
    expect(transport.calls.length).toBe(2);
  });

  it("422 keeps newer input that arrived while the bad request flew", async () => {
    const { s, transport } = await connected();
    transport.resolveNext();
    await flush();
    s.input({ kind: "move", forward: 1, right: 0, up: 0 });
    await flush();
    s.input({ kind: "move", forward: 1, right: 0, up: 0 }); // newer, coalesced
    const newer = [...s.state.pose.t];
    transport.rejectNext("rejected");
    await flush();
    // the newer pose is not clobbered by the rollback and gets rendered
    expect(s.state.pose.t).toEqual(newer);
    expect(transport.calls.length).toBe(3);
    expect(transport.calls[2].pose.translation).toEqual(newer);
  });

  it("network failure shows the reconnect banner and retries on the timer", async () => {
    const timer = new ManualTimer();
    const { s, transport } = await session(new MockTransport(), {
      schedule: timer.schedule,
      reconnectDelayMs: 250,
    });
    transport.rejectNext("network");
    await flush();
    expect(s.state.banner).toBe("reconnecting");
    expect(timer.scheduled.length).toBe(1);
    expect(timer.scheduled[0].ms).toBe(250);
    expect(transport.calls.length).toBe(1);

    timer.fire();
    await flush();
    expect(transport.calls.length).toBe(2);
    transport.resolveNext();
    await flush();
    expect(s.state.banner).toBe("none");
    expect(s.state.displayed).not.toBeNull();
  });

  it("503 also goes through the reconnect path", async () => {
    const timer = new ManualTimer();
    const { s, transport } = await session(new MockTransport(), {
      schedule: timer.schedule,
    });
    transport.rejectNext("unavailable");
    await flush();
    expect(s.state.banner).toBe("reconnecting");
    expect(timer.scheduled.length).toBe(1);
  });
});

describe("scene handshake", () => {
  it("connect exposes the field metadata", async () => {
    const { s } = await connected();
    expect(s.state.scene).toEqual(MOCK_SCENE);
  });
});
