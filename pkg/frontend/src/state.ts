/** Viewer state and its reducer.
 *
 * Every event, user input and network callback alike, flows through
 * reduce(), so the session stays consistent on the single UI thread.  The
 * HUD must read the pose from state.displayed, which carries the exact pose
 * each frame was requested with; state.pose is the newer pose the user is
 * steering toward and may be several inputs ahead of the screen.
 */

import type { CamPose, Mode, SceneInfo } from "./types.js";

export interface DisplayedFrame {
  pose: CamPose;
  mode: Mode;
  /** true when bytes hold a 16-bit depth PNG instead of a color frame */
  depth: boolean;
  bytes: Uint8Array;
  renderMillis: number | null;
  roundTripMillis: number;
  seq: number;
}

export type Banner = "none" | "reconnecting";

export interface ViewerState {
  scene: SceneInfo | null;
  pose: CamPose;
  mode: Mode;
  depthOverlay: boolean;
  stepMeters: number;
  /** id of the one in-flight render request, or null */
  inFlight: number | null;
  /** pose/mode/overlay changed since the in-flight request was built */
  dirty: boolean;
  displayed: DisplayedFrame | null;
  banner: Banner;
  /** increments whenever the near-cube wall is hit (clamp or 422) */
  wallFlash: number;
}

export type Action =
  | { kind: "connected"; scene: SceneInfo }
  | { kind: "move"; forward: number; right: number; up: number }
  | { kind: "look"; dyaw: number; dpitch: number }
  | { kind: "set-mode"; mode: Mode }
  | { kind: "toggle-depth" }
  | { kind: "set-step"; meters: number }
  | { kind: "request-started"; id: number }
  | {
      kind: "frame";
      id: number;
      pose: CamPose;
      mode: Mode;
      depth: boolean;
      bytes: Uint8Array;
      renderMillis: number | null;
      roundTripMillis: number;
    }
  | { kind: "rejected"; id: number }
  | { kind: "disconnected"; id: number }
  | { kind: "retry" };

export const ORIGIN_POSE: CamPose = { yaw: 0, pitch: 0, t: [0, 0, 0] };

export const DEFAULT_STEP_METERS = 0.05;

/* the camera must stay strictly inside the near cube */
const CLAMP_FRACTION = 1e-3;
const PITCH_LIMIT = Math.PI / 2 - 0.01;

export function initialState(stepMeters = DEFAULT_STEP_METERS): ViewerState {
  return {
    scene: null,
    pose: ORIGIN_POSE,
    mode: "panorama",
    depthOverlay: false,
    stepMeters,
    inFlight: null,
    dirty: false,
    displayed: null,
    banner: "none",
    wallFlash: 0,
  };
}

function samePose(a: CamPose, b: CamPose): boolean {
  return (
    a.yaw === b.yaw &&
    a.pitch === b.pitch &&
    a.t[0] === b.t[0] &&
    a.t[1] === b.t[1] &&
    a.t[2] === b.t[2]
  );
}

function wrapAngle(a: number): number {
  const tau = 2 * Math.PI;
  a = a % tau;
  if (a > Math.PI) a -= tau;
  if (a <= -Math.PI) a += tau;
  return a;
}

export function reduce(state: ViewerState, action: Action): ViewerState {
  switch (action.kind) {
    case "connected":
      return { ...state, scene: action.scene, pose: ORIGIN_POSE, dirty: true };

    case "move": {
      if (!state.scene) return state;
      const { yaw } = state.pose;
      const s = state.stepMeters;
      // ground-plane forward/right from yaw; up is -y (y points down)
      const dx = s * (action.forward * Math.sin(yaw) + action.right * Math.cos(yaw));
      const dz = s * (action.forward * Math.cos(yaw) - action.right * Math.sin(yaw));
      const dy = s * -action.up;
      // the camera center is -t, so moving the center by d moves t by -d
      const limit = state.scene.near * (1 - CLAMP_FRACTION);
      const want: [number, number, number] = [
        state.pose.t[0] - dx,
        state.pose.t[1] - dy,
        state.pose.t[2] - dz,
      ];
      let hitWall = false;
      const t = want.map((v) => {
        const c = Math.max(-limit, Math.min(limit, v));
        if (c !== v) hitWall = true;
        return c;
      }) as [number, number, number];
      const pose = { ...state.pose, t };
      const moved = !samePose(pose, state.pose);
      return {
        ...state,
        pose: moved ? pose : state.pose,
        dirty: state.dirty || moved,
        wallFlash: hitWall ? state.wallFlash + 1 : state.wallFlash,
      };
    }

    case "look": {
      const yaw = wrapAngle(state.pose.yaw + action.dyaw);
      const pitch = Math.max(
        -PITCH_LIMIT,
        Math.min(PITCH_LIMIT, state.pose.pitch + action.dpitch),
      );
      const pose = { ...state.pose, yaw, pitch };
      if (samePose(pose, state.pose)) return state;
      return { ...state, pose, dirty: true };
    }

    case "set-mode":
      if (action.mode === state.mode) return state;
      return { ...state, mode: action.mode, dirty: true };

    case "toggle-depth":
      return { ...state, depthOverlay: !state.depthOverlay, dirty: true };

    case "set-step": {
      const meters = Math.max(0.001, Math.min(1.0, action.meters));
      return { ...state, stepMeters: meters };
    }

    case "request-started":
      return { ...state, inFlight: action.id, dirty: false };

    case "frame": {
      if (action.id !== state.inFlight) return state;
      const displayed: DisplayedFrame = {
        pose: action.pose,
        mode: action.mode,
        depth: action.depth,
        bytes: action.bytes,
        renderMillis: action.renderMillis,
        roundTripMillis: action.roundTripMillis,
        seq: action.id,
      };
      return { ...state, inFlight: null, displayed, banner: "none" };
    }

    case "rejected": {
      if (action.id !== state.inFlight) return state;
      // the service refused the pose; fall back to the last good one unless
      // the user already steered somewhere newer
      const pose = state.dirty
        ? state.pose
        : state.displayed
          ? state.displayed.pose
          : ORIGIN_POSE;
      return {
        ...state,
        inFlight: null,
        pose,
        wallFlash: state.wallFlash + 1,
      };
    }

    case "disconnected":
      if (action.id !== state.inFlight) return state;
      // not dirty: the retry timer (or fresh input) re-renders, so a dead
      // server is not hammered in a tight loop
      return { ...state, inFlight: null, banner: "reconnecting", dirty: false };

    case "retry":
      return { ...state, dirty: true };
  }
}
