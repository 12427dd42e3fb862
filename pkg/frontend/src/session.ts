/** Session driver: owns the state, talks to a Transport, coalesces requests.
 *
 * At most one render request is ever in flight.  Input arriving while a
 * request is pending only marks the state dirty; when the response lands the
 * newest pose is rendered next (latest-wins).  Rejected poses (HTTP 422)
 * roll the camera back to the displayed frame's pose; network failures put
 * up the reconnect banner and retry on a timer.
 */

import {
  initialState,
  reduce,
  type Action,
  type ViewerState,
} from "./state.js";
import { quatFromYawPitch } from "./quat.js";
import {
  TransportError,
  type CamPose,
  type Mode,
  type RenderRequestBody,
  type Transport,
} from "./types.js";

export interface SessionOptions {
  /** panorama frame height; width is always 2x (default 256) */
  panoHeight?: number;
  /** perspective frames are square with this side (default 256) */
  perspectiveSide?: number;
  /** horizontal field of view for perspective mode, degrees */
  fov?: number;
  /** keyboard translation step in meters */
  stepMeters?: number;
  /** delay before retrying after a network failure */
  reconnectDelayMs?: number;
  /** injectable timer, for tests */
  schedule?: (fn: () => void, ms: number) => void;
  /** injectable clock in milliseconds, for tests */
  now?: () => number;
}

export type InputAction = Extract<
  Action,
  { kind: "move" | "look" | "set-mode" | "toggle-depth" | "set-step" }
>;

export function buildRenderBody(
  pose: CamPose,
  mode: Mode,
  depth: boolean,
  opts: Required<Pick<SessionOptions, "panoHeight" | "perspectiveSide" | "fov">>,
): RenderRequestBody {
  const height = mode === "panorama" ? opts.panoHeight : opts.perspectiveSide;
  const width = mode === "panorama" ? 2 * height : opts.perspectiveSide;
  return {
    pose: {
      rotation: quatFromYawPitch(pose.yaw, pose.pitch),
      translation: [pose.t[0], pose.t[1], pose.t[2]],
    },
    output: mode,
    fov: opts.fov,
    width,
    height,
    depth,
  };
}

export class ViewerSession {
  state: ViewerState;

  private readonly transport: Transport;
  private readonly panoHeight: number;
  private readonly perspectiveSide: number;
  private readonly fov: number;
  private readonly reconnectDelayMs: number;
  private readonly schedule: (fn: () => void, ms: number) => void;
  private readonly now: () => number;
  private readonly listeners = new Set<(s: ViewerState) => void>();
  private nextId = 1;

  constructor(transport: Transport, opts: SessionOptions = {}) {
    this.transport = transport;
    this.panoHeight = opts.panoHeight ?? 256;
    this.perspectiveSide = opts.perspectiveSide ?? 256;
    this.fov = opts.fov ?? 90;
    this.reconnectDelayMs = opts.reconnectDelayMs ?? 1000;
    this.schedule = opts.schedule ?? ((fn, ms) => setTimeout(fn, ms));
    this.now = opts.now ?? (() => Date.now());
    this.state = initialState(opts.stepMeters);
  }

  /** Fetch /scene and request the first frame (origin pose). */
  async connect(): Promise<void> {
    const scene = await this.transport.scene();
    this.apply({ kind: "connected", scene });
  }

  input(action: InputAction): void {
    this.apply(action);
  }

  onChange(listener: (s: ViewerState) => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private apply(action: Action): void {
    this.state = reduce(this.state, action);
    for (const l of this.listeners) l(this.state);
    this.pump();
  }

  /** Start a request iff none is in flight and the state wants one. */
  private pump(): void {
    const s = this.state;
    if (!s.scene || s.inFlight !== null || !s.dirty) return;
    const id = this.nextId++;
    const pose = s.pose;
    const mode = s.mode;
    const depth = s.depthOverlay;
    const body = buildRenderBody(pose, mode, depth, {
      panoHeight: this.panoHeight,
      perspectiveSide: this.perspectiveSide,
      fov: this.fov,
    });
    this.apply({ kind: "request-started", id });
    const started = this.now();
    this.transport.render(body).then(
      (res) =>
        this.apply({
          kind: "frame",
          id,
          pose,
          mode,
          depth,
          bytes: res.bytes,
          renderMillis: res.renderMillis,
          roundTripMillis: this.now() - started,
        }),
      (err) => {
        if (err instanceof TransportError && err.kind === "rejected") {
          this.apply({ kind: "rejected", id });
        } else {
          this.apply({ kind: "disconnected", id });
          this.schedule(() => this.apply({ kind: "retry" }), this.reconnectDelayMs);
        }
      },
    );
  }
}
