/** Wire types shared by the session core and the transports. */

/** Metadata returned by GET /scene. */
export interface SceneInfo {
  near: number;
  far: number;
  w: number;
  d: number;
  /** base64 PNG of the reference view, or null if the server omits it */
  referenceThumbnail: string | null;
}

export type Mode = "panorama" | "perspective";

/** Camera the user steers: look angles plus the pose translation. */
export interface CamPose {
  /** radians about the world y (down) axis; positive turns right */
  yaw: number;
  /** radians about the camera x axis; positive looks up */
  pitch: number;
  /** pose translation t in meters; the camera center sits at -t */
  t: [number, number, number];
}

/** JSON body for POST /render, field by field what the service expects. */
export interface RenderRequestBody {
  pose: {
    rotation: [number, number, number, number];
    translation: [number, number, number];
  };
  output: Mode;
  fov: number;
  width: number;
  height: number;
  depth: boolean;
}

export interface FrameResponse {
  /** encoded PNG: 8-bit color, or 16-bit millimeter depth when requested */
  bytes: Uint8Array;
  /** server-side render time from the X-Render-Millis header */
  renderMillis: number | null;
}

export type TransportErrorKind =
  /** 422: the service understood the request and refused it (bad pose) */
  | "rejected"
  /** 503: service reachable but has no field loaded */
  | "unavailable"
  /** fetch failure or unexpected status */
  | "network";

export class TransportError extends Error {
  constructor(
    readonly kind: TransportErrorKind,
    message: string,
    readonly status?: number,
  ) {
    super(message);
    this.name = "TransportError";
  }
}

/** The only thing the viewer knows about the outside world. */
export interface Transport {
  scene(): Promise<SceneInfo>;
  render(body: RenderRequestBody): Promise<FrameResponse>;
}
