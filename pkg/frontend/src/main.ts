/** DOM wiring: canvas, keyboard/mouse input, HUD, banners.
 *
 * All interaction logic lives in the session; this file only translates
 * browser events into inputs and paints whatever the state says.
 */

import { ViewerSession } from "./session.js";
import { HttpTransport } from "./transport.js";
import { decodeDepthPng } from "./png16.js";
import { depthToRgba } from "./heatmap.js";
import type { ViewerState } from "./state.js";

const LOOK_RADIANS_PER_PX = 0.0035;

function el<T extends HTMLElement>(id: string): T {
  const e = document.getElementById(id);
  if (!e) throw new Error(`missing element #${id}`);
  return e as T;
}

function serviceUrl(): string {
  const q = new URLSearchParams(location.search).get("service");
  return q ?? "http://127.0.0.1:8000";
}

function deg(r: number): string {
  return ((r * 180) / Math.PI).toFixed(1);
}

async function start(): Promise<void> {
  const canvas = el<HTMLCanvasElement>("frame");
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("no 2d context");
  const hud = el<HTMLDivElement>("hud");
  const banner = el<HTMLDivElement>("banner");
  const wall = el<HTMLDivElement>("wall");
  const thumb = el<HTMLImageElement>("thumb");

  const session = new ViewerSession(new HttpTransport(serviceUrl()));

  let drawnSeq = -1;
  let wallSeen = 0;
  let lastColor: { bitmap: ImageBitmap; poseKey: string } | null = null;

  const poseKey = (s: ViewerState) =>
    s.displayed ? JSON.stringify(s.displayed.pose) : "";

  async function draw(state: ViewerState): Promise<void> {
    const frame = state.displayed;
    if (!frame || frame.seq <= drawnSeq) return;
    drawnSeq = frame.seq;
    const blob = new Blob([frame.bytes as BlobPart], { type: "image/png" });
    if (!frame.depth) {
      const bitmap = await createImageBitmap(blob);
      canvas.width = bitmap.width;
      canvas.height = bitmap.height;
      ctx!.drawImage(bitmap, 0, 0);
      lastColor = { bitmap, poseKey: JSON.stringify(frame.pose) };
      return;
    }
    const depth = await decodeDepthPng(frame.bytes);
    const scene = state.scene!;
    const rgba = depthToRgba(depth, scene.near, scene.far);
    const img = new ImageData(rgba, depth.width, depth.height);
    canvas.width = depth.width;
    canvas.height = depth.height;
    // overlay on the last color frame when it shows the same pose
    if (lastColor && lastColor.poseKey === JSON.stringify(frame.pose)) {
      ctx!.drawImage(lastColor.bitmap, 0, 0, canvas.width, canvas.height);
      const tmp = new OffscreenCanvas(depth.width, depth.height);
      tmp.getContext("2d")!.putImageData(img, 0, 0);
      ctx!.globalAlpha = 0.65;
      ctx!.drawImage(tmp, 0, 0);
      ctx!.globalAlpha = 1.0;
    } else {
      ctx!.putImageData(img, 0, 0);
    }
  }

  function paintHud(state: ViewerState): void {
    const f = state.displayed;
    if (!f) {
      hud.textContent = "connecting...";
      return;
    }
    // HUD reports the pose of the frame on screen, never the target pose
    const c = f.pose.t.map((v) => (-v).toFixed(3)).join(", ");
    const lat =
      f.renderMillis === null
        ? `${f.roundTripMillis.toFixed(0)} ms round trip`
        : `${f.renderMillis.toFixed(0)} ms render / ${f.roundTripMillis.toFixed(0)} ms round trip`;
    const scene = state.scene!;
    hud.innerHTML = [
      `pos (${c}) m`,
      `yaw ${deg(f.pose.yaw)}&deg; pitch ${deg(f.pose.pitch)}&deg;`,
      `${f.mode}${f.depth ? " + depth" : ""} | step ${state.stepMeters.toFixed(3)} m`,
      lat,
      `field w=${scene.w} d=${scene.d} near=${scene.near} far=${scene.far}`,
      state.inFlight !== null ? "rendering..." : "",
    ].join("<br>");
  }

  session.onChange((state) => {
    banner.style.display = state.banner === "reconnecting" ? "block" : "none";
    if (state.wallFlash !== wallSeen) {
      wallSeen = state.wallFlash;
      wall.classList.remove("flash");
      void wall.offsetWidth; // restart the CSS animation
      wall.classList.add("flash");
    }
    paintHud(state);
    void draw(state);
  });

  window.addEventListener("keydown", (ev) => {
    if (ev.repeat && ev.key.startsWith("Arrow")) ev.preventDefault();
    const move = (forward: number, right: number, up: number) =>
      session.input({ kind: "move", forward, right, up });
    switch (ev.key.toLowerCase()) {
      case "w":
      case "arrowup":
        move(1, 0, 0);
        break;
      case "s":
      case "arrowdown":
        move(-1, 0, 0);
        break;
      case "a":
      case "arrowleft":
        move(0, -1, 0);
        break;
      case "d":
      case "arrowright":
        move(0, 1, 0);
        break;
      case "q":
        move(0, 0, 1);
        break;
      case "e":
        move(0, 0, -1);
        break;
      case "x":
        session.input({ kind: "toggle-depth" });
        break;
      case "m":
        session.input({
          kind: "set-mode",
          mode: session.state.mode === "panorama" ? "perspective" : "panorama",
        });
        break;
      case "+":
      case "=":
        session.input({ kind: "set-step", meters: session.state.stepMeters * 2 });
        break;
      case "-":
        session.input({ kind: "set-step", meters: session.state.stepMeters / 2 });
        break;
      default:
        return;
    }
    ev.preventDefault();
  });

  let dragging = false;
  canvas.addEventListener("pointerdown", (ev) => {
    dragging = true;
    canvas.setPointerCapture(ev.pointerId);
  });
  canvas.addEventListener("pointerup", () => (dragging = false));
  canvas.addEventListener("pointermove", (ev) => {
    if (!dragging) return;
    session.input({
      kind: "look",
      dyaw: ev.movementX * LOOK_RADIANS_PER_PX,
      dpitch: ev.movementY * LOOK_RADIANS_PER_PX,
    });
  });

  try {
    await session.connect();
  } catch (e) {
    banner.style.display = "block";
    banner.textContent = `cannot reach ${serviceUrl()} - ${e}`;
    return;
  }
  const t = session.state.scene?.referenceThumbnail;
  if (t) {
    thumb.src = `data:image/png;base64,${t}`;
    thumb.style.display = "block";
  }
}

void start();
