/** HTTP transport for the frame service (fetch-based, browser and Node). */

import {
  TransportError,
  type FrameResponse,
  type RenderRequestBody,
  type SceneInfo,
  type Transport,
} from "./types.js";

export class HttpTransport implements Transport {
  constructor(private readonly baseUrl: string) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  async scene(): Promise<SceneInfo> {
    const r = await this.fetch("/scene", { method: "GET" });
    const doc = await r.json();
    for (const key of ["near", "far", "w", "d"]) {
      if (typeof doc[key] !== "number" || !isFinite(doc[key])) {
        throw new TransportError("network", `/scene returned bad ${key}`, r.status);
      }
    }
    return {
      near: doc.near,
      far: doc.far,
      w: doc.w,
      d: doc.d,
      referenceThumbnail: doc.reference_thumbnail ?? null,
    };
  }

  async render(body: RenderRequestBody): Promise<FrameResponse> {
    const r = await this.fetch("/render", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    const millis = r.headers.get("X-Render-Millis");
    return {
      bytes: new Uint8Array(await r.arrayBuffer()),
      renderMillis: millis === null ? null : parseFloat(millis),
    };
  }

  private async fetch(path: string, init: RequestInit): Promise<Response> {
    let r: Response;
    try {
      r = await fetch(this.baseUrl + path, init);
    } catch (e) {
      throw new TransportError("network", `fetch failed: ${e}`);
    }
    if (r.ok) return r;
    const detail = await r.text().catch(() => "");
    if (r.status === 422) throw new TransportError("rejected", detail, 422);
    if (r.status === 503) throw new TransportError("unavailable", detail, 503);
    throw new TransportError("network", `HTTP ${r.status}: ${detail}`, r.status);
  }
}
