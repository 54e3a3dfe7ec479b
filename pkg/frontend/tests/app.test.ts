import { describe, expect, it } from "vitest";

import { ApiClient, type FetchLike } from "../src/api.js";
import { createApp, type App } from "../src/app.js";
import { fromDevicePixel, toDevicePixel } from "../src/geometry.js";
import type { Context2dLike } from "../src/render.js";
import type { Keypoint } from "../src/types.js";

const CSS = 320; // the app's canvas surface size in CSS pixels

function tinyPpmBase64(shade: number): string {
  const header = new TextEncoder().encode("P6\n2 2\n255\n");
  const bytes = new Uint8Array(header.length + 12);
  bytes.set(header, 0);
  bytes.fill(shade & 0xff, header.length);
  return Buffer.from(bytes).toString("base64");
}

interface Routed {
  status: number;
  payload: unknown;
}

/** In-memory stand-in for the inference service, reachable via FetchLike. */
class FakeService {
  requests: Array<{ path: string; body: any }> = [];
  autoRespond = true;
  failNext: Routed | null = null;
  private seedCounter = 100;
  private pending: Array<() => void> = [];

  readonly manifest = {
    parts: ["body", "head", "beak", "tail", "wing"],
    classes: ["a red bird facing right", "a yellow bird facing left"],
    image_size: 32,
    models_loaded: ["bbox", "completion", "keypoint"],
  };

  impl: FetchLike = (url, init) => {
    const path = url.replace(/^https?:\/\/[^/]*/, "");
    const body = init?.body ? JSON.parse(init.body) : undefined;
    if (path !== "/api/manifest") this.requests.push({ path, body });
    return new Promise((resolve) => {
      const respond = () => {
        const r = this.route(path, body);
        resolve({ status: r.status, json: () => Promise.resolve(r.payload) });
      };
      if (this.autoRespond || path === "/api/manifest") respond();
      else this.pending.push(respond);
    });
  };

  /** Answer every request held back while autoRespond was off, in order. */
  flush(): void {
    this.pending.splice(0).forEach((respond) => respond());
  }

  private route(path: string, body: any): Routed {
    if (path === "/api/manifest") return { status: 200, payload: this.manifest };
    if (this.failNext) {
      const r = this.failNext;
      this.failNext = null;
      return r;
    }
    if (path === "/api/complete-keypoints") {
      const observed: Keypoint[] = body.observed ?? [];
      const n = body.num_samples ?? 1;
      const sets = Array.from({ length: n }, (_, i) =>
        this.manifest.parts.map((part, j) => {
          const o = observed.find((k) => k.part === part);
          if (o) return { part, x: o.x, y: o.y, v: 1 };
          return { part, x: (0.15 + 0.1 * i + 0.05 * j) % 1, y: 0.6, v: 1 };
        }),
      );
      return {
        status: 200,
        payload: { keypoint_sets: sets, seed: body.seed ?? this.seedCounter++ },
      };
    }
    if (path === "/api/generate") {
      if (body.bbox && body.keypoints) {
        return {
          status: 400,
          payload: { error: "request must set only one of bbox and keypoints", field: "bbox" },
        };
      }
      const frames: number = body.interpolate ? body.interpolate.steps : body.num_samples ?? 1;
      return {
        status: 200,
        payload: {
          images: Array.from({ length: frames }, (_, i) => tinyPpmBase64(40 * i)),
          seed: body.seed ?? this.seedCounter++,
          steps: body.interpolate?.steps ?? 1,
        },
      };
    }
    return { status: 404, payload: { error: `no route ${path}`, field: null } };
  }
}

class RecordingContext implements Context2dLike {
  fillStyle = "";
  strokeStyle = "";
  lineWidth = 1;
  globalAlpha = 1;
  putImageDataCount = 0;
  arcCount = 0;
  clearRect(): void {}
  strokeRect(): void {}
  beginPath(): void {}
  arc(): void {
    this.arcCount++;
  }
  fill(): void {}
  stroke(): void {}
  putImageData(): void {
    this.putImageDataCount++;
  }
}

function makeRecorder() {
  const contexts = new Map<HTMLCanvasElement, RecordingContext>();
  return {
    contexts,
    factory: (canvas: HTMLCanvasElement): Context2dLike => {
      let ctx = contexts.get(canvas);
      if (!ctx) {
        ctx = new RecordingContext();
        contexts.set(canvas, ctx);
      }
      return ctx;
    },
  };
}

async function mount(opts: { dpr?: number; service?: FakeService } = {}) {
  const service = opts.service ?? new FakeService();
  const recorder = makeRecorder();
  const root = document.createElement("div");
  document.body.appendChild(root);
  const app = await createApp(root, {
    api: new ApiClient("", service.impl),
    dpr: opts.dpr ?? 2,
    getContext: recorder.factory,
  });
  const $ = <T extends HTMLElement>(id: string): T => {
    const el = root.querySelector(`#${id}`);
    if (!el) throw new Error(`missing #${id}`);
    return el as T;
  };
  return { app, root, service, recorder, $ };
}

function pointer(el: Element, type: string, clientX: number, clientY: number): void {
  el.dispatchEvent(new MouseEvent(type, { clientX, clientY, bubbles: true }));
}

function click(el: Element): void {
  el.dispatchEvent(new MouseEvent("click", { bubbles: true }));
}

function setInput(el: HTMLInputElement, value: string): void {
  el.value = value;
  el.dispatchEvent(new Event("input", { bubbles: true }));
}

function placePart(
  $: <T extends HTMLElement>(id: string) => T,
  part: string,
  x: number,
  y: number,
): void {
  $<HTMLSelectElement>("part-select").value = part;
  const canvas = $<HTMLCanvasElement>("canvas");
  pointer(canvas, "pointerdown", x * CSS, y * CSS);
  pointer(canvas, "pointerup", x * CSS, y * CSS);
}

describe("pose canvas session", () => {
  it("places two keypoints, completes poses, and interpolates three frames", async () => {
    const dpr = 2;
    const { app, root, service, recorder, $ } = await mount({ dpr });
    setInput($("caption"), "a red bird facing right");

    placePart($, "beak", 0.7, 0.44);
    placePart($, "body", 0.5, 0.5);
    expect(app.state.keypoints).toHaveLength(2);
    const beak = app.state.keypoints.find((k) => k.part === "beak")!;
    expect(beak.x).toBeCloseTo(0.7, 12);
    expect(beak.y).toBeCloseTo(0.44, 12);

    // normalization round trip stays within one device pixel
    for (const kp of app.state.keypoints) {
      for (const v of [kp.x, kp.y]) {
        const px = toDevicePixel(v, CSS, dpr);
        const back = fromDevicePixel(px, CSS, dpr);
        expect(Math.abs(back - v) * CSS * dpr).toBeLessThanOrEqual(1);
        expect(toDevicePixel(back, CSS, dpr)).toBe(px);
      }
    }

    // completion returns at least four poses, each echoing the observed parts
    click($("complete"));
    await app.whenIdle();
    expect(app.lastCompletions.length).toBeGreaterThanOrEqual(4);
    for (const set of app.lastCompletions) {
      const echoedBeak = set.find((k) => k.part === "beak")!;
      expect(echoedBeak.x).toBe(beak.x);
      expect(echoedBeak.y).toBe(beak.y);
      expect(echoedBeak.v).toBe(1);
      const echoedBody = set.find((k) => k.part === "body")!;
      expect(echoedBody.x).toBe(0.5);
      expect(echoedBody.y).toBe(0.5);
    }
    expect(app.state.ghosts.map((g) => g.part).sort()).toEqual(["head", "tail", "wing"]);

    // pin, drag the beak elsewhere (release reissues completion), pin again
    click($("pin"));
    const canvas = $<HTMLCanvasElement>("canvas");
    pointer(canvas, "pointerdown", 0.7 * CSS, 0.44 * CSS); // grabs the beak
    pointer(canvas, "pointermove", 0.2 * CSS, 0.3 * CSS);
    pointer(canvas, "pointerup", 0.2 * CSS, 0.3 * CSS);
    await app.whenIdle();
    const reissued = service.requests
      .filter((r) => r.path === "/api/complete-keypoints")
      .at(-1)!;
    const movedBeak = reissued.body.observed.find((k: Keypoint) => k.part === "beak");
    expect(movedBeak.x).toBeCloseTo(0.2, 12);
    expect(movedBeak.y).toBeCloseTo(0.3, 12);
    click($("pin"));
    expect(app.state.pins).toHaveLength(2);

    // three-step interpolation between the pinned poses renders every frame
    setInput($("steps"), "3");
    click($("interpolate"));
    await app.whenIdle();
    const interp = service.requests.filter((r) => r.path === "/api/generate").at(-1)!;
    expect(interp.body.interpolate.steps).toBe(3);
    expect(interp.body.interpolate.from_location.keypoints).toBeDefined();
    expect(interp.body.interpolate.to_location.keypoints).toBeDefined();
    expect(app.lastImages).toHaveLength(3);
    const cells = [...root.querySelectorAll("#samples canvas")] as HTMLCanvasElement[];
    expect(cells).toHaveLength(3);
    for (const cell of cells) {
      expect(recorder.contexts.get(cell)?.putImageDataCount).toBe(1);
    }
  });

  it("switches the main button to unconditional pose sampling when parts are cleared", async () => {
    const { app, service, $ } = await mount();
    setInput($("caption"), "a red bird facing right");
    placePart($, "beak", 0.6, 0.5);
    expect($("generate").dataset["action"]).toBe("generate");

    click($("clear"));
    expect(app.state.keypoints).toHaveLength(0);
    expect($("generate").dataset["action"]).toBe("unconditional-pose");

    click($("generate"));
    await app.whenIdle();
    const last = service.requests.at(-1)!;
    expect(last.path).toBe("/api/complete-keypoints");
    expect(last.body.observed).toEqual([]);
    expect(app.lastCompletions.length).toBeGreaterThanOrEqual(4);
  });

  it("preserves the caption across mode switches and generates from a dragged box", async () => {
    const { app, service, $ } = await mount();
    setInput($("caption"), "a yellow bird facing left");
    const modeBox = $<HTMLInputElement>("mode-bbox");
    modeBox.checked = true;
    modeBox.dispatchEvent(new Event("change", { bubbles: true }));
    expect(app.state.mode).toBe("bbox");
    expect($<HTMLInputElement>("caption").value).toBe("a yellow bird facing left");

    const canvas = $<HTMLCanvasElement>("canvas");
    pointer(canvas, "pointerdown", 0.1 * CSS, 0.2 * CSS);
    pointer(canvas, "pointermove", 0.5 * CSS, 0.6 * CSS);
    pointer(canvas, "pointerup", 0.5 * CSS, 0.6 * CSS);
    expect(app.state.bbox?.x0).toBeCloseTo(0.1, 12);
    expect(app.state.bbox?.w).toBeCloseTo(0.4, 12);

    click($("generate"));
    await app.whenIdle();
    const req = service.requests.at(-1)!;
    expect(req.path).toBe("/api/generate");
    expect(req.body.captions).toEqual(["a yellow bird facing left"]);
    expect(req.body.bbox.x0).toBeCloseTo(0.1, 12);
    expect(req.body.keypoints).toBeUndefined();
    expect(app.lastImages).toHaveLength(4);
  });

  it("shows service errors as field-prefixed messages and clears them on success", async () => {
    const { app, service, $ } = await mount();
    setInput($("caption"), "a red bird facing right");
    const modeBox = $<HTMLInputElement>("mode-bbox");
    modeBox.checked = true;
    modeBox.dispatchEvent(new Event("change", { bubbles: true }));
    const canvas = $<HTMLCanvasElement>("canvas");
    pointer(canvas, "pointerdown", 0.2 * CSS, 0.2 * CSS);
    pointer(canvas, "pointermove", 0.6 * CSS, 0.6 * CSS);
    pointer(canvas, "pointerup", 0.6 * CSS, 0.6 * CSS);

    service.failNext = {
      status: 409,
      payload: { error: "bbox generator not loaded", field: "bbox" },
    };
    click($("generate"));
    await app.whenIdle();
    expect($("error").textContent).toBe("bbox: bbox generator not loaded");

    click($("generate"));
    await app.whenIdle();
    expect($("error").textContent).toBe("");
  });

  it("applies only the newest completion when requests race", async () => {
    const { app, service, $ } = await mount();
    setInput($("caption"), "a red bird facing right");
    placePart($, "beak", 0.7, 0.4);

    service.autoRespond = false;
    click($("complete"));
    click($("complete"));
    expect(service.requests.filter((r) => r.path === "/api/complete-keypoints")).toHaveLength(2);
    service.flush();
    await app.whenIdle();

    // responses carried seeds 100 and 101; only the newest one sticks
    expect(app.state.lastSeed).toBe(101);
    expect($("error").textContent).toBe("");
  });

  it("sends the remembered seed when the fixed-seed toggle is on", async () => {
    const { app, service, $ } = await mount();
    setInput($("caption"), "a red bird facing right");
    placePart($, "beak", 0.7, 0.4);
    click($("complete"));
    await app.whenIdle();
    const seed = app.state.lastSeed;
    expect(seed).not.toBeNull();

    const toggle = $<HTMLInputElement>("fixed-seed");
    toggle.checked = true;
    toggle.dispatchEvent(new Event("change", { bubbles: true }));
    click($("complete"));
    await app.whenIdle();
    expect(service.requests.at(-1)!.body.seed).toBe(seed);
  });
});
