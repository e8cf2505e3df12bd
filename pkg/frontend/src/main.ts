/**
 * Landmark studio: drag the 68 landmarks over the caricature image, run
 * fits, and review the reprojection residuals and the 3D result.
 *
 * All numbers shown come from service responses; this file only wires DOM
 * events to the pure modules.
 */

import { ApiClient } from "./api.js";
import { colorOf } from "./landmarks.js";
import { MeshViewer } from "./meshview.js";
import { energyTrace, residualSegments } from "./overlay.js";
import { EditorState } from "./state.js";
import { validateLandmarkDocument } from "./types.js";
import { Viewport } from "./viewport.js";

const api = new ApiClient(
  new URLSearchParams(location.search).get("api") ?? "http://127.0.0.1:8077",
);

let state: EditorState | null = null;
let viewport: Viewport | null = null;
let sessionId = "";
let image: HTMLImageElement | null = null;
let meshViewer: MeshViewer | null = null;

const el = <T extends HTMLElement>(id: string): T => {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
};

const canvas = el<HTMLCanvasElement>("editor");
const statusLine = el<HTMLDivElement>("status");
const errorReadout = el<HTMLDivElement>("error-readout");

function setStatus(text: string, isError = false): void {
  statusLine.textContent = text;
  statusLine.className = isError ? "error" : "";
}

function draw(): void {
  if (!state || !viewport || !image) {
    return;
  }
  const ctx = canvas.getContext("2d")!;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.save();
  ctx.translate(viewport.offsetX, viewport.offsetY);
  ctx.scale(viewport.scale, viewport.scale);
  ctx.drawImage(image, 0, 0);
  ctx.restore();

  const result = state.lastResult;
  if (result) {
    ctx.strokeStyle = "#2ca02c";
    ctx.lineWidth = 1;
    for (const seg of residualSegments(result)) {
      const [tx, ty] = viewport.toCanvas(seg.target[0], seg.target[1]);
      const [rx, ry] = viewport.toCanvas(seg.reprojected[0], seg.reprojected[1]);
      ctx.beginPath();
      ctx.moveTo(tx, ty);
      ctx.lineTo(rx, ry);
      ctx.stroke();
      ctx.fillStyle = "#d62728";
      ctx.fillRect(rx - 2, ry - 2, 4, 4);
    }
  }

  state.points.forEach((point, index) => {
    const [cx, cy] = viewport!.toCanvas(point[0], point[1]);
    ctx.beginPath();
    ctx.arc(cx, cy, index === state!.selected ? 6 : 4, 0, Math.PI * 2);
    ctx.fillStyle = colorOf(index);
    ctx.fill();
    if (index === state!.selected) {
      ctx.strokeStyle = "#ffffff";
      ctx.stroke();
      ctx.fillStyle = "#ffffff";
      ctx.font = "11px sans-serif";
      ctx.fillText(String(index), cx + 7, cy - 7);
    }
  });
  el<HTMLButtonElement>("undo").disabled = !state.canUndo;
  el<HTMLButtonElement>("redo").disabled = !state.canRedo;
  el<HTMLButtonElement>("fit").disabled = state.status === "fitting";
}

function drawTrace(): void {
  if (!state?.lastResult) {
    return;
  }
  const traceCanvas = el<HTMLCanvasElement>("trace");
  const ctx = traceCanvas.getContext("2d")!;
  const { width, height } = traceCanvas;
  ctx.clearRect(0, 0, width, height);
  const points = energyTrace(state.lastResult);
  if (!points.length) {
    return;
  }
  const maxDef = Math.max(...points.map((p) => p.eDef), 1e-12);
  ctx.strokeStyle = "#4c72b0";
  ctx.beginPath();
  points.forEach((p, i) => {
    const x = 10 + (i / Math.max(points.length - 1, 1)) * (width - 20);
    const y = height - 12 - (p.eDef / maxDef) * (height - 24);
    i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
  });
  ctx.stroke();
  ctx.fillStyle = "#ccc";
  ctx.font = "11px sans-serif";
  ctx.fillText("deformation energy per iteration", 10, 12);
}

async function importSession(): Promise<void> {
  const imageFile = el<HTMLInputElement>("image-file").files?.[0];
  const landmarkFile = el<HTMLInputElement>("landmark-file").files?.[0];
  if (!imageFile || !landmarkFile) {
    setStatus("choose both an image and a landmark document", true);
    return;
  }
  try {
    const doc = validateLandmarkDocument(JSON.parse(await landmarkFile.text()));
    const bytes = new Uint8Array(await imageFile.arrayBuffer());
    let binary = "";
    bytes.forEach((b) => (binary += String.fromCharCode(b)));
    const session = await api.createSession(btoa(binary), doc);
    sessionId = session.id;

    image = new Image();
    image.src = URL.createObjectURL(imageFile);
    await image.decode();
    state = new EditorState(doc, image.naturalWidth, image.naturalHeight);
    viewport = new Viewport(canvas.width, canvas.height, image.naturalWidth, image.naturalHeight);
    setStatus(`session ${sessionId}: drag points, then fit`);
    draw();
  } catch (err) {
    setStatus(`import failed: ${(err as Error).message}`, true);
  }
}

async function persistLandmarks(): Promise<void> {
  if (!state || !sessionId) {
    return;
  }
  try {
    await api.updateLandmarks(sessionId, state.document());
  } catch (err) {
    setStatus(`autosave failed: ${(err as Error).message}`, true);
  }
}

async function runFit(): Promise<void> {
  if (!state || !sessionId || state.status === "fitting") {
    return;
  }
  try {
    await persistLandmarks();
    state.beginFit();
    draw();
    setStatus("fitting...");
    await api.startFit(sessionId);
    const status = await api.waitForFit(sessionId);
    if (status.status === "failed") {
      state.failFit();
      setStatus(`fit failed: ${status.error}`, true);
      return;
    }
    const result = await api.getResult(sessionId);
    state.finishFit(result);
    errorReadout.textContent =
      `E_error ${result.e_error.toPrecision(4)} px after ` +
      `${result.trace.length} iterations (${result.exit_reason})`;
    if (!meshViewer) {
      meshViewer = new MeshViewer(el<HTMLCanvasElement>("mesh"));
    }
    meshViewer.setMesh(result.mesh);
    drawTrace();
    setStatus(`done; drag points to start the next loop`);
    draw();
  } catch (err) {
    state.failFit();
    setStatus(`fit failed: ${(err as Error).message}`, true);
    draw();
  }
}

function attachEditorEvents(): void {
  let panning = false;
  let lastX = 0;
  let lastY = 0;

  canvas.addEventListener("mousedown", (event) => {
    if (!state || !viewport) {
      return;
    }
    const rect = canvas.getBoundingClientRect();
    const cx = event.clientX - rect.left;
    const cy = event.clientY - rect.top;
    if (event.button === 1 || event.shiftKey) {
      panning = true;
      lastX = cx;
      lastY = cy;
      return;
    }
    const hit = viewport.hitTest(state.points, cx, cy);
    if (hit >= 0 && state.beginDrag(hit)) {
      draw();
    }
  });
  window.addEventListener("mousemove", (event) => {
    if (!state || !viewport) {
      return;
    }
    const rect = canvas.getBoundingClientRect();
    const cx = event.clientX - rect.left;
    const cy = event.clientY - rect.top;
    if (panning) {
      viewport.pan(cx - lastX, cy - lastY);
      lastX = cx;
      lastY = cy;
      draw();
      return;
    }
    const [ix, iy] = viewport.toImage(cx, cy);
    if (state.dragTo(ix, iy)) {
      draw();
    }
  });
  window.addEventListener("mouseup", () => {
    if (state?.endDrag()) {
      void persistLandmarks();
      draw();
    } else if (state) {
      state.selected = -1;
      draw();
    }
  });
  canvas.addEventListener("wheel", (event) => {
    if (!viewport) {
      return;
    }
    event.preventDefault();
    const rect = canvas.getBoundingClientRect();
    viewport.zoomAt(event.clientX - rect.left, event.clientY - rect.top,
                    event.deltaY > 0 ? 1 / 1.15 : 1.15);
    draw();
  });
  window.addEventListener("keydown", (event) => {
    if (!state) {
      return;
    }
    if ((event.ctrlKey || event.metaKey) && event.key === "z" && !event.shiftKey) {
      if (state.undo()) {
        void persistLandmarks();
        draw();
      }
    } else if ((event.ctrlKey || event.metaKey) && (event.key === "y" || (event.key === "z" && event.shiftKey))) {
      if (state.redo()) {
        void persistLandmarks();
        draw();
      }
    }
  });
}

el<HTMLButtonElement>("import").addEventListener("click", () => void importSession());
el<HTMLButtonElement>("fit").addEventListener("click", () => void runFit());
el<HTMLButtonElement>("undo").addEventListener("click", () => {
  if (state?.undo()) {
    void persistLandmarks();
    draw();
  }
});
el<HTMLButtonElement>("redo").addEventListener("click", () => {
  if (state?.redo()) {
    void persistLandmarks();
    draw();
  }
});
el<HTMLButtonElement>("reset-view").addEventListener("click", () => {
  viewport?.reset();
  draw();
});
attachEditorEvents();
setStatus("import an image and its landmark document to begin");
