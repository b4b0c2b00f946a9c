/**
 * Mask-review tool: sample queue with filters and stats, a canvas-based
 * binary mask editor (brush / eraser / flood fill, undo, overlay opacity),
 * auto-estimate with a threshold slider, and label pickers.
 *
 * All durable state lives server-side; after a save or label change the
 * record and stats re-fetch, so a hard refresh reproduces the view.
 */

import { ApiError, CurationApi, ValidationError } from "./api.js";
import { BLUR, MaskBuffer, SHARP } from "./maskBuffer.js";
import { decodeGrayPng } from "./png.js";
import {
  BLUR_TYPES,
  INTENSITIES,
  INTENSITY_RUBRIC,
  REVIEW_STATES,
  SampleRecord,
  Stats,
} from "./types.js";

type Tool = "brush" | "eraser" | "fill";

interface AppState {
  samples: SampleRecord[];
  total: number;
  page: number;
  stateFilter: string;
  typeFilter: string;
  current: SampleRecord | null;
  buffer: MaskBuffer | null;
  image: HTMLImageElement | null;
  tool: Tool;
  radius: number;
  opacity: number;
  threshold: number;
  painting: boolean;
}

const api = new CurationApi("");

const state: AppState = {
  samples: [],
  total: 0,
  page: 1,
  stateFilter: "",
  typeFilter: "",
  current: null,
  buffer: null,
  image: null,
  tool: "brush",
  radius: 12,
  opacity: 0.45,
  threshold: 0.5,
  painting: false,
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const canvas = () => el<HTMLCanvasElement>("editor-canvas");
const banner = () => el<HTMLDivElement>("banner");

function showBanner(text: string, kind: "error" | "info", retry?: () => void): void {
  const node = banner();
  node.textContent = text;
  node.className = `banner ${kind}`;
  node.style.display = "block";
  if (retry) {
    const btn = document.createElement("button");
    btn.textContent = "retry";
    btn.onclick = () => {
      node.style.display = "none";
      retry();
    };
    node.appendChild(btn);
  } else {
    setTimeout(() => (node.style.display = "none"), 2500);
  }
}

function reportFailure(err: unknown, retry?: () => void): void {
  if (err instanceof ApiError) {
    showBanner(`server rejected the request (${err.status}): ${err.detail}`, "error");
  } else if (err instanceof ValidationError) {
    showBanner(`invalid input: ${err.message}`, "error");
  } else {
    showBanner(`network failure: ${String(err)}`, "error", retry);
  }
}

// ---------------------------------------------------------------------------
// queue and stats

async function refreshList(): Promise<void> {
  try {
    const page = await api.listSamples({
      state: state.stateFilter || undefined,
      type: state.typeFilter || undefined,
      page: state.page,
      pageSize: 100,
    });
    state.samples = page.samples;
    state.total = page.total;
    renderQueue();
  } catch (err) {
    reportFailure(err, refreshList);
  }
}

function renderQueue(): void {
  const list = el<HTMLUListElement>("sample-list");
  list.innerHTML = "";
  for (const s of state.samples) {
    const item = document.createElement("li");
    item.className = s.id === state.current?.id ? "selected" : "";
    item.innerHTML =
      `<span class="sid">${s.id}</span>` +
      `<span class="tag">${s.blur_type}</span>` +
      `<span class="tag">${s.size_category}</span>` +
      `<span class="tag state-${s.review_state}">${s.review_state}</span>`;
    item.onclick = () => void openSample(s.id);
    list.appendChild(item);
  }
  el<HTMLSpanElement>("queue-count").textContent = `${state.total} samples`;
}

async function refreshStats(): Promise<void> {
  try {
    const stats = await api.getStats();
    renderStats(stats);
  } catch (err) {
    reportFailure(err, refreshStats);
  }
}

function renderStats(stats: Stats): void {
  const panel = el<HTMLDivElement>("stats-panel");
  const fmt = (m: Record<string, number>) =>
    Object.entries(m).sort().map(([k, v]) => `<span class="stat">${k}: <b>${v}</b></span>`).join(" ");
  panel.innerHTML =
    `<div>total <b>${stats.total}</b></div>` +
    `<div>review ${fmt(stats.by_review_state)}</div>` +
    `<div>type ${fmt(stats.by_blur_type)}</div>` +
    `<div>intensity ${fmt(stats.by_intensity)}</div>` +
    `<div>size ${fmt(stats.by_size_category)}</div>`;
}

// ---------------------------------------------------------------------------
// editor

async function openSample(id: string): Promise<void> {
  if (state.buffer?.dirty && !window.confirm("Discard unsaved mask edits?")) return;
  try {
    const record = await api.getSample(id);
    const maskBytes = await api.fetchMask(id);
    const gray = await decodeGrayPng(maskBytes);
    const image = new Image();
    image.src = api.imageUrl(id) + `?rev=${record.revision}`;
    await image.decode();
    state.current = record;
    state.buffer = MaskBuffer.fromGrayPixels(gray.pixels, gray.width, gray.height);
    state.image = image;
    const c = canvas();
    c.width = record.width;
    c.height = record.height;
    renderEditor();
    renderLabels();
    renderQueue();
  } catch (err) {
    reportFailure(err, () => void openSample(id));
  }
}

function renderEditor(): void {
  const c = canvas();
  const ctx = c.getContext("2d");
  if (!ctx || !state.image || !state.buffer) return;
  ctx.clearRect(0, 0, c.width, c.height);
  ctx.drawImage(state.image, 0, 0);
  const overlay = ctx.getImageData(0, 0, c.width, c.height);
  const data = state.buffer.values();
  const alpha = state.opacity;
  for (let i = 0; i < data.length; i++) {
    if (data[i] === BLUR) {
      overlay.data[i * 4] = Math.round(overlay.data[i * 4] * (1 - alpha) + 255 * alpha);
      overlay.data[i * 4 + 1] = Math.round(overlay.data[i * 4 + 1] * (1 - alpha) + 40 * alpha);
      overlay.data[i * 4 + 2] = Math.round(overlay.data[i * 4 + 2] * (1 - alpha) + 40 * alpha);
    }
  }
  ctx.putImageData(overlay, 0, 0);
  el<HTMLSpanElement>("fraction-label").textContent =
    `blur fraction ${(state.buffer.blurFraction() * 100).toFixed(1)}%`;
  const save = el<HTMLButtonElement>("save-btn");
  save.disabled = !state.buffer.dirty;
  el<HTMLButtonElement>("undo-btn").disabled = state.buffer.undoDepth() === 0;
}

function canvasPos(ev: PointerEvent): { x: number; y: number } {
  const rect = canvas().getBoundingClientRect();
  const scaleX = canvas().width / rect.width;
  const scaleY = canvas().height / rect.height;
  return {
    x: Math.floor((ev.clientX - rect.left) * scaleX),
    y: Math.floor((ev.clientY - rect.top) * scaleY),
  };
}

function applyTool(x: number, y: number): void {
  if (!state.buffer) return;
  if (state.tool === "fill") {
    state.buffer.floodFill(x, y, BLUR);
  } else {
    state.buffer.paint(x, y, state.radius, state.tool === "brush" ? BLUR : SHARP);
  }
  renderEditor();
}

function bindEditorEvents(): void {
  const c = canvas();
  c.addEventListener("pointerdown", (ev) => {
    if (!state.buffer) return;
    state.buffer.beginStroke();
    state.painting = true;
    const { x, y } = canvasPos(ev);
    applyTool(x, y);
  });
  c.addEventListener("pointermove", (ev) => {
    if (!state.painting || state.tool === "fill") return;
    const { x, y } = canvasPos(ev);
    applyTool(x, y);
  });
  const stop = () => {
    state.buffer?.endStroke();
    state.painting = false;
  };
  c.addEventListener("pointerup", stop);
  c.addEventListener("pointerleave", stop);
}

async function saveMask(): Promise<void> {
  if (!state.current || !state.buffer) return;
  try {
    const record = await api.putMask(state.current.id, state.buffer, state.current.revision);
    state.current = record;
    state.buffer.markSaved();
    showBanner("mask saved", "info");
    renderEditor();
    renderLabels();
    await Promise.all([refreshList(), refreshStats()]);
  } catch (err) {
    // keep the buffer on failure so nothing is lost
    reportFailure(err, () => void saveMask());
  }
}

async function runEstimate(): Promise<void> {
  if (!state.current) return;
  if (state.buffer?.dirty && !window.confirm("Replace unsaved edits with the auto estimate?")) return;
  try {
    const png = await api.postEstimate(state.current.id, state.threshold);
    const gray = await decodeGrayPng(png);
    state.buffer = MaskBuffer.fromGrayPixels(gray.pixels, gray.width, gray.height);
    state.current = await api.getSample(state.current.id);
    renderEditor();
    renderLabels();
    await Promise.all([refreshList(), refreshStats()]);
  } catch (err) {
    reportFailure(err, () => void runEstimate());
  }
}

// ---------------------------------------------------------------------------
// labels

function renderLabels(): void {
  const s = state.current;
  el<HTMLDivElement>("sample-meta").innerHTML = s
    ? `<b>${s.id}</b> — ${s.width}x${s.height}, ${s.source}, fraction ` +
      `${(s.fraction * 100).toFixed(1)}% (${s.size_category}), revision ${s.revision}`
    : "no sample selected";
  (el<HTMLSelectElement>("pick-blur-type")).value = s?.blur_type ?? "none";
  (el<HTMLSelectElement>("pick-intensity")).value = s?.intensity ?? "unlabeled";
  (el<HTMLSelectElement>("pick-review")).value = s?.review_state ?? "auto";
}

async function patchLabel(field: "blur_type" | "intensity" | "review_state", value: string): Promise<void> {
  if (!state.current) return;
  try {
    state.current = await api.patchLabels(state.current.id, { [field]: value }, state.current.revision);
    renderLabels();
    await Promise.all([refreshList(), refreshStats()]);
  } catch (err) {
    reportFailure(err);
    renderLabels();
  }
}

// ---------------------------------------------------------------------------
// wiring

function fillSelect(id: string, values: readonly string[], withEmpty = false): void {
  const select = el<HTMLSelectElement>(id);
  if (withEmpty) {
    const opt = document.createElement("option");
    opt.value = "";
    opt.textContent = "all";
    select.appendChild(opt);
  }
  for (const v of values) {
    const opt = document.createElement("option");
    opt.value = v;
    opt.textContent = v;
    select.appendChild(opt);
  }
}

function currentIndex(): number {
  return state.samples.findIndex((s) => s.id === state.current?.id);
}

function step(delta: number): void {
  if (!state.samples.length) return;
  const idx = currentIndex();
  const next = idx < 0 ? 0 : Math.min(state.samples.length - 1, Math.max(0, idx + delta));
  void openSample(state.samples[next].id);
}

export function initApp(): void {
  fillSelect("filter-state", REVIEW_STATES, true);
  fillSelect("filter-type", BLUR_TYPES, true);
  fillSelect("pick-blur-type", BLUR_TYPES);
  fillSelect("pick-intensity", INTENSITIES);
  fillSelect("pick-review", REVIEW_STATES);

  el<HTMLDivElement>("rubric").innerHTML =
    "<b>intensity rubric</b><ul>" +
    Object.entries(INTENSITY_RUBRIC).map(([k, v]) => `<li><b>${k}</b>: ${v}</li>`).join("") +
    "</ul>";

  el<HTMLSelectElement>("filter-state").onchange = (ev) => {
    state.stateFilter = (ev.target as HTMLSelectElement).value;
    state.page = 1;
    void refreshList();
  };
  el<HTMLSelectElement>("filter-type").onchange = (ev) => {
    state.typeFilter = (ev.target as HTMLSelectElement).value;
    state.page = 1;
    void refreshList();
  };
  for (const tool of ["brush", "eraser", "fill"] as Tool[]) {
    el<HTMLButtonElement>(`tool-${tool}`).onclick = () => {
      state.tool = tool;
      for (const t of ["brush", "eraser", "fill"]) {
        el(`tool-${t}`).classList.toggle("active", t === tool);
      }
    };
  }
  el<HTMLInputElement>("radius-slider").oninput = (ev) => {
    state.radius = Number((ev.target as HTMLInputElement).value);
    el<HTMLSpanElement>("radius-label").textContent = `${state.radius}px`;
  };
  el<HTMLInputElement>("opacity-slider").oninput = (ev) => {
    state.opacity = Number((ev.target as HTMLInputElement).value) / 100;
    renderEditor();
  };
  el<HTMLInputElement>("threshold-slider").oninput = (ev) => {
    state.threshold = Number((ev.target as HTMLInputElement).value) / 100;
    el<HTMLSpanElement>("threshold-label").textContent = state.threshold.toFixed(2);
  };
  el<HTMLButtonElement>("estimate-btn").onclick = () => void runEstimate();
  el<HTMLButtonElement>("undo-btn").onclick = () => {
    if (state.buffer?.undo()) renderEditor();
  };
  el<HTMLButtonElement>("save-btn").onclick = () => void saveMask();
  el<HTMLSelectElement>("pick-blur-type").onchange = (ev) =>
    void patchLabel("blur_type", (ev.target as HTMLSelectElement).value);
  el<HTMLSelectElement>("pick-intensity").onchange = (ev) =>
    void patchLabel("intensity", (ev.target as HTMLSelectElement).value);
  el<HTMLSelectElement>("pick-review").onchange = (ev) =>
    void patchLabel("review_state", (ev.target as HTMLSelectElement).value);

  document.addEventListener("keydown", (ev) => {
    if (ev.target instanceof HTMLInputElement || ev.target instanceof HTMLSelectElement) return;
    if (ev.key === "ArrowRight" || ev.key === "n") step(1);
    if (ev.key === "ArrowLeft" || ev.key === "p") step(-1);
    if (ev.key === "z" && (ev.ctrlKey || ev.metaKey) && state.buffer?.undo()) renderEditor();
  });

  bindEditorEvents();
  void refreshList();
  void refreshStats();
}

if (typeof document !== "undefined" && document.getElementById("editor-canvas")) {
  initApp();
}
