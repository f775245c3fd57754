// DOM wiring: everything interesting lives in the pure modules this file
// composes (panels.ts, preview.ts, benchmark.ts, api.ts).

import {
  ApiRequestError,
  createSession,
  getArtifacts,
  getBenchmark,
  postMessage,
  streamEvents,
  uploadDataset,
} from "./api.js";
import {
  buildBenchmarkTable,
  renderBenchmarkTable,
  renderEmptyBenchmark,
  sortDatasets,
  type SortKey,
} from "./benchmark.js";
import { applyEvent, emptyPanels, escapeHtml, renderPanel, type PanelViewModel } from "./panels.js";
import { renderErrorBanner, renderPreviewGrid } from "./preview.js";

const $ = (id: string) => document.getElementById(id)!;

let sessionId: string | null = null;
let panels: PanelViewModel = emptyPanels();
let turnRunning = false;

async function ensureSession(): Promise<string> {
  if (sessionId === null) {
    sessionId = await createSession();
    $("session-label").textContent = `session ${sessionId}`;
  }
  return sessionId;
}

function redrawPanels(): void {
  $("left-panel").innerHTML = renderPanel(panels.plainEntries, "plain-entries");
  $("right-panel").innerHTML = renderPanel(panels.technicalEntries, "technical-entries");
  for (const el of [$("left-panel"), $("right-panel")]) {
    el.scrollTop = el.scrollHeight;
  }
}

function setInputEnabled(enabled: boolean): void {
  const input = $("query-input") as HTMLInputElement;
  const button = $("send-button") as HTMLButtonElement;
  input.disabled = !enabled;
  button.disabled = !enabled;
  button.title = enabled ? "" : "a turn is already running";
}

function addBubble(kind: "user" | "agent" | "error", text: string): void {
  const div = document.createElement("div");
  div.className = `bubble bubble-${kind}`;
  div.innerHTML = escapeHtml(text);
  $("chat-log").appendChild(div);
  $("chat-log").scrollTop = $("chat-log").scrollHeight;
}

async function handleUpload(file: File): Promise<void> {
  try {
    const sid = await ensureSession();
    const preview = await uploadDataset(sid, file);
    $("preview-area").innerHTML = renderPreviewGrid(preview);
  } catch (err) {
    if (err instanceof ApiRequestError) {
      $("preview-area").innerHTML = renderErrorBanner(err.asApiError());
    } else {
      throw err;
    }
  }
}

async function handleSend(): Promise<void> {
  const input = $("query-input") as HTMLInputElement;
  const text = input.value.trim();
  if (!text || turnRunning) return;
  const sid = await ensureSession();
  addBubble("user", text);
  input.value = "";
  try {
    await postMessage(sid, text);
  } catch (err) {
    if (err instanceof ApiRequestError && err.status === 409) {
      setInputEnabled(false);
      addBubble("error", "A turn is already running; wait for it to finish.");
      return;
    }
    throw err;
  }
  turnRunning = true;
  setInputEnabled(false);
  streamEvents(
    sid,
    (event) => {
      panels = applyEvent(panels, event);
      redrawPanels();
    },
    () => {
      turnRunning = false;
      setInputEnabled(true);
      void showArtifacts(sid);
    },
  );
}

async function showArtifacts(sid: string): Promise<void> {
  const artifacts = await getArtifacts(sid);
  const links: string[] = [];
  if (artifacts.code !== null) {
    links.push(`<a href="/api/sessions/${sid}/artifacts/code" download="solution.py">code</a>`);
  }
  if (artifacts.report !== null) {
    links.push(`<a href="/api/sessions/${sid}/artifacts/report" download="report.md">report</a>`);
    addBubble("agent", artifacts.report.slice(0, 600));
  }
  if (artifacts.predictions !== null) {
    links.push(`<a href="/api/sessions/${sid}/artifacts/predictions" download>predictions</a>`);
  }
  $("artifact-links").innerHTML = links.length
    ? "Artifacts: " + links.join(" · ")
    : "";
}

let benchmarkSort: SortKey = { kind: "dataset" };
let benchmarkDescending = false;

async function refreshBenchmark(): Promise<void> {
  const rows = await getBenchmark();
  const area = $("benchmark-area");
  if (rows.length === 0) {
    area.innerHTML = renderEmptyBenchmark();
    return;
  }
  const table = buildBenchmarkTable(rows);
  area.innerHTML = renderBenchmarkTable(table, sortDatasets(table, benchmarkSort, benchmarkDescending));
  for (const th of area.querySelectorAll("th[data-sort]")) {
    th.addEventListener("click", () => {
      const spec = th.getAttribute("data-sort")!;
      const next: SortKey = spec === "dataset"
        ? { kind: "dataset" }
        : { kind: "tool", tool: spec.slice("tool:".length) };
      benchmarkDescending =
        JSON.stringify(next) === JSON.stringify(benchmarkSort) ? !benchmarkDescending : false;
      benchmarkSort = next;
      void refreshBenchmark();
    });
  }
}

function wire(): void {
  $("send-button").addEventListener("click", () => void handleSend());
  ($("query-input") as HTMLInputElement).addEventListener("keydown", (ev) => {
    if (ev.key === "Enter") void handleSend();
  });
  ($("file-input") as HTMLInputElement).addEventListener("change", (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (file) void handleUpload(file);
  });
  $("benchmark-refresh").addEventListener("click", () => void refreshBenchmark());
  void refreshBenchmark();
}

document.addEventListener("DOMContentLoaded", wire);
