// Thin typed client for the /api endpoints. The UI performs no computation
// beyond rendering and sorting; every fact on screen comes from here.

import type { ApiError, ArtifactSet, BenchmarkRow, StepEvent, UploadPreview } from "./types.js";

export class ApiRequestError extends Error {
  constructor(public readonly status: number, public readonly detail: string) {
    super(`${status}: ${detail}`);
  }

  asApiError(): ApiError {
    return { status: this.status, detail: this.detail };
  }
}

async function ensureOk(resp: Response): Promise<Response> {
  if (resp.ok) return resp;
  let detail = resp.statusText;
  try {
    const body = await resp.json();
    if (typeof body.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body
  }
  throw new ApiRequestError(resp.status, detail);
}

export async function createSession(base = ""): Promise<string> {
  const resp = await ensureOk(await fetch(`${base}/api/sessions`, { method: "POST" }));
  return (await resp.json()).id as string;
}

export async function uploadDataset(
  sessionId: string,
  file: File,
  base = "",
): Promise<UploadPreview> {
  const form = new FormData();
  form.append("file", file);
  const resp = await ensureOk(
    await fetch(`${base}/api/sessions/${sessionId}/dataset`, { method: "POST", body: form }),
  );
  return (await resp.json()) as UploadPreview;
}

export async function postMessage(
  sessionId: string,
  text: string,
  base = "",
): Promise<string> {
  const resp = await ensureOk(
    await fetch(`${base}/api/sessions/${sessionId}/messages`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text }),
    }),
  );
  return (await resp.json()).turn_id as string;
}

export function streamEvents(
  sessionId: string,
  onEvent: (event: StepEvent) => void,
  onEnd: () => void,
  base = "",
): EventSource {
  const source = new EventSource(`${base}/api/sessions/${sessionId}/events`);
  source.onmessage = (msg) => {
    onEvent(JSON.parse(msg.data) as StepEvent);
  };
  source.addEventListener("end", () => {
    source.close();
    onEnd();
  });
  return source;
}

export async function getArtifacts(sessionId: string, base = ""): Promise<ArtifactSet> {
  const resp = await ensureOk(await fetch(`${base}/api/sessions/${sessionId}/artifacts`));
  return (await resp.json()) as ArtifactSet;
}

export async function getBenchmark(base = ""): Promise<BenchmarkRow[]> {
  const resp = await ensureOk(await fetch(`${base}/api/benchmark`));
  return (await resp.json()).rows as BenchmarkRow[];
}
