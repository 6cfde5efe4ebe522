// Thin request layer: builds endpoint URLs from view state and fetches
// JSON. All aggregation happens on the server; the client only asks.

import type { ViewState } from "./state.js";
import type { ByClassTables, CofTable, RecordsPage, RunSummary } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`${status}: ${detail}`);
  }
}

export function cofQueryParams(state: ViewState): URLSearchParams {
  const params = new URLSearchParams();
  params.set("mode", state.mode);
  if (state.cls !== null) params.set("class", state.cls);
  if (state.position !== null) params.set("position", state.position);
  if (state.editId !== null) params.set("edit_id", state.editId);
  if (state.misclassifiedOnly) params.set("misclassified_only", "true");
  if (state.correctedOnly) params.set("corrected_only", "true");
  if (state.minSupport !== null) params.set("min_support", String(state.minSupport));
  if (state.minFrequency !== null) params.set("min_frequency", String(state.minFrequency));
  if (state.topK !== null) params.set("top_k", String(state.topK));
  if (state.byClass) params.set("by_class", "true");
  return params;
}

export function cofUrl(base: string, state: ViewState): string {
  return `${base}/api/runs/${encodeURIComponent(state.run ?? "")}/cof?${cofQueryParams(state)}`;
}

export function recordsUrl(base: string, state: ViewState, limit: number): string {
  const params = new URLSearchParams();
  if (state.label !== null) params.set("label", state.label);
  if (state.cls !== null) params.set("class", state.cls);
  if (state.position !== null) params.set("position", state.position);
  params.set("flipped", "true");
  params.set("offset", String(state.offset));
  params.set("limit", String(limit));
  return `${base}/api/runs/${encodeURIComponent(state.run ?? "")}/records?${params}`;
}

export function runsUrl(base: string): string {
  return `${base}/api/runs`;
}

export interface RecordImageUrls {
  original: string;
  overlay: string;
  edited: string;
}

export function recordImageUrls(
  base: string,
  run: string,
  imageId: string,
  segmentIndex: number,
  editId: string,
): RecordImageUrls {
  const prefix = `${base}/api/runs/${encodeURIComponent(run)}/images/${encodeURIComponent(imageId)}`;
  return {
    original: `${prefix}/original`,
    overlay: `${prefix}/overlay/${segmentIndex}`,
    edited: `${prefix}/edited/${segmentIndex}/${encodeURIComponent(editId)}`,
  };
}

export async function getJson<T>(url: string, signal?: AbortSignal): Promise<T> {
  const response = await fetch(url, { signal });
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-JSON error body: keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export const fetchRuns = (base: string, signal?: AbortSignal) =>
  getJson<RunSummary[]>(runsUrl(base), signal);

export const fetchCof = (base: string, state: ViewState, signal?: AbortSignal) =>
  getJson<CofTable | ByClassTables>(cofUrl(base, state), signal);

export const fetchRecords = (
  base: string,
  state: ViewState,
  limit: number,
  signal?: AbortSignal,
) => getJson<RecordsPage>(recordsUrl(base, state, limit), signal);
