// View state <-> URL query string. The whole analysis view is a pure
// function of this state, and the state round-trips through the URL, so
// any view can be bookmarked, shared, and restored by reload.

export type Mode = "counts" | "share" | "per_image" | "conditional";

export const MODES: Mode[] = ["counts", "share", "per_image", "conditional"];
export const POSITIONS = ["top-left", "top-right", "bottom-left", "bottom-right"];

export interface ViewState {
  run: string | null;
  mode: Mode;
  cls: string | null;
  position: string | null;
  editId: string | null;
  misclassifiedOnly: boolean;
  correctedOnly: boolean;
  minSupport: number | null;
  minFrequency: number | null;
  topK: number | null;
  byClass: boolean;
  label: string | null;
  record: string | null;
  offset: number;
}

export const DEFAULT_STATE: ViewState = {
  run: null,
  mode: "share",
  cls: null,
  position: null,
  editId: null,
  misclassifiedOnly: false,
  correctedOnly: false,
  minSupport: null,
  minFrequency: null,
  topK: null,
  byClass: false,
  label: null,
  record: null,
  offset: 0,
};

function parsePositiveInt(raw: string | null): number | null {
  if (raw === null || raw === "") return null;
  const value = Number(raw);
  return Number.isInteger(value) && value >= 0 ? value : null;
}

function parseFraction(raw: string | null): number | null {
  if (raw === null || raw === "") return null;
  const value = Number(raw);
  return Number.isFinite(value) && value >= 0 && value <= 1 ? value : null;
}

export function parseViewState(search: string): ViewState {
  const params = new URLSearchParams(search.startsWith("?") ? search.slice(1) : search);
  const modeRaw = params.get("mode");
  const mode: Mode = MODES.includes(modeRaw as Mode) ? (modeRaw as Mode) : "share";
  const positionRaw = params.get("position");
  return {
    run: params.get("run"),
    mode,
    cls: params.get("class"),
    position: POSITIONS.includes(positionRaw ?? "") ? positionRaw : null,
    editId: params.get("edit"),
    misclassifiedOnly: params.get("mis") === "1",
    correctedOnly: params.get("cor") === "1",
    minSupport: parsePositiveInt(params.get("min_support")),
    minFrequency: parseFraction(params.get("min_freq")),
    topK: parsePositiveInt(params.get("top_k")),
    byClass: params.get("by_class") === "1",
    label: params.get("label"),
    record: params.get("record"),
    offset: parsePositiveInt(params.get("offset")) ?? 0,
  };
}

export function serializeViewState(state: ViewState): string {
  const params = new URLSearchParams();
  if (state.run !== null) params.set("run", state.run);
  if (state.mode !== "share") params.set("mode", state.mode);
  if (state.cls !== null) params.set("class", state.cls);
  if (state.position !== null) params.set("position", state.position);
  if (state.editId !== null) params.set("edit", state.editId);
  if (state.misclassifiedOnly) params.set("mis", "1");
  if (state.correctedOnly) params.set("cor", "1");
  if (state.minSupport !== null) params.set("min_support", String(state.minSupport));
  if (state.minFrequency !== null) params.set("min_freq", String(state.minFrequency));
  if (state.topK !== null) params.set("top_k", String(state.topK));
  if (state.byClass) params.set("by_class", "1");
  if (state.label !== null) params.set("label", state.label);
  if (state.record !== null) params.set("record", state.record);
  if (state.offset !== 0) params.set("offset", String(state.offset));
  return params.toString();
}

export function recordKey(imageId: string, segmentIndex: number, editId: string): string {
  return `${imageId}/${segmentIndex}/${editId}`;
}
