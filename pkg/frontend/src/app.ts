// Application wiring: one ViewState drives everything, every state change
// updates the URL and issues exactly one aggregate request (plus a record
// page when a label is drilled into), and stale responses are cancelled.

import {
  ApiError,
  fetchCof,
  fetchRecords,
  fetchRuns,
} from "./api.js";
import {
  DEFAULT_STATE,
  MODES,
  POSITIONS,
  ViewState,
  parseViewState,
  recordKey,
  serializeViewState,
} from "./state.js";
import {
  escapeHtml,
  renderBanner,
  renderByClass,
  renderGallery,
  renderOverview,
  renderRecordDetail,
  renderRunOptions,
  renderSelectOptions,
} from "./render.js";
import type { ByClassTables, CofTable, RecordsPage, RunSummary } from "./types.js";

export interface AppDeps {
  baseUrl: string;
  document: Document;
  getSearch: () => string;
  setSearch: (search: string) => void;
}

const PAGE_SIZE = 12;

export class ExplorerApp {
  state: ViewState = { ...DEFAULT_STATE };
  runs: RunSummary[] = [];
  lastTable: CofTable | ByClassTables | null = null;
  lastPage: RecordsPage | null = null;
  cofQueries = 0;
  recordQueries = 0;
  private controller: AbortController | null = null;

  constructor(
    readonly root: HTMLElement,
    readonly deps: AppDeps,
  ) {}

  currentRun(): RunSummary | undefined {
    return this.runs.find((run) => run.run_id === this.state.run);
  }

  async start(): Promise<void> {
    this.state = parseViewState(this.deps.getSearch());
    this.root.innerHTML = `
      <header class="topbar">
        <h1>counterfactual explorer</h1>
        <label>run
          <select data-field="run" id="run-select"></select>
        </label>
      </header>
      <section class="controls" id="controls"></section>
      <div id="banner"></div>
      <main id="view"></main>`;
    this.bindEvents();
    try {
      this.runs = await fetchRuns(this.deps.baseUrl);
    } catch (err) {
      this.showError(err);
      return;
    }
    if (!this.state.run || !this.runs.some((r) => r.run_id === this.state.run)) {
      this.state.run = this.runs.length ? this.runs[0].run_id : null;
      this.syncUrl();
    }
    this.renderChrome();
    await this.refresh();
  }

  /** Re-read the URL (backward/forward navigation) and re-render. */
  async restore(): Promise<void> {
    this.state = parseViewState(this.deps.getSearch());
    if (!this.state.run && this.runs.length) this.state.run = this.runs[0].run_id;
    this.renderChrome();
    await this.refresh();
  }

  async apply(patch: Partial<ViewState>): Promise<void> {
    const keepOffset = "offset" in patch;
    this.state = {
      ...this.state,
      ...patch,
      ...(keepOffset ? {} : { offset: 0 }),
    };
    if ("run" in patch || "label" in patch) {
      // a new run or a new label invalidates the record selection
      if (!("record" in patch)) this.state = { ...this.state, record: null };
    }
    this.syncUrl();
    this.renderChrome();
    await this.refresh();
  }

  private syncUrl(): void {
    this.deps.setSearch(serializeViewState(this.state));
  }

  private editIds(run: RunSummary | undefined): string[] {
    const edits = run?.manifest.edits;
    if (!Array.isArray(edits)) return [];
    return edits
      .map((entry: unknown) =>
        typeof entry === "string"
          ? entry
          : typeof entry === "object" && entry !== null && "edit_id" in entry
            ? String((entry as { edit_id: unknown }).edit_id)
            : "",
      )
      .filter((value) => value.length > 0);
  }

  private renderChrome(): void {
    const doc = this.deps.document;
    const run = this.currentRun();
    const select = this.root.querySelector("#run-select");
    if (select) select.innerHTML = renderRunOptions(this.runs, this.state.run);
    const hasGt = run?.manifest.has_ground_truth ?? false;
    const gtNote = hasGt ? "" : ' disabled title="this run has no ground-truth labels"';
    const flipsOnly = run?.manifest.flips_only ?? false;
    const modeOption = (mode: string) =>
      `<option value="${mode}"${mode === this.state.mode ? " selected" : ""}${
        flipsOnly && (mode === "per_image" || mode === "conditional")
          ? ' disabled title="flips-only run: presence counts were not recorded"'
          : ""
      }>${mode.replace("_", "-")}</option>`;
    const controls = this.root.querySelector("#controls");
    if (!controls) return;
    controls.innerHTML = `
      <label>mode <select data-field="mode">${MODES.map(modeOption).join("")}</select></label>
      <label>class <select data-field="cls">${renderSelectOptions(run?.classes ?? [], this.state.cls)}</select></label>
      <label>position <select data-field="position">${renderSelectOptions(POSITIONS, this.state.position)}</select></label>
      <label>edit <select data-field="editId">${renderSelectOptions(this.editIds(run), this.state.editId)}</select></label>
      <label>min support <input data-field="minSupport" type="number" min="0" value="${this.state.minSupport ?? ""}"></label>
      <label>min frequency <input data-field="minFrequency" type="number" min="0" max="1" step="0.01" value="${this.state.minFrequency ?? ""}"></label>
      <label>top k <input data-field="topK" type="number" min="1" value="${this.state.topK ?? ""}"></label>
      <label><input data-field="byClass" type="checkbox"${this.state.byClass ? " checked" : ""}> per class</label>
      <label><input data-field="misclassifiedOnly" type="checkbox"${this.state.misclassifiedOnly ? " checked" : ""}${gtNote}> misclassified only</label>
      <label><input data-field="correctedOnly" type="checkbox"${this.state.correctedOnly ? " checked" : ""}${gtNote}> corrected only</label>`;
    void doc;
  }

  private patchFromControl(element: HTMLElement): Partial<ViewState> | null {
    const field = element.getAttribute("data-field");
    if (!field) return null;
    const input = element as HTMLInputElement | HTMLSelectElement;
    switch (field) {
      case "run":
        return { run: input.value || null };
      case "mode":
        return { mode: input.value as ViewState["mode"], label: null, record: null };
      case "cls":
        return { cls: input.value || null };
      case "position":
        return { position: input.value || null };
      case "editId":
        return { editId: input.value || null };
      case "minSupport":
        return { minSupport: input.value === "" ? null : Math.max(0, Number(input.value)) };
      case "minFrequency":
        return { minFrequency: input.value === "" ? null : Math.min(1, Math.max(0, Number(input.value))) };
      case "topK":
        return { topK: input.value === "" ? null : Math.max(1, Number(input.value)) };
      case "byClass":
        return { byClass: (input as HTMLInputElement).checked };
      case "misclassifiedOnly":
        return { misclassifiedOnly: (input as HTMLInputElement).checked };
      case "correctedOnly":
        return { correctedOnly: (input as HTMLInputElement).checked };
      default:
        return null;
    }
  }

  private bindEvents(): void {
    this.root.addEventListener("change", (event) => {
      const patch = this.patchFromControl(event.target as HTMLElement);
      if (patch) void this.apply(patch);
    });
    this.root.addEventListener("click", (event) => {
      const target = event.target as HTMLElement;
      const labelLink = target.closest(".label-link") as HTMLElement | null;
      if (labelLink) {
        event.preventDefault();
        void this.apply({ label: labelLink.getAttribute("data-label") });
        return;
      }
      const tile = target.closest(".tile") as HTMLElement | null;
      if (tile) {
        void this.apply({ record: tile.getAttribute("data-record"), offset: this.state.offset });
        return;
      }
      if (target.closest(".detail-close")) {
        void this.apply({ record: null, offset: this.state.offset });
        return;
      }
      if (target.closest(".pager-next") && this.lastPage) {
        void this.apply({ offset: this.state.offset + PAGE_SIZE });
        return;
      }
      if (target.closest(".pager-prev")) {
        void this.apply({ offset: Math.max(0, this.state.offset - PAGE_SIZE) });
        return;
      }
      if (target.closest(".details-close")) {
        void this.apply({ label: null, record: null });
      }
    });
  }

  private showError(err: unknown): void {
    const banner = this.root.querySelector("#banner");
    if (!banner) return;
    const message =
      err instanceof ApiError ? `request failed — ${err.detail}` : String(err);
    banner.innerHTML = renderBanner(message);
  }

  async refresh(): Promise<void> {
    this.controller?.abort();
    const controller = new AbortController();
    this.controller = controller;
    const view = this.root.querySelector("#view");
    const banner = this.root.querySelector("#banner");
    if (!view || !banner) return;
    banner.innerHTML = "";
    if (!this.state.run) {
      view.innerHTML = `<p class="empty">no runs available</p>`;
      return;
    }
    try {
      this.cofQueries += 1;
      const table = await fetchCof(this.deps.baseUrl, this.state, controller.signal);
      if (controller.signal.aborted) return;
      this.lastTable = table;
      let html =
        "by_class" in table ? renderByClass(table) : renderOverview(table as CofTable);
      if (this.state.label !== null) {
        this.recordQueries += 1;
        const page = await fetchRecords(
          this.deps.baseUrl,
          this.state,
          PAGE_SIZE,
          controller.signal,
        );
        if (controller.signal.aborted) return;
        this.lastPage = page;
        const selected =
          this.state.record === null
            ? undefined
            : page.records.find(
                (r) =>
                  recordKey(r.image_id, r.segment_index, r.edit_id) === this.state.record,
              );
        const body = selected
          ? renderRecordDetail(this.deps.baseUrl, this.state.run, selected)
          : renderGallery(this.deps.baseUrl, this.state.run, page);
        html += `<section class="details">
          <h2>details: ${escapeHtml(this.state.label)}
            <button class="details-close">close</button></h2>
          ${body}
        </section>`;
      } else {
        this.lastPage = null;
      }
      view.innerHTML = html;
    } catch (err) {
      if (err instanceof DOMException && err.name === "AbortError") return;
      this.showError(err);
    }
  }
}

export function createApp(root: HTMLElement, deps: AppDeps): ExplorerApp {
  return new ExplorerApp(root, deps);
}
