// Pure HTML renderers. Every number shown comes verbatim from an API
// response (formatted for display only); there is deliberately no
// aggregation arithmetic anywhere in this file.

import { recordKey } from "./state.js";
import type {
  ByClassTables,
  CofTable,
  EvaluationRecord,
  RecordsPage,
  RunSummary,
} from "./types.js";
import { recordImageUrls } from "./api.js";

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;")
    .replaceAll("'", "&#39;");
}

export function formatFrequency(mode: string, frequency: number): string {
  if (mode === "counts") return String(Math.round(frequency));
  return `${(frequency * 100).toFixed(1)}%`;
}

export function modeCaption(table: CofTable): string {
  switch (table.mode) {
    case "counts":
      return `raw counterfactual counts (${table.total_counterfactuals} counterfactuals)`;
    case "share":
      return `share of all ${table.total_counterfactuals} counterfactuals found`;
    case "per_image":
      return `fraction of ${table.total_images} images in scope`;
    case "conditional":
      return "among images containing the label (see support column)";
    default:
      return table.mode;
  }
}

function barWidth(table: CofTable, frequency: number): number {
  if (table.mode === "counts") {
    const top = table.rows.length ? table.rows[0].frequency : 1;
    return top > 0 ? (frequency / top) * 100 : 0;
  }
  return Math.min(100, frequency * 100);
}

export function renderOverviewTable(table: CofTable): string {
  if (table.rows.length === 0) {
    return `<p class="empty">no counterfactuals match the current filters</p>`;
  }
  const rows = table.rows
    .map((row) => {
      const label = escapeHtml(row.label);
      return `<tr class="cof-row" data-label="${label}">
        <td class="label"><a href="#" class="label-link" data-label="${label}">${label}</a></td>
        <td class="num">${row.count}</td>
        <td class="num" title="${row.frequency}">${formatFrequency(table.mode, row.frequency)}</td>
        <td class="num">${row.support}</td>
        <td class="bar-cell"><div class="bar" style="width:${barWidth(table, row.frequency).toFixed(2)}%"></div></td>
      </tr>`;
    })
    .join("\n");
  return `<table class="cof-table">
    <thead><tr><th>label</th><th>count</th><th>frequency</th><th>support</th><th></th></tr></thead>
    <tbody>${rows}</tbody>
  </table>`;
}

export function renderOverview(table: CofTable): string {
  return `<div class="caption">mode: <strong>${escapeHtml(table.mode)}</strong> — ${escapeHtml(
    modeCaption(table),
  )} · ${table.total_images} images</div>${renderOverviewTable(table)}`;
}

export function renderByClass(tables: ByClassTables): string {
  const sections = Object.keys(tables.by_class)
    .sort()
    .map(
      (cls) => `<section class="class-section" data-class="${escapeHtml(cls)}">
      <h3>class ${escapeHtml(cls)}</h3>
      ${renderOverview(tables.by_class[cls])}
    </section>`,
    );
  if (sections.length === 0) {
    return `<p class="empty">no counterfactuals match the current filters</p>`;
  }
  return sections.join("\n");
}

export function renderRunOptions(runs: RunSummary[], selected: string | null): string {
  return runs
    .map((run) => {
      const id = escapeHtml(run.run_id);
      const marker = run.run_id === selected ? " selected" : "";
      return `<option value="${id}"${marker}>${id} (${run.counterfactual_count} cf / ${run.image_count} img)</option>`;
    })
    .join("\n");
}

export function renderSelectOptions(values: string[], selected: string | null): string {
  const blank = `<option value=""${selected === null ? " selected" : ""}>(any)</option>`;
  const rest = values
    .map((value) => {
      const escaped = escapeHtml(value);
      const marker = value === selected ? " selected" : "";
      return `<option value="${escaped}"${marker}>${escaped}</option>`;
    })
    .join("\n");
  return blank + rest;
}

function caption(record: EvaluationRecord): string {
  return `${record.segment_label}: ${record.original_class} → ${record.edited_class}`;
}

export function renderGallery(base: string, run: string, page: RecordsPage): string {
  if (page.total === 0) {
    return `<p class="empty">no counterfactual records for this selection</p>`;
  }
  const tiles = page.records
    .map((record) => {
      const urls = recordImageUrls(
        base,
        run,
        record.image_id,
        record.segment_index,
        record.edit_id,
      );
      const key = escapeHtml(recordKey(record.image_id, record.segment_index, record.edit_id));
      return `<figure class="tile" data-record="${key}">
        <div class="triptych">
          <img src="${urls.original}" alt="original ${escapeHtml(record.image_id)}"
               onerror="this.classList.add('missing')">
          <img src="${urls.overlay}" alt="segment overlay"
               onerror="this.classList.add('missing')">
          <img src="${urls.edited}" alt="edited image"
               onerror="this.classList.add('missing')">
        </div>
        <figcaption>${escapeHtml(record.image_id)} — ${escapeHtml(caption(record))}</figcaption>
      </figure>`;
    })
    .join("\n");
  const last = Math.min(page.offset + page.records.length, page.total);
  return `<div class="gallery">${tiles}</div>
  <div class="pager">
    <button class="pager-prev" ${page.offset === 0 ? "disabled" : ""}>previous</button>
    <span>${page.total === 0 ? 0 : page.offset + 1}–${last} of ${page.total}</span>
    <button class="pager-next" ${last >= page.total ? "disabled" : ""}>next</button>
  </div>`;
}

export function renderRecordDetail(
  base: string,
  run: string,
  record: EvaluationRecord,
): string {
  const urls = recordImageUrls(base, run, record.image_id, record.segment_index, record.edit_id);
  return `<div class="detail">
    <h3>${escapeHtml(record.image_id)} — ${escapeHtml(caption(record))}</h3>
    <div class="triptych large">
      <figure><img src="${urls.original}" alt="original"><figcaption>original (predicted ${escapeHtml(
        record.original_class,
      )})</figcaption></figure>
      <figure><img src="${urls.overlay}" alt="overlay"><figcaption>segment: ${escapeHtml(
        record.segment_label,
      )} at ${escapeHtml(record.position)}</figcaption></figure>
      <figure><img src="${urls.edited}" alt="edited"><figcaption>edited via ${escapeHtml(
        record.edit_id,
      )} (now ${escapeHtml(record.edited_class)})</figcaption></figure>
    </div>
    <dl class="record-facts">
      <dt>area</dt><dd>${(record.area_frac * 100).toFixed(1)}% of the image</dd>
      <dt>ground truth</dt><dd>${escapeHtml(record.ground_truth ?? "(none)")}</dd>
    </dl>
    <button class="detail-close">back to gallery</button>
  </div>`;
}

export function renderBanner(message: string): string {
  return `<div class="banner error">${escapeHtml(message)}</div>`;
}
