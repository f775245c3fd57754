// Dataset preview grid: first rows plus column kinds, straight from the
// upload response. csv, xlsx and parquet all arrive through the same
// endpoint and render through this one path.

import { escapeHtml } from "./panels.js";
import type { ApiError, UploadPreview } from "./types.js";

export const PREVIEW_ROW_LIMIT = 20;

export function renderPreviewGrid(preview: UploadPreview): string {
  const rows = preview.preview_rows.slice(0, PREVIEW_ROW_LIMIT);
  const header = preview.columns
    .map(
      (c) =>
        `<th><span class="col-name">${escapeHtml(c.name)}</span>` +
        `<span class="col-kind kind-${c.kind.toLowerCase()}">${c.kind}</span></th>`,
    )
    .join("");
  const body = rows
    .map(
      (row) =>
        "<tr>" +
        preview.columns
          .map((c) => `<td>${escapeHtml(formatCell(row[c.name]))}</td>`)
          .join("") +
        "</tr>",
    )
    .join("");
  const caption =
    `${preview.n_rows} rows × ${preview.n_cols} columns ` +
    `(${escapeHtml(preview.format)}), showing first ${rows.length}`;
  return (
    `<table class="preview-grid"><caption>${caption}</caption>` +
    `<thead><tr>${header}</tr></thead><tbody>${body}</tbody></table>`
  );
}

function formatCell(value: unknown): string {
  if (value === null || value === undefined) {
    return "";
  }
  return String(value);
}

export function renderErrorBanner(error: ApiError): string {
  return (
    `<div class="error-banner" data-status="${error.status}">` +
    `Upload failed (${error.status}): ${escapeHtml(error.detail)}</div>`
  );
}
