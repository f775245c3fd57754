// Dual-panel view model derived from the step event stream.
//
// The right panel lists technical detail for every event; the left panel
// lists plain-language summaries for events that carry one. Entries are
// append-only and strictly in event order; replayed events (same or lower
// sequence number, e.g. after an SSE reconnect) are ignored, so replay
// plus live tail never duplicates or drops an entry.

import type { StepEvent } from "./types.js";

export interface PanelEntry {
  seq: number;
  stepName: string;
  text: string;
}

export interface PanelViewModel {
  technicalEntries: PanelEntry[];
  plainEntries: PanelEntry[];
  lastSeq: number;
}

export function emptyPanels(): PanelViewModel {
  return { technicalEntries: [], plainEntries: [], lastSeq: -1 };
}

export function applyEvent(vm: PanelViewModel, event: StepEvent): PanelViewModel {
  if (event.seq <= vm.lastSeq) {
    return vm; // replayed or duplicated event
  }
  const technical = [
    ...vm.technicalEntries,
    { seq: event.seq, stepName: event.step_name, text: event.technical_detail },
  ];
  const plain =
    event.plain_summary === null || event.plain_summary === ""
      ? vm.plainEntries
      : [...vm.plainEntries, { seq: event.seq, stepName: event.step_name, text: event.plain_summary }];
  return { technicalEntries: technical, plainEntries: plain, lastSeq: event.seq };
}

export function applyEvents(vm: PanelViewModel, events: StepEvent[]): PanelViewModel {
  return events.reduce(applyEvent, vm);
}

/** Every plain entry must correspond to a technical entry with the same seq. */
export function panelsConsistent(vm: PanelViewModel): boolean {
  const technicalSeqs = new Set(vm.technicalEntries.map((e) => e.seq));
  const ordered = (entries: PanelEntry[]) =>
    entries.every((e, i) => i === 0 || entries[i - 1].seq < e.seq);
  return (
    vm.plainEntries.every((e) => technicalSeqs.has(e.seq)) &&
    ordered(vm.technicalEntries) &&
    ordered(vm.plainEntries)
  );
}

export function renderPanel(entries: PanelEntry[], className: string): string {
  const items = entries
    .map(
      (e) =>
        `<li class="panel-entry" data-seq="${e.seq}">` +
        `<span class="step-name">${escapeHtml(e.stepName)}</span> ` +
        `<span class="step-text">${escapeHtml(e.text)}</span></li>`,
    )
    .join("");
  return `<ul class="${className}">${items}</ul>`;
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}
