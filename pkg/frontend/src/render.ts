/** Thin DOM layer over ReviewStore; all state lives in the store. */

import type { FmeaRow, ReviewAction } from "./model.js";
import { ReviewStore, StatusFilter } from "./store.js";

const FILTERS: StatusFilter[] = ["all", "draft", "approved", "rejected", "edited"];

export function mount(root: HTMLElement, store: ReviewStore): void {
  store.subscribe(() => render(root, store));
  render(root, store);
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function render(root: HTMLElement, store: ReviewStore): void {
  root.replaceChildren();
  root.append(renderSidebar(store), renderMain(store));
}

function renderSidebar(store: ReviewStore): HTMLElement {
  const aside = el("aside", "sidebar");
  aside.append(el("h1", "title", "FMEA review"));
  const list = el("ul", "session-list");
  for (const sessionId of store.sessions) {
    const item = el("li", store.sessionId === sessionId ? "session active" : "session");
    const button = el("button", undefined, sessionId);
    button.addEventListener("click", () => void store.openSession(sessionId));
    item.append(button);
    list.append(item);
  }
  aside.append(list);
  const reload = el("button", "reload", "Reload sessions");
  reload.addEventListener("click", () => void store.loadSessions());
  aside.append(reload);
  return aside;
}

function renderMain(store: ReviewStore): HTMLElement {
  const main = el("main", "main");
  if (!store.summary || !store.sessionId) {
    main.append(el("p", "placeholder", "Select a session."));
    return main;
  }
  main.append(renderHeader(store), renderProgress(store), renderTable(store));
  if (store.trace) main.append(renderTrace(store));
  if (store.toast) main.append(el("div", "toast", store.toast));
  return main;
}

function renderHeader(store: ReviewStore): HTMLElement {
  const summary = store.summary!;
  const header = el("section", "header");
  header.append(el("h2", undefined, `${summary.asset_class} — ${summary.round}`));
  const stats = el("p", "stats");
  stats.textContent =
    `questions ${summary.questions.total} · answers ${summary.answers.total} · ` +
    `rows ${summary.fmea_rows.total} · follow-ups ${summary.followups_total}` +
    (summary.oos ? " · OUT OF SCOPE ASSET" : "");
  header.append(stats);

  const advance = el("button", "advance");
  if (store.advance.finalizedNotice) {
    advance.textContent = "Session finalized";
    advance.disabled = true;
    header.append(advance, el("p", "note", "All four rounds are complete; rows remain approvable."));
  } else {
    advance.textContent = store.advance.running ? "Round running…" : "Advance round";
    advance.disabled = store.advance.running;
    advance.addEventListener("click", () => void store.advanceRound());
    header.append(advance);
  }
  if (store.advance.retryAvailable) {
    const retry = el("button", "retry", "Backend unavailable — retry advance");
    retry.addEventListener("click", () => void store.advanceRound());
    header.append(retry);
  }
  const exportLink = el("a", "export", "Download CSV");
  exportLink.setAttribute("href", `/sessions/${store.sessionId}/fmea?format=csv`);
  header.append(exportLink);
  return header;
}

function renderProgress(store: ReviewStore): HTMLElement {
  const section = el("section", "progress");
  if (store.advance.lastReport) {
    const r = store.advance.lastReport;
    section.append(
      el(
        "p",
        "report",
        `Round ${r.round}: ${r.questions_processed} questions, ${r.answers_accepted} answers kept, ` +
          `${r.questions_filtered_useless} filtered useless, ${r.items_filtered_duplicate} duplicates, ` +
          `${r.followups_added} follow-ups, ${r.rows_emitted} rows`,
      ),
    );
  }
  if (store.advance.running || store.advance.progress.length > 0) {
    const feed = el("ul", "event-feed");
    for (const event of store.advance.progress.slice(-12)) {
      feed.append(el("li", `event event--${event.type}`, `#${event.seq} ${event.type}`));
    }
    section.append(feed);
  }
  return section;
}

function badge(status: string): HTMLElement {
  return el("span", `badge badge--${status}`, status);
}

function renderTable(store: ReviewStore): HTMLElement {
  const section = el("section", "table");
  const controls = el("div", "filters");
  for (const filter of FILTERS) {
    const button = el("button", store.filter === filter ? "filter active" : "filter", filter);
    button.addEventListener("click", () => store.setFilter(filter));
    controls.append(button);
  }
  section.append(controls);

  const table = el("table", "fmea");
  const head = el("tr");
  for (const column of ["rpn", "component", "failure mode", "cause", "effect", "S", "O", "D", "status", ""]) {
    head.append(el("th", undefined, column));
  }
  table.append(head);
  for (const row of store.visibleRows()) {
    table.append(renderRow(store, row));
  }
  section.append(table);
  return section;
}

function renderRow(store: ReviewStore, row: FmeaRow): HTMLElement {
  const tr = el("tr", `row row--${row.review_status}`);
  tr.dataset["rowId"] = row.id;
  for (const value of [row.rpn, row.component, row.failure_mode, row.cause, row.effect, row.severity, row.occurrence, row.detection]) {
    tr.append(el("td", undefined, String(value)));
  }
  const statusCell = el("td");
  statusCell.append(badge(row.review_status));
  tr.append(statusCell);

  const actions = el("td", "actions");
  for (const action of ["approve", "reject", "edit"] as ReviewAction[]) {
    const button = el("button", `action action--${action}`, action);
    button.addEventListener("click", () => {
      store.openComposer(row.id, action);
      if (action === "approve") void store.submitReview(row.id, "approve");
    });
    actions.append(button);
  }
  tr.append(actions);

  if (store.composer && store.composer.rowId === row.id && store.composer.action !== "approve") {
    tr.append(renderComposer(store, row));
  }
  return tr;
}

function renderComposer(store: ReviewStore, row: FmeaRow): HTMLElement {
  const composer = store.composer!;
  const cell = el("td", "composer");
  const comment = el("textarea", "comment");
  comment.placeholder = composer.action === "reject" ? "Reason (required)" : "Comment (optional)";
  comment.value = composer.comment;
  comment.addEventListener("input", () => {
    composer.comment = comment.value;
  });
  cell.append(comment);

  let severity: HTMLInputElement | null = null;
  if (composer.action === "edit") {
    severity = el("input", "edit-severity");
    severity.type = "number";
    severity.min = "1";
    severity.max = "10";
    severity.value = String(row.severity);
    cell.append(el("label", undefined, "severity"), severity);
  }

  const submit = el("button", "submit", composer.action === "reject" ? "Reject" : "Save edit");
  submit.addEventListener("click", () => {
    const edits =
      composer.action === "edit" && severity ? { severity: Number(severity.value) } : {};
    void store.submitReview(row.id, composer.action, comment.value, edits);
  });
  cell.append(submit);
  if (composer.error) {
    cell.append(el("p", "inline-error", composer.error));
  }
  return cell;
}

function renderTrace(store: ReviewStore): HTMLElement {
  const trace = store.trace!;
  const section = el("section", "trace");
  section.append(el("h3", undefined, "Answer provenance"));
  for (const step of trace.steps) {
    const block = el("div", "trace-step");
    block.append(el("h4", undefined, step.title));
    for (const line of step.lines) {
      block.append(el("p", undefined, line));
    }
    section.append(block);
  }
  const gate = el("div", "trace-step trace-gate");
  gate.append(el("h4", undefined, trace.gate.title));
  for (const line of trace.gate.lines) gate.append(el("p", undefined, line));
  section.append(gate);
  return section;
}
