// DOM construction for every screen. The signal panel renders exactly the
// fields present in the payload: nothing is derived client-side, so the
// server stays the single authority on what each condition may show.

import { TrialPayload } from "./api.js";

export const BAND_CLASS: Record<string, string> = {
  High: "band-high",
  Medium: "band-medium",
  Low: "band-low",
};

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

function formatValue(v: number): string {
  if (Number.isInteger(v)) return String(v);
  const abs = Math.abs(v);
  return abs !== 0 && (abs >= 1e6 || abs < 1e-3) ? v.toExponential(3) : v.toFixed(4);
}

export function formatPercent(p: number): string {
  return `${(100 * p).toFixed(1)}%`;
}

function signalPanel(trial: TrialPayload): HTMLElement {
  const panel = el("div", "signal-panel");
  if (trial.predicted_label !== undefined) {
    const row = el("div", "signal predicted-label");
    row.append(
      el("span", "signal-name", "Model verdict"),
      el("span", "signal-value", trial.predicted_label),
    );
    panel.append(row);
  }
  if (trial.raw_confidence !== undefined) {
    const row = el("div", "signal raw-confidence");
    row.append(
      el("span", "signal-name", "Model confidence"),
      el("span", "signal-value", formatPercent(trial.raw_confidence)),
    );
    panel.append(row);
  }
  if (trial.calibrated_confidence !== undefined) {
    const row = el("div", "signal calibrated-confidence");
    row.append(
      el("span", "signal-name", "Calibrated confidence"),
      el("span", "signal-value", formatPercent(trial.calibrated_confidence)),
    );
    panel.append(row);
  }
  if (trial.uncertainty_band !== undefined) {
    const chip = el(
      "span",
      `band-chip ${BAND_CLASS[trial.uncertainty_band] ?? ""}`,
      `${trial.uncertainty_band} uncertainty`,
    );
    const row = el("div", "signal uncertainty-band");
    row.append(el("span", "signal-name", "Uncertainty"), chip);
    panel.append(row);
  }
  if (trial.recommendation !== undefined) {
    const row = el("div", "signal recommendation");
    row.append(
      el("span", "signal-name", "Recommendation"),
      el("span", "signal-value", trial.recommendation),
    );
    panel.append(row);
  }
  return panel;
}

export interface TrialViewHandles {
  root: HTMLElement;
  escalateButton: HTMLButtonElement;
  closeButton: HTMLButtonElement;
  ratingButtons: HTMLButtonElement[];
  statusLine: HTMLElement;
}

export interface TrialViewCallbacks {
  onDecision: (decision: "Escalate" | "Close") => void;
  onRating: (rating: number | undefined) => void;
}

export function renderTrial(
  trial: TrialPayload,
  callbacks: TrialViewCallbacks,
): TrialViewHandles {
  const root = el("div", "trial");

  const header = el("div", "trial-header");
  header.append(
    el("span", "condition-badge", trial.condition),
    el(
      "span",
      "progress",
      `Block ${trial.block_index + 1} of ${trial.n_blocks} — ` +
        `alert ${trial.trial_index + 1} of ${trial.n_trials}`,
    ),
  );
  root.append(header);

  const table = el("table", "features");
  const body = document.createElement("tbody");
  for (const f of trial.features) {
    const row = document.createElement("tr");
    const name = el("td", "feature-name", f.name);
    const value = el("td", "feature-value", formatValue(f.value));
    row.append(name, value);
    body.append(row);
  }
  table.append(body);
  root.append(table);

  root.append(signalPanel(trial));

  const ratingBar = el("div", "rating-bar");
  ratingBar.append(el("span", "rating-label", "Confidence (optional, 1–5):"));
  const ratingButtons: HTMLButtonElement[] = [];
  let selected: number | undefined;
  for (let r = 1; r <= 5; r++) {
    const btn = el("button", "rating", String(r));
    btn.type = "button";
    btn.addEventListener("click", () => {
      selected = selected === r ? undefined : r;
      for (const b of ratingButtons) b.classList.remove("selected");
      if (selected !== undefined) btn.classList.add("selected");
      callbacks.onRating(selected);
    });
    ratingButtons.push(btn);
    ratingBar.append(btn);
  }
  root.append(ratingBar);

  const actions = el("div", "actions");
  const escalateButton = el("button", "decision escalate", "Escalate (E)");
  escalateButton.type = "button";
  escalateButton.addEventListener("click", () => callbacks.onDecision("Escalate"));
  const closeButton = el("button", "decision close", "Close (C)");
  closeButton.type = "button";
  closeButton.addEventListener("click", () => callbacks.onDecision("Close"));
  actions.append(escalateButton, closeButton);
  root.append(actions);

  const statusLine = el("div", "status");
  root.append(statusLine);

  return { root, escalateButton, closeButton, ratingButtons, statusLine };
}

export function renderCompletion(): HTMLElement {
  const root = el("div", "completion");
  root.append(
    el("h2", undefined, "Session complete"),
    el("p", undefined, "All three blocks are done. Thank you for participating."),
  );
  return root;
}

export function renderBlockingError(message: string): HTMLElement {
  const root = el("div", "fatal-error");
  root.append(
    el("h2", undefined, "Something went wrong"),
    el("p", "error-message", message),
    el("p", undefined, "Please contact the study coordinator."),
  );
  return root;
}

export interface JoinFormCallbacks {
  onJoin: (participantId: string, group: string) => void;
}

export function renderJoinForm(callbacks: JoinFormCallbacks): HTMLElement {
  const root = el("div", "join");
  root.append(el("h2", undefined, "Alert triage study"));
  const form = el("form");
  const idInput = el("input") as HTMLInputElement;
  idInput.name = "participant_id";
  idInput.placeholder = "participant id";
  idInput.required = true;
  const groupSelect = document.createElement("select");
  groupSelect.name = "group";
  for (const g of ["proxy_analyst", "practitioner"]) {
    const opt = document.createElement("option");
    opt.value = g;
    opt.textContent = g.replace("_", " ");
    groupSelect.append(opt);
  }
  const start = el("button", undefined, "Start");
  start.type = "submit";
  form.append(idInput, groupSelect, start);
  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    if (idInput.value.trim()) {
      callbacks.onJoin(idInput.value.trim(), groupSelect.value);
    }
  });
  root.append(form);
  return root;
}
