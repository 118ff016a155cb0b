// Session flow: one trial on screen at a time, decisions submitted with
// render-to-click timing, no correctness feedback ever. Inputs disable
// while a submission is in flight; a failed send keeps the original
// timing and offers a retry; a duplicate rejection resyncs to the trial
// the server says is current.

import {
  ApiError,
  DecisionBody,
  StudyApi,
  TrialPayload,
  validateTrialPayload,
} from "./api.js";
import {
  renderBlockingError,
  renderCompletion,
  renderJoinForm,
  renderTrial,
  TrialViewHandles,
} from "./render.js";
import { TrialTimer } from "./timer.js";

export class TriageApp {
  private participantId = "";
  private timer: TrialTimer;
  private view: TrialViewHandles | null = null;
  private rating: number | undefined;
  private inFlight = false;
  private pendingRetry: DecisionBody | null = null;
  private currentTrial: TrialPayload | null = null;
  private keyHandler = (ev: KeyboardEvent) => this.onKey(ev);

  constructor(
    private readonly container: HTMLElement,
    private readonly api: StudyApi,
    now?: () => number,
  ) {
    this.timer = new TrialTimer(now);
  }

  start(): void {
    this.show(renderJoinForm({ onJoin: (pid, group) => void this.join(pid, group) }));
  }

  private show(node: HTMLElement): void {
    this.container.replaceChildren(node);
  }

  private async join(participantId: string, group: string): Promise<void> {
    try {
      await this.api.createSession(participantId, group);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // existing session: resume where the server left off
      } else {
        this.fatal(err);
        return;
      }
    }
    this.participantId = participantId;
    document.addEventListener("keydown", this.keyHandler);
    await this.nextTrial();
  }

  private async nextTrial(): Promise<void> {
    let payload: TrialPayload;
    try {
      payload = validateTrialPayload(await this.api.getTrial(this.participantId));
    } catch (err) {
      if (err instanceof ApiError && err.isSessionCompleted) {
        this.complete();
      } else {
        this.fatal(err);
      }
      return;
    }
    this.currentTrial = payload;
    this.rating = undefined;
    this.pendingRetry = null;
    this.view = renderTrial(payload, {
      onDecision: (d) => void this.submit(d),
      onRating: (r) => {
        this.rating = r;
      },
    });
    this.show(this.view.root);
    this.timer.restart(); // timing starts at first paint of the trial
  }

  private async submit(decision: "Escalate" | "Close"): Promise<void> {
    if (this.inFlight || !this.currentTrial) return;
    let body: DecisionBody;
    if (this.pendingRetry) {
      body = this.pendingRetry; // re-send as measured, timing untouched
    } else {
      body = {
        alert_id: this.currentTrial.alert_id,
        decision,
        decision_time_ms: this.timer.elapsedMs(),
      };
      if (this.rating !== undefined) {
        body.confidence_rating = this.rating;
      }
    }
    this.setBusy(true);
    try {
      const ack = await this.api.submitDecision(this.participantId, body);
      this.pendingRetry = null;
      this.setBusy(false);
      if (ack.completed) {
        this.complete();
      } else {
        await this.nextTrial();
      }
    } catch (err) {
      this.setBusy(false);
      if (err instanceof ApiError && err.isWrongTrial) {
        // server already counted a decision for this alert: resync
        this.pendingRetry = null;
        await this.nextTrial();
      } else if (err instanceof ApiError && err.isSessionCompleted) {
        this.complete();
      } else if (err instanceof ApiError) {
        this.fatal(err);
      } else {
        // network failure: keep the measured time, offer a retry
        this.pendingRetry = body;
        this.offerRetry();
      }
    }
  }

  private setBusy(busy: boolean): void {
    this.inFlight = busy;
    if (!this.view) return;
    this.view.escalateButton.disabled = busy;
    this.view.closeButton.disabled = busy;
    for (const b of this.view.ratingButtons) b.disabled = busy;
  }

  private offerRetry(): void {
    if (!this.view) return;
    this.view.statusLine.replaceChildren();
    this.view.statusLine.append(
      document.createTextNode("Could not reach the server. "),
    );
    const retry = document.createElement("button");
    retry.type = "button";
    retry.className = "retry";
    retry.textContent = "Retry";
    retry.addEventListener("click", () => {
      this.view?.statusLine.replaceChildren();
      void this.submit(this.pendingRetry!.decision);
    });
    this.view.statusLine.append(retry);
  }

  private complete(): void {
    document.removeEventListener("keydown", this.keyHandler);
    this.currentTrial = null;
    this.view = null;
    this.show(renderCompletion());
  }

  private fatal(err: unknown): void {
    document.removeEventListener("keydown", this.keyHandler);
    const message = err instanceof Error ? err.message : String(err);
    this.show(renderBlockingError(message));
  }

  private onKey(ev: KeyboardEvent): void {
    if (!this.view || this.inFlight) return;
    const target = ev.target as HTMLElement | null;
    if (target && (target.tagName === "INPUT" || target.tagName === "SELECT")) return;
    const key = ev.key.toLowerCase();
    if (key === "e") {
      this.view.escalateButton.click();
    } else if (key === "c") {
      this.view.closeButton.click();
    } else if (key >= "1" && key <= "5") {
      this.view.ratingButtons[Number(key) - 1].click();
    }
  }
}
