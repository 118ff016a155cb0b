// Decision timing uses the monotonic clock: wall-clock adjustments or a
// backgrounded tab can never produce negative durations, and a recorded
// duration is always at least 1ms (the server stores integer ms and a
// render-to-click time of zero is physically meaningless).

export class TrialTimer {
  private startedAt: number;

  constructor(private readonly now: () => number = () => performance.now()) {
    this.startedAt = this.now();
  }

  restart(): void {
    this.startedAt = this.now();
  }

  elapsedMs(): number {
    const elapsed = this.now() - this.startedAt;
    return Math.max(1, Math.round(elapsed));
  }
}
