import { ApiClient, withRetry, type RetryOptions, type Sleep } from './api.js';
import type {
  Decision,
  Label,
  NextPair,
  PairView,
  ProgressCounters,
  SessionInfo,
} from './types.js';

export type Phase =
  | 'loading'
  | 'labeling'
  | 'submitting'
  | 'computing'
  | 'done'
  | 'failed'
  | 'stopped';

export interface UiState {
  phase: Phase;
  pair: PairView | null;
  /** The last accepted submission; model confidence is only shown here. */
  lastDecision: Decision | null;
  session: SessionInfo | null;
  error: string | null;
}

/**
 * Split the session counts into the four progress buckets.
 *
 * The API does not separate human-labeled pairs from auto-accepted ones, so
 * we count this session's own loop submissions on top of the seed draw and
 * attribute the rest of D_val to the sweep. The four buckets always sum to
 * n_total because d_val + d_nv does.
 */
export function deriveCounters(info: SessionInfo, loopManual: number): ProgressCounters {
  const { d_v, d_nv, d_val, pending } = info.counts;
  const human = Math.min(d_v + loopManual, d_val);
  return {
    labeled: human,
    autoAccepted: d_val - human,
    pending,
    remaining: d_nv - pending,
  };
}

function toPairView(next: NextPair, counters: ProgressCounters): PairView {
  return {
    pairId: next.pair_id,
    originalUrl: next.original_png_url,
    transformedUrl: next.transformed_png_url,
    metricVector: next.metric_vector,
    modelConfidence: next.model_confidence,
    counters,
  };
}

export interface ControllerOptions {
  pollMs?: number;
  retry?: RetryOptions;
  sleep?: Sleep;
  onChange?: (state: UiState) => void;
}

/**
 * Client-side state machine for the labeling queue.
 *
 * One submission in flight at a time, and only ever for the pair currently
 * on screen; everything else is derived from the latest API responses.
 */
export class SessionController {
  state: UiState = {
    phase: 'loading',
    pair: null,
    lastDecision: null,
    session: null,
    error: null,
  };

  private loopManual = 0;
  private readonly pollMs: number;
  private readonly retry: RetryOptions;
  private readonly sleep: Sleep;
  private readonly onChange?: (state: UiState) => void;

  constructor(private readonly api: ApiClient, opts: ControllerOptions = {}) {
    this.pollMs = opts.pollMs ?? 750;
    this.sleep = opts.sleep ?? ((ms) => new Promise((r) => setTimeout(r, ms)));
    this.retry = { sleep: this.sleep, ...opts.retry };
    this.onChange = opts.onChange;
  }

  async start(): Promise<void> {
    await this.refresh();
  }

  /** Poll until the session is waiting on us or has reached a terminal state. */
  async refresh(): Promise<void> {
    for (;;) {
      const info = await withRetry(() => this.api.session(), this.retry);
      if (info.status === 'awaiting_labels') {
        const next = await withRetry(() => this.api.next(), this.retry);
        if (next === null) {
          // queue emptied between the two calls; ask again
          await this.sleep(this.pollMs);
          continue;
        }
        this.set({
          phase: 'labeling',
          session: info,
          pair: toPairView(next, deriveCounters(info, this.loopManual)),
          error: null,
        });
        return;
      }
      if (info.status === 'computing') {
        this.set({ phase: 'computing', session: info, pair: null });
        await this.sleep(this.pollMs);
        continue;
      }
      this.set({
        phase: info.status,
        session: info,
        pair: null,
        error: info.error ?? null,
      });
      return;
    }
  }

  /**
   * Label the pair currently on screen, then advance. A no-op when nothing
   * is displayed, so a label can never target an unseen pair. A 409 from
   * the server means the pair is already settled; we just move on.
   */
  async label(label: Label): Promise<void> {
    const pair = this.state.pair;
    if (this.state.phase !== 'labeling' || pair === null) return;
    this.set({ phase: 'submitting' });
    const outcome = await withRetry(() => this.api.submit(pair.pairId, label), this.retry);
    if (outcome === 'ok') {
      if (pair.modelConfidence !== null) this.loopManual += 1;
      this.set({
        lastDecision: { pairId: pair.pairId, label, modelConfidence: pair.modelConfidence },
      });
    }
    await this.refresh();
  }

  private set(patch: Partial<UiState>): void {
    this.state = { ...this.state, ...patch };
    this.onChange?.(this.state);
  }
}
