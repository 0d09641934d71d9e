export type Label = 'valid' | 'invalid';

export type SessionStatus =
  | 'awaiting_labels'
  | 'computing'
  | 'done'
  | 'failed'
  | 'stopped';

export interface SessionCounts {
  d_v: number;
  d_nv: number;
  d_val: number;
  iteration: number;
  pending: number;
}

export interface SessionSummary {
  effort: number;
  manual_count: number;
  iterations: number;
  accuracy?: number;
}

export interface SessionInfo {
  session_id: string;
  status: SessionStatus;
  n_total: number;
  counts: SessionCounts;
  error?: string;
  summary?: SessionSummary;
}

export interface NextPair {
  pair_id: string;
  original_png_url: string;
  transformed_png_url: string;
  metric_vector: Record<string, number>;
  model_confidence: number | null;
}

/** Four buckets that always add up to the dataset size. */
export interface ProgressCounters {
  labeled: number;
  pending: number;
  autoAccepted: number;
  remaining: number;
}

/** Everything the screen needs for one queued pair. */
export interface PairView {
  pairId: string;
  originalUrl: string;
  transformedUrl: string;
  metricVector: Record<string, number>;
  modelConfidence: number | null;
  counters: ProgressCounters;
}

/** A submitted label; confidence is surfaced only through this record. */
export interface Decision {
  pairId: string;
  label: Label;
  modelConfidence: number | null;
}
