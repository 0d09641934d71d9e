import type { Label, NextPair, SessionInfo } from './types.js';

/** Non-2xx response that is not part of the normal labeling flow. */
export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = 'ApiError';
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function detail(res: Response): Promise<string> {
  try {
    const body = (await res.json()) as { detail?: string };
    return body.detail ?? res.statusText;
  } catch {
    return res.statusText;
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  async session(): Promise<SessionInfo> {
    const res = await this.fetchFn(`${this.baseUrl}/api/session`);
    if (!res.ok) throw new ApiError(res.status, await detail(res));
    return (await res.json()) as SessionInfo;
  }

  /** Next pair awaiting a label, or null when nothing is queued right now. */
  async next(): Promise<NextPair | null> {
    const res = await this.fetchFn(`${this.baseUrl}/api/session/next`);
    if (res.status === 404) return null;
    if (!res.ok) throw new ApiError(res.status, await detail(res));
    return (await res.json()) as NextPair;
  }

  /**
   * Submit one label. A 409 means the server already has a label for the
   * pair (duplicate tab, resumed journal); callers treat it as "move on".
   */
  async submit(pairId: string, label: Label): Promise<'ok' | 'conflict'> {
    const res = await this.fetchFn(`${this.baseUrl}/api/session/label`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ pair_id: pairId, label }),
    });
    if (res.status === 409) return 'conflict';
    if (!res.ok) throw new ApiError(res.status, await detail(res));
    return 'ok';
  }
}

export type Sleep = (ms: number) => Promise<void>;

const defaultSleep: Sleep = (ms) => new Promise((r) => setTimeout(r, ms));

export interface RetryOptions {
  baseDelayMs?: number;
  maxDelayMs?: number;
  sleep?: Sleep;
}

/**
 * Run `fn` until the server answers, backing off exponentially on network
 * failures. HTTP-level errors (ApiError) are not retried: the request
 * arrived and the answer is final. A queued decision is therefore never
 * dropped by a flaky connection.
 */
export async function withRetry<T>(fn: () => Promise<T>, opts: RetryOptions = {}): Promise<T> {
  const base = opts.baseDelayMs ?? 250;
  const max = opts.maxDelayMs ?? 10_000;
  const sleep = opts.sleep ?? defaultSleep;
  let delay = base;
  for (;;) {
    try {
      return await fn();
    } catch (err) {
      if (err instanceof ApiError) throw err;
      await sleep(delay);
      delay = Math.min(delay * 2, max);
    }
  }
}
