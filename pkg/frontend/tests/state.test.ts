import { describe, expect, it } from 'vitest';

import { ApiClient, type FetchLike } from '../src/api.js';
import { SessionController, deriveCounters, type UiState } from '../src/state.js';
import type { SessionInfo } from '../src/types.js';

const instantSleep = async (_ms: number) => {};

interface Stage {
  batch: string[];
  /** model confidence served with every pair of this batch */
  confidence: number | null;
  /** pairs the sweep auto-accepts when this batch commits */
  autoAfter?: number;
  /** session polls that report "computing" after this batch commits */
  computePolls?: number;
  /** pair that another client labels the moment we are shown it */
  stolen?: string;
}

/** In-memory stand-in for the labeling service, scripted as batches. */
class FakeServer {
  attempts: Array<{ pair_id: string; label: string }> = [];
  accepted: string[] = [];
  served: string[] = [];

  private stageIdx = 0;
  private unanswered: string[];
  private committed = 0;
  private computeLeft = 0;

  constructor(private readonly stages: Stage[], readonly nTotal: number) {
    this.unanswered = [...(stages[0]?.batch ?? [])];
  }

  private stage(): Stage | undefined {
    return this.stages[this.stageIdx];
  }

  private sessionPayload(): unknown {
    let status: string;
    if (this.computeLeft > 0) {
      this.computeLeft -= 1;
      status = 'computing';
    } else if (this.stage() === undefined) {
      status = 'done';
    } else {
      status = 'awaiting_labels';
    }
    const payload: Record<string, unknown> = {
      session_id: 'fake',
      status,
      n_total: this.nTotal,
      counts: {
        d_v: this.stages[0]?.batch.length ?? 0,
        d_nv: this.nTotal - this.committed,
        d_val: this.committed,
        iteration: this.stageIdx,
        pending: this.unanswered.length,
      },
    };
    if (status === 'done') {
      payload.summary = {
        effort: 0.5,
        manual_count: this.accepted.length,
        iterations: this.stages.length,
        accuracy: 1.0,
      };
    }
    return payload;
  }

  private commitIfBatchDone(): void {
    const stage = this.stage();
    if (stage === undefined || this.unanswered.length > 0) return;
    this.committed += stage.batch.length + (stage.autoAfter ?? 0);
    this.computeLeft = stage.computePolls ?? 0;
    this.stageIdx += 1;
    this.unanswered = [...(this.stage()?.batch ?? [])];
  }

  fetch: FetchLike = async (url, init) => {
    const json = (status: number, body: unknown) =>
      new Response(JSON.stringify(body), {
        status,
        headers: { 'content-type': 'application/json' },
      });

    if (url.endsWith('/api/session/next')) {
      const stage = this.stage();
      const pairId = this.unanswered[0];
      if (stage === undefined || pairId === undefined) {
        return json(404, { detail: 'no pending pair' });
      }
      this.served.push(pairId);
      if (stage.stolen === pairId) {
        // another tab beats us to it right after we fetched it
        this.unanswered = this.unanswered.filter((p) => p !== pairId);
        this.commitIfBatchDone();
      }
      return json(200, {
        pair_id: pairId,
        original_png_url: `/api/pairs/${pairId}/original`,
        transformed_png_url: `/api/pairs/${pairId}/transformed`,
        metric_vector: { vif: 0.9 },
        model_confidence: stage.confidence,
      });
    }

    if (url.endsWith('/api/session/label')) {
      const body = JSON.parse(String(init?.body)) as { pair_id: string; label: string };
      this.attempts.push(body);
      if (body.label !== 'valid' && body.label !== 'invalid') {
        return json(400, { detail: 'bad label' });
      }
      if (!this.unanswered.includes(body.pair_id)) {
        return json(409, { detail: 'already labeled' });
      }
      this.unanswered = this.unanswered.filter((p) => p !== body.pair_id);
      this.accepted.push(body.pair_id);
      this.commitIfBatchDone();
      return json(200, { pair_id: body.pair_id, status: 'x' });
    }

    if (url.endsWith('/api/session')) {
      return json(200, this.sessionPayload());
    }
    return json(404, { detail: `no route: ${url}` });
  };
}

function makeController(server: FakeServer): {
  controller: SessionController;
  snapshots: UiState[];
} {
  const snapshots: UiState[] = [];
  const controller = new SessionController(new ApiClient('', server.fetch), {
    pollMs: 1,
    sleep: instantSleep,
    onChange: (s) => snapshots.push(s),
  });
  return { controller, snapshots };
}

async function drive(controller: SessionController): Promise<void> {
  await controller.start();
  for (let guard = 0; guard < 200; guard += 1) {
    if (controller.state.phase !== 'labeling') return;
    await controller.label('valid');
  }
  throw new Error('labeling loop did not terminate');
}

describe('SessionController', () => {
  it('labels a 10-pair queue with exactly 10 posts, then reports done', async () => {
    const ids = Array.from({ length: 10 }, (_, i) => `p${i}`);
    const server = new FakeServer([{ batch: ids, confidence: null }], 10);
    const { controller } = makeController(server);

    await drive(controller);

    expect(server.attempts).toHaveLength(10);
    expect(server.accepted).toEqual(ids);
    expect(controller.state.phase).toBe('done');
    expect(controller.state.session?.summary?.manual_count).toBe(10);
  });

  it('only ever submits the pair it was last shown', async () => {
    const server = new FakeServer(
      [
        { batch: ['a', 'b', 'c'], confidence: null, computePolls: 1 },
        { batch: ['d', 'e'], confidence: 0.8, autoAfter: 5 },
      ],
      10,
    );
    const { controller } = makeController(server);
    await drive(controller);

    expect(server.attempts.map((a) => a.pair_id)).toEqual(server.served);
    // labeling after the run is over goes nowhere
    await controller.label('valid');
    expect(server.attempts).toHaveLength(5);
  });

  it('passes through computing between batches and keeps counter sums', async () => {
    const server = new FakeServer(
      [
        { batch: ['a', 'b', 'c'], confidence: null, computePolls: 2 },
        { batch: ['d', 'e'], confidence: 0.8, autoAfter: 5 },
      ],
      10,
    );
    const { controller, snapshots } = makeController(server);
    await drive(controller);

    const phases = snapshots.map((s) => s.phase);
    expect(phases).toContain('computing');
    expect(controller.state.phase).toBe('done');

    const withPair = snapshots.filter((s) => s.pair !== null);
    expect(withPair.length).toBeGreaterThan(0);
    for (const snap of withPair) {
      const c = snap.pair!.counters;
      expect(c.labeled + c.pending + c.autoAccepted + c.remaining).toBe(10);
    }
  });

  it('reveals model confidence only after the label is in', async () => {
    const server = new FakeServer(
      [
        { batch: ['a'], confidence: null },
        { batch: ['b'], confidence: 0.87, autoAfter: 3 },
      ],
      5,
    );
    const { controller, snapshots } = makeController(server);
    await drive(controller);

    // while pair b was on screen, the last decision still belonged to a
    const shownB = snapshots.find((s) => s.phase === 'labeling' && s.pair?.pairId === 'b');
    expect(shownB).toBeDefined();
    expect(shownB!.pair!.modelConfidence).toBe(0.87);
    expect(shownB!.lastDecision?.pairId).toBe('a');
    expect(shownB!.lastDecision?.modelConfidence).toBeNull();

    expect(controller.state.lastDecision).toEqual({
      pairId: 'b',
      label: 'valid',
      modelConfidence: 0.87,
    });
  });

  it('moves on silently when a submission conflicts', async () => {
    const server = new FakeServer(
      [{ batch: ['a', 'b', 'c'], confidence: null, stolen: 'b' }],
      3,
    );
    const { controller } = makeController(server);
    await drive(controller);

    expect(server.attempts.map((a) => a.pair_id)).toEqual(['a', 'b', 'c']);
    expect(server.accepted).toEqual(['a', 'c']);
    expect(controller.state.phase).toBe('done');
    expect(controller.state.error).toBeNull();
    // the rejected decision was not kept
    expect(controller.state.lastDecision?.pairId).toBe('c');
  });

  it('surfaces a failed session with its error text', async () => {
    const fetchFn: FetchLike = async () =>
      new Response(
        JSON.stringify({
          session_id: 'fake',
          status: 'failed',
          n_total: 5,
          counts: { d_v: 0, d_nv: 5, d_val: 0, iteration: 0, pending: 0 },
          error: 'ALError: boom',
        }),
        { status: 200, headers: { 'content-type': 'application/json' } },
      );
    const controller = new SessionController(new ApiClient('', fetchFn), {
      sleep: instantSleep,
    });
    await controller.start();
    expect(controller.state.phase).toBe('failed');
    expect(controller.state.error).toBe('ALError: boom');
  });
});

describe('deriveCounters', () => {
  const info = (counts: SessionInfo['counts']): SessionInfo => ({
    session_id: 'x',
    status: 'awaiting_labels',
    n_total: counts.d_v + 0 + counts.d_nv + counts.d_val,
    counts,
  });

  it('splits the seed phase with nothing validated yet', () => {
    const c = deriveCounters(
      info({ d_v: 0, d_nv: 40, d_val: 0, iteration: 0, pending: 12 }),
      0,
    );
    expect(c).toEqual({ labeled: 0, autoAccepted: 0, pending: 12, remaining: 28 });
  });

  it('credits this session loop labels on top of the seed', () => {
    const c = deriveCounters(
      info({ d_v: 12, d_nv: 10, d_val: 30, iteration: 4, pending: 3 }),
      3,
    );
    expect(c).toEqual({ labeled: 15, autoAccepted: 15, pending: 3, remaining: 7 });
    expect(c.labeled + c.autoAccepted + c.pending + c.remaining).toBe(40);
  });

  it('keeps the sum after a reload loses the session tally', () => {
    const c = deriveCounters(
      info({ d_v: 12, d_nv: 10, d_val: 30, iteration: 4, pending: 3 }),
      0,
    );
    expect(c.labeled).toBe(12);
    expect(c.labeled + c.autoAccepted + c.pending + c.remaining).toBe(40);
  });
});
