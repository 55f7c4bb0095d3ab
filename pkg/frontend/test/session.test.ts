import { describe, expect, it } from 'vitest';

import { AnnotationSession } from '../src/session.js';
import { FakeAnnotationServer, makeItems } from './fake_server.js';

function toxicitySetup(n = 4) {
  const server = new FakeAnnotationServer(makeItems(n, 'toxicity'), ['ann1', 'ann2']);
  const session = new AnnotationSession(server, 'ann1');
  return { server, session };
}

describe('session start', () => {
  it('renders the first item of a fresh campaign', async () => {
    const { session } = toxicitySetup();
    await session.start();
    const state = session.getState();
    expect(state.kind).toBe('awaiting-stage1');
    if (state.kind === 'awaiting-stage1') expect(state.item.id).toBe('i000');
    expect(session.getProgress()).toEqual({ labeled: 0, total: 4 });
  });

  it('shows the done screen when the queue is exhausted', async () => {
    const { server, session } = toxicitySetup(1);
    await server.submitLabel({ item_id: 'i000', annotator_id: 'ann1', stage1: 'non-toxic' });
    await session.start();
    expect(session.getState().kind).toBe('done');
  });
});

describe('stage-1 choices', () => {
  it('posts non-toxic immediately and advances', async () => {
    const { server, session } = toxicitySetup();
    await session.start();
    await session.chooseStage1('non-toxic');
    expect(server.recordCount()).toBe(1);
    expect(server.getRecord('i000', 'ann1')).toMatchObject({
      stage1: 'non-toxic',
      stage2: null,
    });
    const state = session.getState();
    expect(state.kind).toBe('awaiting-stage1');
    if (state.kind === 'awaiting-stage1') expect(state.item.id).toBe('i001');
    expect(session.getProgress().labeled).toBe(1);
  });

  it('opens the stage-2 panel for toxic without posting', async () => {
    const { server, session } = toxicitySetup();
    await session.start();
    await session.chooseStage1('toxic');
    expect(session.getState().kind).toBe('awaiting-stage2');
    expect(server.recordCount()).toBe(0);
  });

  it('fakenews tasks never reach the stage-2 state', async () => {
    const server = new FakeAnnotationServer(makeItems(2, 'fakenews'), ['ann1', 'ann2']);
    const session = new AnnotationSession(server, 'ann1');
    await session.start();
    await session.chooseStage1('fake');
    expect(session.getState().kind).toBe('awaiting-stage1');
    expect(server.getRecord('i000', 'ann1')).toMatchObject({ stage1: 'fake', stage2: null });
  });

  it('stage-2 submission is unreachable outside awaiting-stage2', async () => {
    const { server, session } = toxicitySetup();
    await session.start();
    // still awaiting stage 1: submitStage2 must be a no-op
    await session.submitStage2(['insult']);
    expect(server.recordCount()).toBe(0);
    expect(session.getState().kind).toBe('awaiting-stage1');
  });
});

describe('stage-2 submission', () => {
  it('posts the complete toxic record with chosen categories', async () => {
    const { server, session } = toxicitySetup();
    await session.start();
    await session.chooseStage1('toxic');
    await session.submitStage2(['insult', 'abuse']);
    expect(server.getRecord('i000', 'ann1')).toMatchObject({
      stage1: 'toxic',
      stage2: ['insult', 'abuse'],
    });
    const state = session.getState();
    if (state.kind === 'awaiting-stage1') expect(state.item.id).toBe('i001');
  });

  it('allows an empty category set', async () => {
    const { server, session } = toxicitySetup();
    await session.start();
    await session.chooseStage1('toxic');
    await session.submitStage2([]);
    expect(server.getRecord('i000', 'ann1')).toMatchObject({ stage1: 'toxic', stage2: [] });
  });

  it('keeps the panel open and surfaces a 422 inline', async () => {
    const { server, session } = toxicitySetup();
    await session.start();
    await session.chooseStage1('toxic');
    await session.submitStage2(['not-a-category']);
    expect(session.getState().kind).toBe('awaiting-stage2');
    expect(session.getInlineError()).toMatch(/category/);
    expect(server.recordCount()).toBe(0);
    // recovery: valid resubmission succeeds
    await session.submitStage2(['threat']);
    expect(server.recordCount()).toBe(1);
  });
});

describe('double-click protection', () => {
  it('ignores a second stage-1 click while a request is in flight', async () => {
    const { server, session } = toxicitySetup();
    await session.start();
    const first = session.chooseStage1('non-toxic');
    const second = session.chooseStage1('non-toxic'); // fired before first settles
    await Promise.all([first, second]);
    expect(server.recordCount()).toBe(1);
    expect(session.getInlineError()).toBeNull(); // no 409 surfaced
  });

  it('surfaces a genuine duplicate as a 409 inline error', async () => {
    const { server, session } = toxicitySetup();
    await session.start();
    await server.submitLabel({ item_id: 'i000', annotator_id: 'ann1', stage1: 'toxic' });
    await session.chooseStage1('non-toxic'); // stale client state
    expect(session.getInlineError()).toMatch(/already labeled/);
  });
});

describe('failure handling', () => {
  it('shows a retry banner and preserves state when the service is down', async () => {
    const { server, session } = toxicitySetup();
    await session.start();
    server.failNextRequests = 1;
    await session.chooseStage1('non-toxic');
    expect(session.getRetryMessage()).toMatch(/unreach|refused/i);
    // the current item is preserved: no state loss
    const state = session.getState();
    expect(state.kind).toBe('awaiting-stage1');
    if (state.kind === 'awaiting-stage1') expect(state.item.id).toBe('i000');
    expect(server.recordCount()).toBe(0);
    // recovery after the service returns
    await session.chooseStage1('non-toxic');
    expect(session.getRetryMessage()).toBeNull();
    expect(server.recordCount()).toBe(1);
  });

  it('keeps the last item when fetching the next one fails', async () => {
    const { server, session } = toxicitySetup();
    await session.start();
    server.failNextRequests = 2; // the POST succeeds? no: fail the POST+fetch
    await session.chooseStage1('non-toxic');
    // POST failed -> still on i000 with banner
    expect(session.getState().kind).toBe('awaiting-stage1');
    server.failNextRequests = 0;
    await session.retry();
    expect(session.getState().kind).toBe('awaiting-stage1');
  });
});

describe('refresh resume', () => {
  it('a rebuilt session resumes at the correct next item', async () => {
    const { server, session } = toxicitySetup(5);
    await session.start();
    await session.chooseStage1('non-toxic');
    await session.chooseStage1('toxic');
    await session.submitStage2(['abuse']);
    // simulate a page refresh: brand-new session over the same server
    const resumed = new AnnotationSession(server, 'ann1');
    await resumed.start();
    const state = resumed.getState();
    expect(state.kind).toBe('awaiting-stage1');
    if (state.kind === 'awaiting-stage1') expect(state.item.id).toBe('i002');
    expect(resumed.getProgress()).toEqual({ labeled: 2, total: 5 });
  });

  it('the two annotators have independent queues', async () => {
    const { server, session } = toxicitySetup(3);
    await session.start();
    await session.chooseStage1('non-toxic');
    const other = new AnnotationSession(server, 'ann2');
    await other.start();
    const state = other.getState();
    if (state.kind === 'awaiting-stage1') expect(state.item.id).toBe('i000');
  });
});

describe('progress', () => {
  it('is monotonically non-decreasing across the whole session', async () => {
    const { session } = toxicitySetup(4);
    const seen: number[] = [];
    session.onChange(() => seen.push(session.getProgress().labeled));
    await session.start();
    await session.chooseStage1('non-toxic');
    await session.chooseStage1('toxic');
    await session.submitStage2([]);
    await session.chooseStage1('non-toxic');
    await session.chooseStage1('non-toxic');
    expect(session.getState().kind).toBe('done');
    for (let i = 1; i < seen.length; i++) {
      expect(seen[i]).toBeGreaterThanOrEqual(seen[i - 1]);
    }
    expect(seen[seen.length - 1]).toBe(4);
  });
});
