/**
 * Annotator session state machine.
 *
 * The two-stage protocol is enforced structurally: a stage-2 submission can
 * only be issued from the 'awaiting-stage2' state, and the only transition
 * into that state is choosing "toxic" on a toxicity item. A request carrying
 * stage-2 categories with a non-toxic stage 1 is therefore unrepresentable.
 *
 * The server is the source of truth: the session keeps no queue state of its
 * own, so reconstructing it (page refresh) resumes at the correct next item.
 */

import { AnnotationApi, ApiError, Item } from './api.js';

export type SessionState =
  | { kind: 'loading' }
  | { kind: 'awaiting-stage1'; item: Item }
  | { kind: 'awaiting-stage2'; item: Item }
  | { kind: 'done' };

export interface Progress {
  labeled: number;
  total: number;
}

export class AnnotationSession {
  private state: SessionState = { kind: 'loading' };
  private inFlight = false;
  private progressCount: Progress = { labeled: 0, total: 0 };
  /** Banner for transport/5xx failures; the state itself is untouched. */
  private retryMessage: string | null = null;
  /** Inline message for 409/422 responses. */
  private inlineError: string | null = null;
  private listeners: Array<() => void> = [];

  constructor(
    private readonly api: AnnotationApi,
    readonly annotatorId: string,
  ) {}

  getState(): SessionState {
    return this.state;
  }

  getProgress(): Progress {
    return this.progressCount;
  }

  getRetryMessage(): string | null {
    return this.retryMessage;
  }

  getInlineError(): string | null {
    return this.inlineError;
  }

  isBusy(): boolean {
    return this.inFlight;
  }

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const l of this.listeners) l();
  }

  /** Load progress and the first pending item. */
  async start(): Promise<void> {
    await this.refreshProgress();
    await this.advance();
  }

  /** Re-attempt after a transport failure; the current state is preserved. */
  async retry(): Promise<void> {
    this.retryMessage = null;
    if (this.state.kind === 'loading' || this.state.kind === 'done') {
      await this.advance();
    } else {
      this.notify();
    }
  }

  /**
   * Stage-1 choice. Non-toxic/fake/real posts immediately and advances;
   * "toxic" on a toxicity item opens the stage-2 panel without posting.
   * Ignored while a request is in flight (double-click protection).
   */
  async chooseStage1(choice: string): Promise<void> {
    if (this.inFlight || this.state.kind !== 'awaiting-stage1') return;
    const item = this.state.item;
    this.inlineError = null;
    if (item.task === 'toxicity' && choice === 'toxic') {
      this.state = { kind: 'awaiting-stage2', item };
      this.notify();
      return;
    }
    await this.post({ item_id: item.id, annotator_id: this.annotatorId, stage1: choice });
  }

  /**
   * Stage-2 category submission; only reachable from 'awaiting-stage2', so
   * stage1 is always "toxic" here. An empty selection is allowed.
   */
  async submitStage2(categories: string[]): Promise<void> {
    if (this.inFlight || this.state.kind !== 'awaiting-stage2') return;
    const item = this.state.item;
    this.inlineError = null;
    await this.post({
      item_id: item.id,
      annotator_id: this.annotatorId,
      stage1: 'toxic',
      stage2: [...categories],
    });
  }

  private async post(body: {
    item_id: string;
    annotator_id: string;
    stage1: string;
    stage2?: string[];
  }): Promise<void> {
    this.inFlight = true;
    this.notify();
    try {
      await this.api.submitLabel(body);
    } catch (err) {
      this.inFlight = false;
      if (err instanceof ApiError && (err.status === 409 || err.status === 422)) {
        this.inlineError = err.message;
      } else {
        this.retryMessage = err instanceof Error ? err.message : String(err);
      }
      this.notify();
      return;
    }
    this.inFlight = false;
    this.progressCount = {
      labeled: this.progressCount.labeled + 1,
      total: this.progressCount.total,
    };
    await this.advance();
  }

  private async advance(): Promise<void> {
    this.inFlight = true;
    this.notify();
    try {
      const item = await this.api.nextItem(this.annotatorId);
      this.inFlight = false;
      this.retryMessage = null;
      this.state = item === null ? { kind: 'done' } : { kind: 'awaiting-stage1', item };
    } catch (err) {
      // keep the previous state; show a retry banner instead
      this.inFlight = false;
      this.retryMessage = err instanceof Error ? err.message : String(err);
    }
    this.notify();
  }

  private async refreshProgress(): Promise<void> {
    try {
      const p = await this.api.progress();
      this.progressCount = {
        labeled: p.annotators[this.annotatorId] ?? 0,
        total: p.items_total,
      };
    } catch {
      // progress is cosmetic; the banner will surface real connectivity issues
    }
  }
}
