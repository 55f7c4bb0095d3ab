/**
 * Conflict-review dashboard model: per-item annotator label pairs with their
 * retained/discarded resolution, plus summary counts.
 *
 * The server's /agreement payload is the single source of truth; the builder
 * re-tallies the rows and refuses payloads whose summary disagrees with its
 * own items, so the view can never drift from the service.
 */

import { AgreementPayload, AgreementRow } from './api.js';

export interface ConflictView {
  rows: AgreementRow[];
  retained: number;
  discarded: number;
  incomplete: number;
  completeItems: number;
  rawAgreementRate: number | null;
  cohenKappa: number | null;
  kappaUndefined: boolean;
}

export function buildConflictView(payload: AgreementPayload): ConflictView {
  const retained = payload.items.filter((r) => r.status === 'retained').length;
  const discarded = payload.items.filter((r) => r.status === 'discarded').length;
  if (retained !== payload.summary.retained || discarded !== payload.summary.discarded) {
    throw new Error(
      `inconsistent agreement payload: rows tally ${retained}/${discarded}, ` +
        `summary says ${payload.summary.retained}/${payload.summary.discarded}`,
    );
  }
  return {
    rows: payload.items,
    retained,
    discarded,
    incomplete: payload.summary.incomplete,
    completeItems: payload.complete_items,
    rawAgreementRate: payload.raw_agreement_rate,
    cohenKappa: payload.cohen_kappa,
    kappaUndefined: payload.kappa_undefined,
  };
}
