/**
 * Single-page bootstrap: annotate tab + conflict-review tab.
 *
 * The only client-side persistence is the annotator id (query parameter or
 * prompt); every other piece of state lives on the server, so a refresh
 * resumes exactly where the log says this annotator is.
 */

import { HttpApi, STAGE1_CHOICES } from './api.js';
import { buildConflictView } from './conflicts.js';
import { renderConflicts, renderSession } from './render.js';
import { AnnotationSession } from './session.js';

function annotatorId(): string {
  const fromQuery = new URLSearchParams(window.location.search).get('annotator');
  if (fromQuery) return fromQuery;
  const answer = window.prompt('annotator id:') ?? '';
  return answer.trim();
}

export function boot(): void {
  // ?api=http://127.0.0.1:8571 targets a service on another origin
  const base = new URLSearchParams(window.location.search).get('api') ?? '';
  const api = new HttpApi(base);
  const session = new AnnotationSession(api, annotatorId());
  const sessionRoot = document.getElementById('session')!;
  const conflictsRoot = document.getElementById('conflicts')!;

  session.onChange(() => renderSession(sessionRoot, session));

  // keyboard shortcuts: 1 / 2 pick the stage-1 choice for the current item
  document.addEventListener('keydown', (ev) => {
    const state = session.getState();
    if (state.kind !== 'awaiting-stage1') return;
    const choices = STAGE1_CHOICES[state.item.task];
    if (ev.key === '1') void session.chooseStage1(choices[0]);
    else if (ev.key === '2') void session.chooseStage1(choices[1]);
  });

  document.getElementById('tab-annotate')!.addEventListener('click', () => {
    sessionRoot.hidden = false;
    conflictsRoot.hidden = true;
  });
  document.getElementById('tab-conflicts')!.addEventListener('click', () => {
    sessionRoot.hidden = true;
    conflictsRoot.hidden = false;
    void api
      .agreement()
      .then((payload) => renderConflicts(conflictsRoot, buildConflictView(payload)))
      .catch((err) => {
        conflictsRoot.textContent = `failed to load agreement: ${String(err)}`;
      });
  });

  void session.start();
}

boot();
