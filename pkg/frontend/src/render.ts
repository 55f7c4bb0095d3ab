/** DOM rendering for the annotation session and the conflict dashboard. */

import { STAGE1_CHOICES, TOXICITY_CATEGORIES } from './api.js';
import { ConflictView } from './conflicts.js';
import { AnnotationSession } from './session.js';

function el(html: string): HTMLElement {
  const tpl = document.createElement('template');
  tpl.innerHTML = html.trim();
  return tpl.content.firstElementChild as HTMLElement;
}

function escapeHtml(s: string): string {
  return s.replace(/[&<>"']/g, (c) => `&#${c.charCodeAt(0)};`);
}

export function renderSession(root: HTMLElement, session: AnnotationSession): void {
  root.textContent = '';
  const state = session.getState();
  const progress = session.getProgress();

  const header = el(`<div class="progress">annotator <b>${escapeHtml(
    session.annotatorId,
  )}</b> — ${progress.labeled} / ${progress.total} labeled</div>`);
  root.appendChild(header);

  const banner = session.getRetryMessage();
  if (banner !== null) {
    const box = el(`<div class="banner error">service unavailable: ${escapeHtml(
      banner,
    )} <button id="retry">retry</button></div>`);
    box.querySelector('#retry')!.addEventListener('click', () => void session.retry());
    root.appendChild(box);
  }
  const inline = session.getInlineError();
  if (inline !== null) {
    root.appendChild(el(`<div class="banner warn">${escapeHtml(inline)}</div>`));
  }

  switch (state.kind) {
    case 'loading':
      root.appendChild(el('<p class="status">loading…</p>'));
      return;
    case 'done':
      root.appendChild(el('<p class="status">all items labeled — thank you!</p>'));
      return;
    case 'awaiting-stage1': {
      const item = state.item;
      root.appendChild(
        el(`<blockquote class="item" data-item-id="${escapeHtml(item.id)}">${escapeHtml(
          item.text,
        )}</blockquote>`),
      );
      root.appendChild(el(`<div class="meta">${item.task} · ${escapeHtml(item.source)}</div>`));
      const box = el('<div class="choices"></div>');
      STAGE1_CHOICES[item.task].forEach((choice, i) => {
        const btn = el(
          `<button class="stage1" data-choice="${choice}">${i + 1}&nbsp;·&nbsp;${choice}</button>`,
        ) as HTMLButtonElement;
        btn.disabled = session.isBusy();
        btn.addEventListener('click', () => void session.chooseStage1(choice));
        box.appendChild(btn);
      });
      root.appendChild(box);
      return;
    }
    case 'awaiting-stage2': {
      const item = state.item;
      root.appendChild(el(`<blockquote class="item">${escapeHtml(item.text)}</blockquote>`));
      root.appendChild(el('<div class="meta">marked <b>toxic</b> — pick the categories</div>'));
      const panel = el('<div class="stage2-panel"></div>');
      for (const cat of TOXICITY_CATEGORIES) {
        panel.appendChild(
          el(
            `<label><input type="checkbox" class="category" value="${cat}"> ${cat}</label>`,
          ),
        );
      }
      const submit = el('<button id="stage2-submit">submit categories</button>') as HTMLButtonElement;
      submit.disabled = session.isBusy();
      submit.addEventListener('click', () => {
        const chosen = Array.from(
          panel.querySelectorAll<HTMLInputElement>('input.category:checked'),
        ).map((c) => c.value);
        if (chosen.length === 0 && !window.confirm('No categories selected — submit as toxic with none?')) {
          return;
        }
        void session.submitStage2(chosen);
      });
      panel.appendChild(submit);
      root.appendChild(panel);
      return;
    }
  }
}

export function renderConflicts(root: HTMLElement, view: ConflictView): void {
  root.textContent = '';
  const kappa = view.cohenKappa === null
    ? (view.completeItems > 0 ? 'undefined (degenerate marginals)' : 'n/a')
    : view.cohenKappa.toFixed(3);
  const rate = view.rawAgreementRate === null ? 'n/a' : (view.rawAgreementRate * 100).toFixed(1) + '%';
  root.appendChild(
    el(`<div class="summary">
      <span>double-labeled: <b>${view.completeItems}</b></span>
      <span>retained: <b>${view.retained}</b></span>
      <span>discarded: <b>${view.discarded}</b></span>
      <span>incomplete: <b>${view.incomplete}</b></span>
      <span>agreement: <b>${rate}</b></span>
      <span>kappa: <b>${kappa}</b></span>
    </div>`),
  );
  const table = el(
    '<table class="conflicts"><thead><tr><th>item</th><th>labels</th><th>resolution</th></tr></thead><tbody></tbody></table>',
  );
  const body = table.querySelector('tbody')!;
  for (const row of view.rows) {
    const labels = Object.entries(row.labels)
      .map(([ann, lab]) => `${escapeHtml(ann)}: ${escapeHtml(lab)}`)
      .join(' · ');
    body.appendChild(
      el(`<tr class="${row.status}">
        <td>${escapeHtml(row.item_id)}</td>
        <td>${labels}</td>
        <td><span class="badge ${row.status}">${row.status}</span></td>
      </tr>`),
    );
  }
  root.appendChild(table);
}
