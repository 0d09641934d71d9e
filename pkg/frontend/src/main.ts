import { ApiClient } from './api.js';
import { attachKeyboard } from './keyboard.js';
import { SessionController, type UiState } from './state.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const statusPill = el<HTMLSpanElement>('status');
const countersBar = el<HTMLDivElement>('counters');
const viewer = el<HTMLDivElement>('viewer');
const imgOriginal = el<HTMLImageElement>('img-original');
const imgTransformed = el<HTMLImageElement>('img-transformed');
const pairCaption = el<HTMLDivElement>('pair-caption');
const metricsBody = el<HTMLTableSectionElement>('metrics-body');
const decisionNote = el<HTMLDivElement>('decision-note');
const summaryCard = el<HTMLDivElement>('summary');
const btnValid = el<HTMLButtonElement>('btn-valid');
const btnInvalid = el<HTMLButtonElement>('btn-invalid');
const btnOverlay = el<HTMLButtonElement>('btn-overlay');
const btnZoom = el<HTMLButtonElement>('btn-zoom');

const controller = new SessionController(new ApiClient(''), { onChange: render });

function toggleOverlay(): void {
  viewer.classList.toggle('overlay');
}

function toggleZoom(): void {
  viewer.classList.toggle('zoom');
}

function render(state: UiState): void {
  statusPill.textContent = state.phase;
  statusPill.dataset.phase = state.phase;

  const pair = state.pair;
  const labeling = state.phase === 'labeling' && pair !== null;
  btnValid.disabled = !labeling;
  btnInvalid.disabled = !labeling;

  if (pair) {
    // the <img> tags point straight at the API, untouched bytes
    if (imgOriginal.src !== pair.originalUrl) imgOriginal.src = pair.originalUrl;
    if (imgTransformed.src !== pair.transformedUrl) imgTransformed.src = pair.transformedUrl;
    pairCaption.textContent = pair.pairId;
    const c = pair.counters;
    countersBar.textContent =
      `labeled ${c.labeled} · pending ${c.pending} · ` +
      `auto-accepted ${c.autoAccepted} · remaining ${c.remaining}`;
    metricsBody.replaceChildren(
      ...Object.entries(pair.metricVector).map(([name, value]) => {
        const row = document.createElement('tr');
        row.innerHTML = `<td>${name}</td><td>${value.toFixed(4)}</td>`;
        return row;
      }),
    );
  } else if (state.session) {
    const counts = state.session.counts;
    countersBar.textContent = `${counts.d_val} of ${state.session.n_total} labeled`;
  }

  // confidence appears only after the decision is in, never alongside it
  if (state.lastDecision) {
    const d = state.lastDecision;
    const conf =
      d.modelConfidence === null ? '' : ` — model confidence was ${d.modelConfidence.toFixed(2)}`;
    decisionNote.textContent = `${d.pairId}: ${d.label}${conf}`;
  }

  summaryCard.hidden = state.phase !== 'done' && state.phase !== 'failed' && state.phase !== 'stopped';
  if (state.phase === 'done' && state.session?.summary) {
    const s = state.session.summary;
    const accuracy = s.accuracy === undefined ? 'n/a (no ground truth)' : s.accuracy.toFixed(4);
    summaryCard.innerHTML =
      '<h2>Session complete</h2>' +
      `<p>human effort ${s.effort.toFixed(4)} · manual labels ${s.manual_count} · ` +
      `iterations ${s.iterations} · accuracy ${accuracy}</p>`;
  } else if (state.phase === 'failed' || state.phase === 'stopped') {
    summaryCard.innerHTML = `<h2>Session ${state.phase}</h2><p>${state.error ?? ''}</p>`;
  }
}

btnValid.addEventListener('click', () => void controller.label('valid'));
btnInvalid.addEventListener('click', () => void controller.label('invalid'));
btnOverlay.addEventListener('click', toggleOverlay);
btnZoom.addEventListener('click', toggleZoom);

attachKeyboard(window, {
  onLabel: (label) => void controller.label(label),
  onToggleOverlay: toggleOverlay,
  onToggleZoom: toggleZoom,
});

void controller.start();
