import { PrefClient } from './client.js';
import { SessionController } from './controller.js';
import { Choice, UiState } from './types.js';

const POLL_MS = 1000;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function render(state: UiState): void {
  const banner = el<HTMLDivElement>('retry-banner');
  banner.hidden = !state.networkError;

  const progress = el<HTMLSpanElement>('progress');
  if (state.status) {
    progress.textContent = `comparison ${Math.min(state.status.iter + 1, state.status.total)} of ${state.status.total}`;
  }

  const pair = el<HTMLDivElement>('pair');
  const idle = el<HTMLDivElement>('idle');
  const done = el<HTMLDivElement>('done');
  pair.hidden = state.phase !== 'comparing' && state.phase !== 'locked';
  idle.hidden = state.phase !== 'idle';
  done.hidden = state.phase !== 'done';

  if (state.comparison) {
    el<HTMLImageElement>('img-a').src = `data:image/png;base64,${state.comparison.imageA}`;
    el<HTMLImageElement>('img-b').src = `data:image/png;base64,${state.comparison.imageB}`;
    el<HTMLParagraphElement>('description').textContent = state.comparison.description;
  }
  const locked = state.phase !== 'comparing';
  el<HTMLButtonElement>('btn-a').disabled = locked;
  el<HTMLButtonElement>('btn-b').disabled = locked;

  if (state.phase === 'done' && state.status?.result) {
    el<HTMLPreElement>('result').textContent = JSON.stringify(state.status.result, null, 2);
  }
}

export async function boot(): Promise<void> {
  const controller = new SessionController(new PrefClient());
  controller.onChange(render);

  const pick = (choice: Choice) => {
    void controller.choose(choice).then(() => controller.poll());
  };
  el<HTMLButtonElement>('btn-a').addEventListener('click', () => pick('A'));
  el<HTMLButtonElement>('btn-b').addEventListener('click', () => pick('B'));
  document.addEventListener('keydown', (ev) => {
    if (ev.key === 'a' || ev.key === 'A') pick('A');
    if (ev.key === 'b' || ev.key === 'B') pick('B');
  });

  await controller.start();
  await controller.poll();
  setInterval(() => void controller.poll(), POLL_MS);
}

if (typeof document !== 'undefined' && document.getElementById('pair')) {
  void boot();
}
