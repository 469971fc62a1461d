import { readFileSync } from 'node:fs';
import { join } from 'node:path';
import { beforeAll, beforeEach, describe, expect, inject, it, vi } from 'vitest';
import {
  CAMERA_DENIED_MESSAGE,
  NOT_IMAGE_MESSAGE,
  OVER_LIMIT_MESSAGE,
  formatPercent,
  initApp,
  type AppHandle,
} from '../src/app.js';
import {
  cannedResult,
  fakeStream,
  infoFetchStub,
  jsonResponse,
  setFiles,
  waitForPhase,
  waitUntil,
} from './helpers.js';

const serverUrl = inject('serverUrl');
const fixtureDir = inject('fixtureDir');
const realFetch = globalThis.fetch;

beforeAll(() => {
  // jsdom logs a noisy not-implemented error for media playback
  vi.spyOn(HTMLMediaElement.prototype, 'play').mockResolvedValue(undefined);
});

function mount(deps: Parameters<typeof initApp>[1] = {}): AppHandle {
  document.body.innerHTML = '';
  const root = document.createElement('div');
  document.body.appendChild(root);
  return initApp(root, {
    apiBase: serverUrl,
    fetchFn: realFetch,
    getUserMedia: async () => fakeStream(),
    ...deps,
  });
}

function fixtureFile(species: string, index = 0): File {
  const name = `${species}_${String(index).padStart(3, '0')}.png`;
  const bytes = readFileSync(join(fixtureDir, species, name));
  return new File([bytes], name, { type: 'image/png' });
}

function visible(handle: AppHandle, id: string): boolean {
  const element = handle.root.querySelector<HTMLElement>(`#${id}`);
  if (!element) {
    return false;
  }
  let node: HTMLElement | null = element;
  while (node) {
    if (node.hidden) {
      return false;
    }
    node = node.parentElement;
  }
  return true;
}

function text(handle: AppHandle, id: string): string {
  return handle.root.querySelector(`#${id}`)?.textContent ?? '';
}

describe('idle state', () => {
  it('shows the file and camera actions side by side', () => {
    const handle = mount();
    expect(handle.store.state.phase).toBe('idle');
    expect(visible(handle, 'pick-button')).toBe(true);
    expect(visible(handle, 'camera-button')).toBe(true);
    const camera = handle.root.querySelector<HTMLButtonElement>('#camera-button');
    expect(camera?.disabled).toBe(false);
  });

  it('disables the camera action with a tooltip when no camera exists', () => {
    const handle = mount({ getUserMedia: undefined });
    const camera = handle.root.querySelector<HTMLButtonElement>('#camera-button');
    expect(camera?.disabled).toBe(true);
    expect(camera?.title.length).toBeGreaterThan(0);
    expect(visible(handle, 'pick-button')).toBe(true);
  });

  it('limits the chooser to image types', () => {
    const handle = mount();
    const input = handle.root.querySelector<HTMLInputElement>('#file-input');
    expect(input?.accept).toBe('image/*');
  });
});

describe('file pick flow against the live service', () => {
  let handle: AppHandle;

  beforeEach(() => {
    handle = mount();
  });

  it('shows the species name, a percentage, and its introduction', async () => {
    const input = handle.root.querySelector<HTMLInputElement>('#file-input')!;
    setFiles(input, [fixtureFile('pine')]);
    await waitForPhase(handle.store, 'result');

    expect(visible(handle, 'result-section')).toBe(true);
    expect(text(handle, 'top-label')).toBe('pine');
    expect(text(handle, 'top-percent')).toMatch(/^\d+(\.\d+)?%$/);

    const species = await fetchSpeciesMap();
    expect(text(handle, 'top-description')).toBe(species.get('pine'));
  });

  it('renders every field verbatim from the service response', async () => {
    const input = handle.root.querySelector<HTMLInputElement>('#file-input')!;
    setFiles(input, [fixtureFile('magnolia')]);
    const state = await waitForPhase(handle.store, 'result');
    const top = state.result!.predictions[0]!;
    expect(text(handle, 'top-label')).toBe(top.label);
    expect(text(handle, 'top-percent')).toBe(formatPercent(top.probability));
    expect(text(handle, 'top-description')).toBe(top.description);
  });

  it('collapses the remaining predictions', async () => {
    const input = handle.root.querySelector<HTMLInputElement>('#file-input')!;
    setFiles(input, [fixtureFile('ginkgo')]);
    const state = await waitForPhase(handle.store, 'result');
    const details = handle.root.querySelector<HTMLDetailsElement>('#other-matches')!;
    expect(details.hidden).toBe(false);
    expect(details.open).toBe(false);
    const rows = handle.root.querySelectorAll('#other-list li');
    expect(rows.length).toBe(state.result!.predictions.length - 1);
  });

  it('returns to idle via identify another', async () => {
    const input = handle.root.querySelector<HTMLInputElement>('#file-input')!;
    setFiles(input, [fixtureFile('cypress')]);
    await waitForPhase(handle.store, 'result');
    handle.root.querySelector<HTMLButtonElement>('#again-button')!.click();
    expect(handle.store.state.phase).toBe('idle');
    expect(visible(handle, 'pick-button')).toBe(true);
    expect(visible(handle, 'camera-button')).toBe(true);
  });

  it('fills the footer from the health endpoint', async () => {
    await waitUntil(() => text(handle, 'model-line').includes('mini-inception'));
    expect(text(handle, 'model-line')).toContain('6 species');
    await waitUntil(() => text(handle, 'species-line').startsWith('Identifies:'));
  });

  async function fetchSpeciesMap(): Promise<Map<string, string>> {
    const response = await realFetch(`${serverUrl}/api/species`);
    const body = (await response.json()) as { species: { label: string; description: string }[] };
    return new Map(body.species.map((s) => [s.label, s.description]));
  }
});

describe('camera flow', () => {
  it('denied permission shows the files fallback and stays recoverable', async () => {
    const handle = mount({
      getUserMedia: () => Promise.reject(new DOMException('denied', 'NotAllowedError')),
    });
    handle.root.querySelector<HTMLButtonElement>('#camera-button')!.click();
    await waitForPhase(handle.store, 'error');

    expect(visible(handle, 'error-section')).toBe(true);
    expect(text(handle, 'error-message')).toBe(CAMERA_DENIED_MESSAGE);
    expect(text(handle, 'error-message')).toContain('choose a photo from your files');
    expect(visible(handle, 'retry-pick-button')).toBe(true);
    expect(visible(handle, 'reset-button')).toBe(true);

    handle.root.querySelector<HTMLButtonElement>('#reset-button')!.click();
    expect(handle.store.state.phase).toBe('idle');
  });

  it('opens the viewfinder while waiting on the stream', async () => {
    let release: (stream: MediaStream) => void = () => undefined;
    const handle = mount({
      getUserMedia: () => new Promise((resolve) => {
        release = resolve;
      }),
    });
    handle.root.querySelector<HTMLButtonElement>('#camera-button')!.click();
    expect(handle.store.state.phase).toBe('capturing');
    expect(visible(handle, 'shutter-button')).toBe(true);
    release(fakeStream());
    await waitUntil(() => {
      const video = handle.root.querySelector<HTMLVideoElement>('#viewfinder');
      return video?.srcObject != null;
    });
  });

  it('a missing camera device gets its own message', async () => {
    const handle = mount({
      getUserMedia: () => Promise.reject(new DOMException('none', 'NotFoundError')),
    });
    handle.root.querySelector<HTMLButtonElement>('#camera-button')!.click();
    await waitForPhase(handle.store, 'error');
    expect(text(handle, 'error-message')).toMatch(/no camera/i);
  });
});

describe('rejected inputs', () => {
  it('a non-image file shows an inline error and recovers', async () => {
    const handle = mount();
    const input = handle.root.querySelector<HTMLInputElement>('#file-input')!;
    setFiles(input, [new File(['hello'], 'notes.txt', { type: 'text/plain' })]);
    await waitForPhase(handle.store, 'error');
    expect(text(handle, 'error-message')).toBe(NOT_IMAGE_MESSAGE);

    handle.root.querySelector<HTMLButtonElement>('#reset-button')!.click();
    expect(handle.store.state.phase).toBe('idle');
    expect(visible(handle, 'pick-button')).toBe(true);
    expect(visible(handle, 'camera-button')).toBe(true);
  });

  it('an oversized photo is refused before upload', async () => {
    const handle = mount();
    const input = handle.root.querySelector<HTMLInputElement>('#file-input')!;
    const big = new File([new Uint8Array(20 * 1024 * 1024)], 'big.jpg', { type: 'image/jpeg' });
    setFiles(input, [big]);
    await waitForPhase(handle.store, 'error');
    expect(text(handle, 'error-message')).toBe(OVER_LIMIT_MESSAGE);
    expect(text(handle, 'error-message')).toContain('16 MB');
  });
});

describe('request lifecycle', () => {
  it('a new submission cancels the pending one', async () => {
    const signals: AbortSignal[] = [];
    const fetchStub = infoFetchStub((init) => {
      const signal = init?.signal as AbortSignal;
      signals.push(signal);
      if (signals.length === 1) {
        return new Promise<Response>((_, reject) => {
          signal.addEventListener('abort', () =>
            reject(new DOMException('aborted', 'AbortError')),
          );
        });
      }
      return jsonResponse(cannedResult('ginkgo'));
    });
    const handle = mount({ fetchFn: fetchStub });
    const input = handle.root.querySelector<HTMLInputElement>('#file-input')!;

    setFiles(input, [new File([new Uint8Array(16)], 'a.png', { type: 'image/png' })]);
    await waitUntil(() => signals.length === 1);
    setFiles(input, [new File([new Uint8Array(16)], 'b.png', { type: 'image/png' })]);
    await waitForPhase(handle.store, 'result');

    expect(signals.length).toBe(2);
    expect(signals[0]?.aborted).toBe(true);
    expect(text(handle, 'top-label')).toBe('ginkgo');
  });

  it('cancel during upload returns to idle', async () => {
    const fetchStub = infoFetchStub(
      (init) =>
        new Promise<Response>((_, reject) => {
          (init?.signal as AbortSignal).addEventListener('abort', () =>
            reject(new DOMException('aborted', 'AbortError')),
          );
        }),
    );
    const handle = mount({ fetchFn: fetchStub });
    const input = handle.root.querySelector<HTMLInputElement>('#file-input')!;
    setFiles(input, [new File([new Uint8Array(16)], 'a.png', { type: 'image/png' })]);
    await waitForPhase(handle.store, 'uploading');
    await waitUntil(() => visible(handle, 'cancel-upload-button'));
    handle.root.querySelector<HTMLButtonElement>('#cancel-upload-button')!.click();
    expect(handle.store.state.phase).toBe('idle');
  });

  it('a network failure reads as a friendly error', async () => {
    const fetchStub = infoFetchStub(() => {
      throw new TypeError('fetch failed');
    });
    const handle = mount({ fetchFn: fetchStub });
    const input = handle.root.querySelector<HTMLInputElement>('#file-input')!;
    setFiles(input, [new File([new Uint8Array(16)], 'a.png', { type: 'image/png' })]);
    await waitForPhase(handle.store, 'error');
    expect(text(handle, 'error-message')).toMatch(/could not reach/i);
  });
});

describe('result rendering', () => {
  it('a uniform six-way prediction draws six equal bars', async () => {
    const uniform = {
      predictions: ['cypress', 'ginkgo', 'locust', 'magnolia', 'pine', 'sycamore'].map(
        (label) => ({ label, probability: 1 / 6, description: `about ${label}` }),
      ),
      model: { name: 'mini-inception', version: '1' },
    };
    const handle = mount({ fetchFn: infoFetchStub(() => jsonResponse(uniform)) });
    const input = handle.root.querySelector<HTMLInputElement>('#file-input')!;
    setFiles(input, [new File([new Uint8Array(16)], 'a.png', { type: 'image/png' })]);
    await waitForPhase(handle.store, 'result');

    const fills = handle.root.querySelectorAll<HTMLElement>('.prob-fill');
    const widths = Array.from(fills).map((fill) => fill.style.width);
    expect(widths).toEqual(Array(6).fill('16.7%'));
  });

  it('formats round and fractional percentages the way people write them', () => {
    expect(formatPercent(0.99)).toBe('99%');
    expect(formatPercent(1 / 6)).toBe('16.7%');
    expect(formatPercent(1)).toBe('100%');
    expect(formatPercent(0.055)).toBe('5.5%');
  });
});
