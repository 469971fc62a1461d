import type { ClassifyResponse, Phase, Store, UiState } from '../src/state.js';

export function waitForPhase(store: Store, phase: Phase, timeoutMs = 10000): Promise<UiState> {
  return new Promise((resolve, reject) => {
    if (store.state.phase === phase) {
      resolve(store.state);
      return;
    }
    const timer = setTimeout(() => {
      unsubscribe();
      reject(new Error(`timed out waiting for phase ${phase}, still at ${store.state.phase}`));
    }, timeoutMs);
    const unsubscribe = store.subscribe((state) => {
      if (state.phase === phase) {
        clearTimeout(timer);
        unsubscribe();
        resolve(state);
      }
    });
  });
}

export async function waitUntil(check: () => boolean, timeoutMs = 5000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (check()) {
      return;
    }
    await new Promise((resolve) => setTimeout(resolve, 25));
  }
  throw new Error('condition not met in time');
}

/** Simulate the user choosing files: jsdom's input.files is read-only. */
export function setFiles(input: HTMLInputElement, files: File[]): void {
  const fileList = {
    length: files.length,
    item: (i: number) => files[i] ?? null,
  } as FileList;
  files.forEach((file, i) => {
    Object.defineProperty(fileList, i, { value: file, enumerable: true });
  });
  Object.defineProperty(input, 'files', { value: fileList, configurable: true });
  input.dispatchEvent(new Event('change', { bubbles: true }));
}

export function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'content-type': 'application/json' },
  });
}

export function cannedResult(label: string, probability = 0.9, description = 'a tree'): ClassifyResponse {
  const rest = (1 - probability) / 2;
  return {
    predictions: [
      { label, probability, description },
      { label: 'other_a', probability: rest, description: 'another tree' },
      { label: 'other_b', probability: rest, description: 'yet another tree' },
    ],
    model: { name: 'mini-inception', version: '1' },
  };
}

export function fakeStream(): MediaStream {
  const track = { stop: () => undefined };
  return { getTracks: () => [track] } as unknown as MediaStream;
}

/** Fetch stub that answers the informational init requests. */
export function infoFetchStub(
  onClassify: (init: RequestInit | undefined) => Promise<Response> | Response,
): typeof fetch {
  return (async (url: RequestInfo | URL, init?: RequestInit) => {
    const path = String(url);
    if (path.includes('/api/classify')) {
      return onClassify(init);
    }
    if (path.includes('/api/species')) {
      return jsonResponse({ species: [] });
    }
    return jsonResponse({
      status: 'ok',
      model: {
        name: 'mini-inception',
        version: '1',
        classes: 6,
        input_size: [64, 64, 3],
        parameters: 0,
        quantized: false,
      },
    });
  }) as typeof fetch;
}
