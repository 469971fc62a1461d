import { ApiError, DEFAULT_TOP_K, UPLOAD_LIMIT_BYTES, classifyImage, fetchHealth, fetchSpecies } from './api.js';
import { captureFrame, defaultGetUserMedia, startCamera, stopCamera, type GetUserMedia } from './camera.js';
import { downscaleImage } from './downscale.js';
import { Store, type ClassifyResponse, type Prediction, type UiState } from './state.js';

export interface AppDeps {
  apiBase?: string;
  fetchFn?: typeof fetch;
  getUserMedia?: GetUserMedia;
  maxUploadBytes?: number;
  downscaleFn?: (image: Blob, maxSide?: number) => Promise<Blob>;
  createPreviewUrl?: (image: Blob) => string;
  revokePreviewUrl?: (url: string) => void;
}

export interface AppHandle {
  store: Store;
  root: HTMLElement;
}

export const OVER_LIMIT_MESSAGE =
  'That photo is over the 16 MB upload limit. Try a smaller image.';
export const NOT_IMAGE_MESSAGE =
  'That file is not an image. Pick a JPEG or PNG photo.';
export const CAMERA_DENIED_MESSAGE =
  'Camera access was denied. You can still choose a photo from your files.';
export const NO_CAMERA_MESSAGE =
  'No camera was found on this device. Choose a photo from your files instead.';
export const NETWORK_ERROR_MESSAGE =
  'Could not reach the recognition service. Check your connection and try again.';
export const UNDECODABLE_MESSAGE =
  'That file could not be read as an image. Try a different photo.';

export function formatPercent(probability: number): string {
  const value = probability * 100;
  const rounded = value.toFixed(1);
  return (rounded.endsWith('.0') ? value.toFixed(0) : rounded) + '%';
}

function friendlyError(err: unknown): string {
  if (err instanceof ApiError) {
    if (err.code === 'undecodable_image') {
      return UNDECODABLE_MESSAGE;
    }
    if (err.code === 'payload_too_large') {
      return OVER_LIMIT_MESSAGE;
    }
    return `The service rejected the request: ${err.message}`;
  }
  return NETWORK_ERROR_MESSAGE;
}

// DOMException is not an Error subclass on every runtime, so read the
// name structurally instead of through instanceof.
function errorName(err: unknown): string {
  if (err && typeof err === 'object' && 'name' in err) {
    return String((err as { name?: unknown }).name ?? '');
  }
  return '';
}

function isAbort(err: unknown): boolean {
  return errorName(err) === 'AbortError';
}

function defaultPreviewUrl(image: Blob): string {
  // jsdom has no createObjectURL; an empty string just hides the
  // preview image, everything else still works.
  if (typeof URL !== 'undefined' && typeof URL.createObjectURL === 'function') {
    return URL.createObjectURL(image);
  }
  return '';
}

function defaultRevokeUrl(url: string): void {
  if (url && typeof URL !== 'undefined' && typeof URL.revokeObjectURL === 'function') {
    URL.revokeObjectURL(url);
  }
}

const PAGE = `
  <header class="masthead">
    <h1>Canopy field guide</h1>
    <p class="tagline">Point it at a tree and learn its name.</p>
  </header>
  <main>
    <section id="idle-section">
      <div class="actions">
        <button id="pick-button" type="button">Choose a photo</button>
        <button id="camera-button" type="button">Use the camera</button>
      </div>
      <input id="file-input" type="file" accept="image/*" hidden>
      <p id="species-line" class="species-line"></p>
    </section>
    <section id="camera-section" hidden>
      <video id="viewfinder" autoplay playsinline muted></video>
      <div class="actions">
        <button id="shutter-button" type="button">Take the photo</button>
        <button id="cancel-camera-button" type="button">Back</button>
      </div>
    </section>
    <section id="uploading-section" hidden>
      <img id="uploading-preview" class="preview" alt="Selected photo">
      <p class="status-line">Identifying&hellip;</p>
      <div class="actions">
        <button id="cancel-upload-button" type="button">Cancel</button>
      </div>
    </section>
    <section id="result-section" hidden>
      <img id="result-preview" class="preview" alt="Identified photo">
      <h2 id="top-label"></h2>
      <div class="prob-bar"><div id="top-fill" class="prob-fill"></div></div>
      <p id="top-percent" class="percent"></p>
      <p id="top-description" class="description"></p>
      <details id="other-matches" hidden>
        <summary>Other possibilities</summary>
        <ul id="other-list"></ul>
      </details>
      <div class="actions">
        <button id="again-button" type="button">Identify another</button>
      </div>
    </section>
    <section id="error-section" hidden>
      <p id="error-message" class="error-message" role="alert"></p>
      <div class="actions">
        <button id="retry-pick-button" type="button">Choose from files instead</button>
        <button id="reset-button" type="button">Start over</button>
      </div>
    </section>
  </main>
  <footer>
    <p id="model-line" class="model-line"></p>
  </footer>
`;

export function initApp(root: HTMLElement, deps: AppDeps = {}): AppHandle {
  const apiBase = deps.apiBase ?? '';
  const fetchFn = deps.fetchFn;
  const getUserMedia = deps.getUserMedia ?? defaultGetUserMedia();
  const maxUploadBytes = deps.maxUploadBytes ?? UPLOAD_LIMIT_BYTES;
  const downscaleFn = deps.downscaleFn ?? downscaleImage;
  const createPreviewUrl = deps.createPreviewUrl ?? defaultPreviewUrl;
  const revokePreviewUrl = deps.revokePreviewUrl ?? defaultRevokeUrl;

  root.innerHTML = PAGE;
  const el = <T extends HTMLElement>(id: string): T => {
    const found = root.querySelector<T>(`#${id}`);
    if (!found) {
      throw new Error(`missing element #${id}`);
    }
    return found;
  };

  const sections: Record<UiState['phase'], HTMLElement> = {
    idle: el('idle-section'),
    capturing: el('camera-section'),
    uploading: el('uploading-section'),
    result: el('result-section'),
    error: el('error-section'),
  };
  const fileInput = el<HTMLInputElement>('file-input');
  const cameraButton = el<HTMLButtonElement>('camera-button');
  const viewfinder = el<HTMLVideoElement>('viewfinder');

  const store = new Store();
  let inflight: AbortController | null = null;
  let stream: MediaStream | null = null;
  let previewUrl = '';

  if (!getUserMedia) {
    cameraButton.disabled = true;
    cameraButton.title = 'No camera is available in this browser.';
  }

  function setPreview(url: string): void {
    if (previewUrl && previewUrl !== url) {
      revokePreviewUrl(previewUrl);
    }
    previewUrl = url;
  }

  function render(state: UiState): void {
    for (const [phase, section] of Object.entries(sections)) {
      section.hidden = phase !== state.phase;
    }
    const uploadingPreview = el<HTMLImageElement>('uploading-preview');
    uploadingPreview.src = state.previewUrl;
    uploadingPreview.hidden = !state.previewUrl;
    if (state.phase === 'result' && state.result) {
      renderResult(state.result, state.previewUrl);
    }
    if (state.phase === 'error') {
      el('error-message').textContent = state.errorMessage;
    }
  }

  function renderResult(result: ClassifyResponse, preview: string): void {
    const [top, ...rest] = result.predictions as [Prediction, ...Prediction[]];
    const resultPreview = el<HTMLImageElement>('result-preview');
    resultPreview.src = preview;
    resultPreview.hidden = !preview;
    el('top-label').textContent = top.label;
    el('top-fill').style.width = formatPercent(top.probability);
    el('top-percent').textContent = formatPercent(top.probability);
    el('top-description').textContent = top.description;

    const details = el<HTMLDetailsElement>('other-matches');
    const list = el<HTMLUListElement>('other-list');
    list.textContent = '';
    details.hidden = rest.length === 0;
    details.open = false;
    for (const p of rest) {
      const item = document.createElement('li');
      const name = document.createElement('span');
      name.className = 'other-label';
      name.textContent = p.label;
      const bar = document.createElement('div');
      bar.className = 'prob-bar prob-bar-small';
      const fill = document.createElement('div');
      fill.className = 'prob-fill';
      fill.style.width = formatPercent(p.probability);
      bar.appendChild(fill);
      const percent = document.createElement('span');
      percent.className = 'percent';
      percent.textContent = formatPercent(p.probability);
      item.append(name, bar, percent);
      list.appendChild(item);
    }
  }

  async function classifyBlob(image: Blob): Promise<void> {
    setPreview(createPreviewUrl(image));
    store.toUploading(previewUrl);
    let payload: Blob;
    try {
      payload = await downscaleFn(image);
    } catch {
      payload = image;
    }
    if (payload.size > maxUploadBytes) {
      store.toError(OVER_LIMIT_MESSAGE);
      return;
    }
    // One request in flight at a time: a new submission cancels the
    // previous one instead of racing it.
    inflight?.abort();
    const controller = new AbortController();
    inflight = controller;
    try {
      const result = await classifyImage(payload, DEFAULT_TOP_K, {
        baseUrl: apiBase,
        fetchFn,
        signal: controller.signal,
      });
      if (controller === inflight) {
        store.toResult(result);
      }
    } catch (err) {
      if (isAbort(err) || controller !== inflight) {
        return;
      }
      store.toError(friendlyError(err));
    }
  }

  function handleFile(file: File): void {
    if (!file.type.startsWith('image/')) {
      store.toError(NOT_IMAGE_MESSAGE);
      return;
    }
    void classifyBlob(file);
  }

  function closeCamera(): void {
    stopCamera(stream);
    stream = null;
    viewfinder.srcObject = null;
  }

  async function openCamera(): Promise<void> {
    if (!getUserMedia) {
      return;
    }
    store.toCapturing();
    try {
      stream = await startCamera(viewfinder, getUserMedia);
    } catch (err) {
      closeCamera();
      const name = errorName(err);
      if (name === 'NotAllowedError' || name === 'SecurityError') {
        store.toError(CAMERA_DENIED_MESSAGE);
      } else if (name === 'NotFoundError') {
        store.toError(NO_CAMERA_MESSAGE);
      } else {
        store.toError(NETWORK_ERROR_MESSAGE);
      }
    }
  }

  async function takePhoto(): Promise<void> {
    try {
      const frame = await captureFrame(viewfinder);
      closeCamera();
      await classifyBlob(frame);
    } catch (err) {
      closeCamera();
      store.toError(err instanceof Error && err.message ? err.message : NETWORK_ERROR_MESSAGE);
    }
  }

  function reset(): void {
    inflight?.abort();
    inflight = null;
    closeCamera();
    setPreview('');
    fileInput.value = '';
    store.toIdle();
  }

  el('pick-button').addEventListener('click', () => fileInput.click());
  el('retry-pick-button').addEventListener('click', () => fileInput.click());
  fileInput.addEventListener('change', () => {
    const file = fileInput.files?.[0];
    if (file) {
      handleFile(file);
    }
    // no file selected: the chooser was cancelled, stay as we are
  });
  cameraButton.addEventListener('click', () => void openCamera());
  el('shutter-button').addEventListener('click', () => void takePhoto());
  el('cancel-camera-button').addEventListener('click', reset);
  el('cancel-upload-button').addEventListener('click', reset);
  el('again-button').addEventListener('click', reset);
  el('reset-button').addEventListener('click', reset);

  store.subscribe(render);
  render(store.state);

  // Informational fetches; the app works even if they fail.
  void fetchHealth({ baseUrl: apiBase, fetchFn })
    .then((health) => {
      el('model-line').textContent =
        `model ${health.model.name} v${health.model.version}, ${health.model.classes} species`;
    })
    .catch(() => undefined);
  void fetchSpecies({ baseUrl: apiBase, fetchFn })
    .then((species) => {
      el('species-line').textContent =
        'Identifies: ' + species.map((s) => s.display_name).join(', ');
    })
    .catch(() => undefined);

  return { store, root };
}
