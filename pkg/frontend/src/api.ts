import type { ClassifyResponse } from './state.js';

// Server rejects larger uploads with 413; checked client-side too so
// the user gets the message without waiting on a doomed request.
export const UPLOAD_LIMIT_BYTES = 16 * 1024 * 1024;
export const DEFAULT_TOP_K = 3;

export interface SpeciesEntry {
  label: string;
  display_name: string;
  description: string;
}

export interface HealthInfo {
  status: string;
  model: {
    name: string;
    version: string;
    classes: number;
    input_size: number[];
    parameters: number;
    quantized: boolean;
  };
}

export interface RequestOptions {
  baseUrl?: string;
  fetchFn?: typeof fetch;
  signal?: AbortSignal;
}

export class ApiError extends Error {
  readonly code: string;
  readonly status: number;

  constructor(message: string, code: string, status: number) {
    super(message);
    this.name = 'ApiError';
    this.code = code;
    this.status = status;
  }
}

function pickFetch(opts: RequestOptions): typeof fetch {
  const f = opts.fetchFn ?? (typeof fetch === 'function' ? fetch : undefined);
  if (!f) {
    throw new Error('no fetch implementation available');
  }
  return f;
}

async function throwApiError(response: Response): Promise<never> {
  let code = 'http_error';
  let message = `service responded with status ${response.status}`;
  try {
    const body = await response.json();
    if (body && body.error && typeof body.error.code === 'string') {
      code = body.error.code;
      message = String(body.error.message ?? message);
    }
  } catch {
    // non-JSON error body; keep the status-based message
  }
  throw new ApiError(message, code, response.status);
}

function isPrediction(p: unknown): boolean {
  const o = p as Record<string, unknown>;
  return (
    !!o &&
    typeof o.label === 'string' &&
    typeof o.probability === 'number' &&
    typeof o.description === 'string'
  );
}

/**
 * POST the image bytes and return the parsed prediction list. The
 * response is validated before use; everything rendered downstream
 * comes verbatim from this object.
 */
export async function classifyImage(
  image: Blob,
  k: number = DEFAULT_TOP_K,
  opts: RequestOptions = {},
): Promise<ClassifyResponse> {
  const f = pickFetch(opts);
  const base = opts.baseUrl ?? '';
  // Raw bytes rather than the Blob itself: works identically under
  // browsers and the node fetch used by the tests.
  const bytes = await image.arrayBuffer();
  const response = await f(`${base}/api/classify?k=${k}`, {
    method: 'POST',
    headers: { 'content-type': 'application/octet-stream' },
    body: bytes,
    signal: opts.signal,
  });
  if (!response.ok) {
    await throwApiError(response);
  }
  const body = (await response.json()) as ClassifyResponse;
  if (
    !body ||
    !Array.isArray(body.predictions) ||
    body.predictions.length === 0 ||
    !body.predictions.every(isPrediction) ||
    !body.model ||
    typeof body.model.name !== 'string'
  ) {
    throw new ApiError('service returned an unexpected response shape', 'bad_response', response.status);
  }
  return body;
}

export async function fetchSpecies(opts: RequestOptions = {}): Promise<SpeciesEntry[]> {
  const f = pickFetch(opts);
  const base = opts.baseUrl ?? '';
  const response = await f(`${base}/api/species`, { signal: opts.signal });
  if (!response.ok) {
    await throwApiError(response);
  }
  const body = await response.json();
  if (!body || !Array.isArray(body.species)) {
    throw new ApiError('species listing has an unexpected shape', 'bad_response', response.status);
  }
  return body.species as SpeciesEntry[];
}

export async function fetchHealth(opts: RequestOptions = {}): Promise<HealthInfo> {
  const f = pickFetch(opts);
  const base = opts.baseUrl ?? '';
  const response = await f(`${base}/healthz`, { signal: opts.signal });
  if (!response.ok) {
    await throwApiError(response);
  }
  return (await response.json()) as HealthInfo;
}
