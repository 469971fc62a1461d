import { readFileSync } from 'node:fs';
import { join } from 'node:path';
import { describe, expect, inject, it, vi } from 'vitest';
import { ApiError, classifyImage, fetchHealth, fetchSpecies } from '../src/api.js';
import { jsonResponse } from './helpers.js';

const serverUrl = inject('serverUrl');
const fixtureDir = inject('fixtureDir');
const realFetch = globalThis.fetch;

describe('classifyImage request shape', () => {
  it('sends raw bytes with the k parameter', async () => {
    const seen: { url?: string; init?: RequestInit } = {};
    const stub = vi.fn(async (url: RequestInfo | URL, init?: RequestInit) => {
      seen.url = String(url);
      seen.init = init;
      return jsonResponse({
        predictions: [{ label: 'pine', probability: 1, description: 'a pine' }],
        model: { name: 'm', version: '1' },
      });
    }) as unknown as typeof fetch;
    const blob = new Blob([new Uint8Array([1, 2, 3])], { type: 'image/png' });
    const result = await classifyImage(blob, 5, { baseUrl: 'http://example', fetchFn: stub });
    expect(result.predictions[0]?.label).toBe('pine');
    expect(seen.url).toBe('http://example/api/classify?k=5');
    expect(seen.init?.method).toBe('POST');
    expect((seen.init?.headers as Record<string, string>)['content-type']).toBe('application/octet-stream');
    expect((seen.init?.body as ArrayBuffer).byteLength).toBe(3);
  });

  it('maps a service error body onto ApiError', async () => {
    const stub = (async () =>
      jsonResponse({ error: { code: 'undecodable_image', message: 'bad bytes' } }, 400)) as typeof fetch;
    const blob = new Blob([new Uint8Array(4)]);
    const err = await classifyImage(blob, 3, { fetchFn: stub, baseUrl: 'http://x' }).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.code).toBe('undecodable_image');
    expect(err.status).toBe(400);
    expect(err.message).toBe('bad bytes');
  });

  it('survives a non-JSON error body', async () => {
    const stub = (async () => new Response('boom', { status: 502 })) as typeof fetch;
    const blob = new Blob([new Uint8Array(4)]);
    const err = await classifyImage(blob, 3, { fetchFn: stub, baseUrl: 'http://x' }).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.code).toBe('http_error');
    expect(err.status).toBe(502);
  });

  it('rejects a malformed success payload', async () => {
    const stub = (async () => jsonResponse({ predictions: [] })) as typeof fetch;
    const blob = new Blob([new Uint8Array(4)]);
    const err = await classifyImage(blob, 3, { fetchFn: stub, baseUrl: 'http://x' }).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.code).toBe('bad_response');
  });
});

describe('against the live service', () => {
  it('classifies a training image as its own species', async () => {
    const bytes = readFileSync(join(fixtureDir, 'pine', 'pine_001.png'));
    const blob = new Blob([bytes], { type: 'image/png' });
    const result = await classifyImage(blob, 6, { baseUrl: serverUrl, fetchFn: realFetch });
    expect(result.predictions[0]?.label).toBe('pine');
    const total = result.predictions.reduce((sum, p) => sum + p.probability, 0);
    expect(Math.abs(total - 1)).toBeLessThan(1e-6);
    expect(result.model.name).toBe('mini-inception');
  });

  it('surfaces the server code for undecodable uploads', async () => {
    const blob = new Blob([new TextEncoder().encode('not an image at all')]);
    const err = await classifyImage(blob, 3, { baseUrl: serverUrl, fetchFn: realFetch }).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(400);
    expect(err.code).toBe('undecodable_image');
  });

  it('lists the six species in label order', async () => {
    const species = await fetchSpecies({ baseUrl: serverUrl, fetchFn: realFetch });
    const labels = species.map((s) => s.label);
    expect(labels).toEqual(['cypress', 'ginkgo', 'locust', 'magnolia', 'pine', 'sycamore']);
    for (const entry of species) {
      expect(entry.description.length).toBeGreaterThan(0);
    }
  });

  it('reports a healthy model', async () => {
    const health = await fetchHealth({ baseUrl: serverUrl, fetchFn: realFetch });
    expect(health.status).toBe('ok');
    expect(health.model.classes).toBe(6);
    expect(health.model.input_size).toEqual([64, 64, 3]);
  });
});
