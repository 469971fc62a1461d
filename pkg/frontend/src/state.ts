export type Phase = 'idle' | 'capturing' | 'uploading' | 'result' | 'error';

export interface Prediction {
  label: string;
  probability: number;
  description: string;
}

export interface ModelInfo {
  name: string;
  version: string;
}

export interface ClassifyResponse {
  predictions: Prediction[];
  model: ModelInfo;
}

export interface UiState {
  phase: Phase;
  previewUrl: string;
  result: ClassifyResponse | null;
  errorMessage: string;
}

export type Listener = (state: UiState) => void;

const INITIAL: UiState = {
  phase: 'idle',
  previewUrl: '',
  result: null,
  errorMessage: '',
};

/**
 * Holds the single UI state and enforces its invariants: a result
 * phase always carries at least one prediction, an error phase always
 * carries a message. Views subscribe and re-render on every change.
 */
export class Store {
  private current: UiState = INITIAL;
  private listeners: Listener[] = [];

  get state(): UiState {
    return this.current;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  toIdle(): void {
    this.set(INITIAL);
  }

  toCapturing(): void {
    this.set({ phase: 'capturing', previewUrl: '', result: null, errorMessage: '' });
  }

  toUploading(previewUrl: string): void {
    this.set({ phase: 'uploading', previewUrl, result: null, errorMessage: '' });
  }

  toResult(result: ClassifyResponse): void {
    if (!result || !Array.isArray(result.predictions) || result.predictions.length === 0) {
      throw new Error('result state needs at least one prediction');
    }
    this.set({ ...this.current, phase: 'result', result, errorMessage: '' });
  }

  toError(message: string): void {
    if (!message) {
      throw new Error('error state needs a message');
    }
    this.set({ ...this.current, phase: 'error', result: null, errorMessage: message });
  }

  private set(next: UiState): void {
    this.current = next;
    for (const listener of this.listeners.slice()) {
      listener(next);
    }
  }
}
