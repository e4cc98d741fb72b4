import { Choice, ComparisonView, SessionStatus } from './types.js';

/** Thin typed wrapper over the session HTTP API. */
export class PrefClient {
  constructor(
    private baseUrl: string = '',
    private fetchFn: typeof fetch = fetch.bind(globalThis),
  ) {}

  async createSession(): Promise<string> {
    const res = await this.fetchFn(`${this.baseUrl}/api/session`, { method: 'POST' });
    if (!res.ok) throw new Error(`session create failed: ${res.status}`);
    const body = await res.json();
    return body.id as string;
  }

  /** Resolves to null when no comparison is pending. */
  async next(sessionId: string): Promise<ComparisonView | null> {
    const res = await this.fetchFn(`${this.baseUrl}/api/session/${sessionId}/next`);
    if (!res.ok) throw new Error(`next failed: ${res.status}`);
    const body = await res.json();
    if (body.empty) return null;
    return {
      requestId: body.request_id,
      imageA: body.image_a,
      imageB: body.image_b,
      description: body.description,
    };
  }

  /** Returns false when the server rejects the request id as stale. */
  async submitChoice(sessionId: string, requestId: string, choice: Choice): Promise<boolean> {
    const res = await this.fetchFn(`${this.baseUrl}/api/session/${sessionId}/choice`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ request_id: requestId, choice }),
    });
    if (res.status === 404) return false;
    if (!res.ok) throw new Error(`choice failed: ${res.status}`);
    return true;
  }

  async status(sessionId: string): Promise<SessionStatus> {
    const res = await this.fetchFn(`${this.baseUrl}/api/session/${sessionId}/status`);
    if (!res.ok) throw new Error(`status failed: ${res.status}`);
    const body = await res.json();
    return { iter: body.iter, total: body.B, done: body.done, result: body.result };
  }
}
