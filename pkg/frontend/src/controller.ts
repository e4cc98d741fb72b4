import { PrefClient } from './client.js';
import { Choice, ComparisonView, UiState } from './types.js';

export type StateListener = (state: UiState) => void;

/**
 * Session state machine driven entirely by poll responses.
 *
 * Exactly one comparison is actionable at a time. Once a choice is posted the
 * pair is locked (no second POST for the same request id, ever) until a poll
 * brings a comparison with a fresh request id.
 */
export class SessionController {
  private sessionId: string | null = null;
  private comparison: ComparisonView | null = null;
  private answered = new Set<string>();
  private posting = false;
  private state: UiState = { phase: 'idle', comparison: null, status: null, networkError: false };
  private listeners: StateListener[] = [];

  constructor(private client: PrefClient) {}

  onChange(fn: StateListener): void {
    this.listeners.push(fn);
  }

  getState(): UiState {
    return this.state;
  }

  private setState(patch: Partial<UiState>): void {
    this.state = { ...this.state, ...patch };
    for (const fn of this.listeners) fn(this.state);
  }

  async start(): Promise<void> {
    this.sessionId = await this.client.createSession();
  }

  /** One poll tick: refresh status, then the pending comparison. */
  async poll(): Promise<void> {
    if (!this.sessionId) return;
    try {
      const status = await this.client.status(this.sessionId);
      if (status.done) {
        this.comparison = null;
        this.setState({ phase: 'done', comparison: null, status, networkError: false });
        return;
      }
      const next = await this.client.next(this.sessionId);
      if (next === null) {
        this.comparison = null;
        this.setState({ phase: 'idle', comparison: null, status, networkError: false });
        return;
      }
      this.comparison = next;
      const locked = this.answered.has(next.requestId);
      this.setState({
        phase: locked ? 'locked' : 'comparing',
        comparison: next,
        status,
        networkError: false,
      });
    } catch {
      // Network trouble: keep whatever is on screen, show the retry banner.
      // No choice is ever fabricated or dropped here — submissions only
      // happen in choose().
      this.setState({ networkError: true });
    }
  }

  /**
   * Submit the human's choice for the currently shown pair. Silently ignores
   * the call when nothing is actionable (no pending pair, already answered,
   * or a POST is in flight), so double-clicks and repeated keypresses
   * produce at most one POST per request id.
   */
  async choose(choice: Choice): Promise<void> {
    const current = this.comparison;
    if (!this.sessionId || !current || this.posting) return;
    if (this.answered.has(current.requestId)) return;
    this.answered.add(current.requestId);
    this.posting = true;
    this.setState({ phase: 'locked' });
    try {
      const accepted = await this.client.submitChoice(this.sessionId, current.requestId, choice);
      if (!accepted) {
        // Stale request id: drop the pair and let the next poll resync.
        this.comparison = null;
        this.setState({ phase: 'idle', comparison: null });
      }
    } catch {
      // The POST may not have reached the server; allow a retry.
      this.answered.delete(current.requestId);
      this.setState({ phase: 'comparing', networkError: true });
    } finally {
      this.posting = false;
    }
  }
}
