export interface ComparisonView {
  requestId: string;
  imageA: string; // base64 PNG, no data: prefix
  imageB: string;
  description: string;
}

export interface SessionStatus {
  iter: number;
  total: number;
  done: boolean;
  result?: Record<string, unknown>;
}

export type Choice = 'A' | 'B';

/** What the UI should render right now. */
export type UiPhase = 'idle' | 'comparing' | 'locked' | 'done';

export interface UiState {
  phase: UiPhase;
  comparison: ComparisonView | null;
  status: SessionStatus | null;
  networkError: boolean;
}
