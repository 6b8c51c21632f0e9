// Wire types of the session service. All probability math happens on the
// server; the client only formats what it receives.

export interface Report {
  most_probable: string;
  confidence: number;
  marginals: number[];
  entropy_bits: number;
}

export interface HistoryEntry {
  design: string;
  result: 0 | 1;
}

export interface SessionResource {
  id: string;
  n: number;
  m: number;
  tpr: number;
  tnr: number;
  priors: number[];
  remaining_budget: number;
  history: HistoryEntry[];
  report: Report;
  created_at: string;
  updated_at: string;
}

export interface Alternative {
  design: string;
  expected_gain_bits: number;
}

export interface Recommendation {
  designs: string[];
  expected_gain_bits: number;
  alternatives: Alternative[];
  exhaustive: boolean;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  field?: string;
}

export interface CreateSessionRequest {
  n: number;
  m: number;
  tpr: number;
  tnr: number;
  priors: number[];
}

// One row of the client-side timeline: the report after each
// server-confirmed state change, in arrival order.
export interface TimelineEntry {
  step: number;
  event: "created" | "observed" | "undone";
  design: string | null;
  result: 0 | 1 | null;
  report: Report;
}
