// View state and its pure transitions. The screen only ever shows
// server-confirmed state: every mutation lands here as the service's
// response resource, never as an optimistic guess.

import type { Recommendation, SessionResource, TimelineEntry } from "./types.js";

export interface ViewState {
  phase: "setup" | "running";
  session: SessionResource | null;
  recommendation: Recommendation | null;
  batchSize: number;
  // batch entry in progress: one slot per recommended design
  pendingResults: (0 | 1 | null)[];
  deviateOpen: boolean;
  deviatePool: boolean[];
  timeline: TimelineEntry[];
  error: string | null;
  busy: boolean;
}

export function initialState(): ViewState {
  return {
    phase: "setup",
    session: null,
    recommendation: null,
    batchSize: 1,
    pendingResults: [],
    deviateOpen: false,
    deviatePool: [],
    timeline: [],
    error: null,
    busy: false,
  };
}

function lastEvent(
  previous: SessionResource | null,
  next: SessionResource,
): Pick<TimelineEntry, "event" | "design" | "result"> {
  const before = previous?.history.length ?? -1;
  if (next.history.length > before && next.history.length > 0) {
    const latest = next.history[next.history.length - 1];
    return { event: "observed", design: latest.design, result: latest.result };
  }
  if (previous && next.history.length < previous.history.length) {
    return { event: "undone", design: null, result: null };
  }
  return { event: "created", design: null, result: null };
}

/** Fold a fresh session resource from the service into the view. */
export function applySession(state: ViewState, resource: SessionResource): ViewState {
  const entry: TimelineEntry = {
    step: state.timeline.length,
    ...lastEvent(state.session, resource),
    report: resource.report,
  };
  return {
    ...state,
    phase: "running",
    session: resource,
    recommendation: null, // stale after any state change
    pendingResults: [],
    deviateOpen: false,
    deviatePool: new Array(resource.n).fill(false),
    timeline: [...state.timeline, entry],
    error: null,
  };
}

export function applyRecommendation(state: ViewState, rec: Recommendation): ViewState {
  return {
    ...state,
    recommendation: rec,
    pendingResults: new Array(rec.designs.length).fill(null),
  };
}

export function setPendingResult(state: ViewState, index: number, bit: 0 | 1): ViewState {
  const pendingResults = state.pendingResults.slice();
  pendingResults[index] = bit;
  return { ...state, pendingResults };
}

export function batchComplete(state: ViewState): boolean {
  return state.pendingResults.length > 0 && state.pendingResults.every((r) => r !== null);
}

export function toggleDeviate(state: ViewState): ViewState {
  return { ...state, deviateOpen: !state.deviateOpen };
}

export function toggleDeviatePatient(state: ViewState, index: number): ViewState {
  const deviatePool = state.deviatePool.slice();
  deviatePool[index] = !deviatePool[index];
  return { ...state, deviatePool };
}

export function deviateDesign(state: ViewState): string {
  return state.deviatePool.map((on) => (on ? "1" : "0")).join("");
}

export function setBatchSize(state: ViewState, size: number): ViewState {
  return { ...state, batchSize: Math.max(1, Math.floor(size)) };
}

export function setError(state: ViewState, message: string | null): ViewState {
  return { ...state, error: message };
}

export function setBusy(state: ViewState, busy: boolean): ViewState {
  return { ...state, busy };
}
