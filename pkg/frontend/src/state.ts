// Client view state. Manual threshold offsets are what-if overlays that
// live only in this object; they are never sent to the server.

import { ApiClient, ClusterParams, ClusterResponse } from './api';

export const RECLUSTER_DEBOUNCE_MS = 350;

export interface ViewState {
  params: ClusterParams;
  selectedCluster: string | null;
  selectedTerminal: string | null;
  dateCursor: string | null;
  alertSort: 'severity' | 'z_n';
  // terminal -> additive threshold offset, client-side only
  thresholdOffsets: Map<string, number>;
}

export function initialState(): ViewState {
  return {
    params: { rho: 0.15 },
    selectedCluster: null,
    selectedTerminal: null,
    dateCursor: null,
    alertSort: 'severity',
    thresholdOffsets: new Map(),
  };
}

export function setThresholdOffset(state: ViewState, terminal: string, offset: number): void {
  if (offset === 0) state.thresholdOffsets.delete(terminal);
  else state.thresholdOffsets.set(terminal, offset);
}

type ClusterListener = (clusters: ClusterResponse) => void;

// Debounces slider movement so the coalescing server sees one request
// per settled parameter set, and drops stale responses.
export class ReclusterScheduler {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private generation = 0;

  constructor(
    private api: ApiClient,
    private onClusters: ClusterListener,
    private debounceMs: number = RECLUSTER_DEBOUNCE_MS,
  ) {}

  request(params: ClusterParams): void {
    if (this.timer !== null) clearTimeout(this.timer);
    const gen = ++this.generation;
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.api.recluster(params).then((clusters) => {
        if (gen === this.generation) this.onClusters(clusters);
      });
    }, this.debounceMs);
  }

  pending(): boolean {
    return this.timer !== null;
  }
}
