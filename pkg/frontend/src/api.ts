// Typed client for the /v1 analytics service. Every number the UI shows
// comes through here; nothing reads artifact files directly.

export interface TerminalInfo {
  terminal: string;
  latitude: number;
  longitude: number;
  first_active_date: string;
}

export interface GeoJsonFeature {
  type: 'Feature';
  geometry: { type: string; coordinates: number[] | number[][] };
  properties: Record<string, unknown>;
}

export interface ClusterResponse {
  assignment: Record<string, string>;
  sizes: Record<string, number>;
  n_clusters: number;
  geojson: { type: 'FeatureCollection'; features: GeoJsonFeature[] };
  meta: Record<string, unknown>;
}

export interface DepthRow {
  terminal: string;
  date: string;
  partition: string;
  depth: number;
  threshold: number | null;
  z: number | null;
  status: 'ok' | 'insufficient_data';
}

export interface AlertRow {
  rank: number;
  date: string;
  cluster: string;
  severity: number | null;
  direction: 'positive' | 'negative';
  z_n: number;
  detected_terminals: string[];
  co_cluster_terminals: string[];
}

export interface HeatmapResponse {
  dates: string[];
  clusters: string[];
  severity: (number | null)[][];
}

export interface ClusterParams {
  rho: number;
  R?: number;
  din?: number;
  dout?: number;
}

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function getJson<T>(url: string): Promise<T> {
  const resp = await fetch(url);
  if (!resp.ok) {
    const body = await resp.text();
    throw new ApiError(resp.status, body);
  }
  return resp.json() as Promise<T>;
}

export class ApiClient {
  constructor(private base: string = '') {}

  getTerminals(): Promise<TerminalInfo[]> {
    return getJson(`${this.base}/v1/terminals`);
  }

  getClusters(params?: ClusterParams): Promise<ClusterResponse> {
    if (!params) return getJson(`${this.base}/v1/clusters`);
    const q = new URLSearchParams({ rho: String(params.rho) });
    if (params.R !== undefined) q.set('R', String(params.R));
    if (params.din !== undefined) q.set('din', String(params.din));
    if (params.dout !== undefined) q.set('dout', String(params.dout));
    return getJson(`${this.base}/v1/clusters?${q}`);
  }

  getDepths(terminal: string): Promise<DepthRow[]> {
    const q = new URLSearchParams({ terminal });
    return getJson(`${this.base}/v1/depths?${q}`);
  }

  getAlerts(date: string): Promise<AlertRow[]> {
    const q = new URLSearchParams({ date });
    return getJson(`${this.base}/v1/alerts?${q}`);
  }

  getHeatmap(from?: string, to?: string, order = 'center_distance'): Promise<HeatmapResponse> {
    const q = new URLSearchParams({ order });
    if (from) q.set('from', from);
    if (to) q.set('to', to);
    return getJson(`${this.base}/v1/heatmap?${q}`);
  }

  async recluster(params: ClusterParams): Promise<ClusterResponse> {
    const resp = await fetch(`${this.base}/v1/recluster`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(params),
    });
    if (!resp.ok) throw new ApiError(resp.status, await resp.text());
    return resp.json();
  }
}
