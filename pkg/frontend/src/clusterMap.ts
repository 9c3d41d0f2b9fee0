// SVG cluster map: terminals as circles colored by cluster (or shaded
// by cluster size), retained forest edges as lines. Re-rendering after
// a recluster response updates the existing SVG in place.

import { ClusterResponse, GeoJsonFeature } from './api';

const PALETTE = [
  '#1f77b4', '#ff7f0e', '#2ca02c', '#d62728', '#9467bd',
  '#8c564b', '#e377c2', '#7f7f7f', '#bcbd22', '#17becf',
];

export type MapMode = 'cluster' | 'size';

export function clusterColor(clusterIds: string[], cluster: string): string {
  const idx = clusterIds.indexOf(cluster);
  return PALETTE[((idx % PALETTE.length) + PALETTE.length) % PALETTE.length];
}

function sizeShade(size: number, maxSize: number): string {
  // light to dark blue ramp
  const t = maxSize > 1 ? (size - 1) / (maxSize - 1) : 1;
  const v = Math.round(230 - 160 * t);
  return `rgb(${v}, ${v}, 255)`;
}

interface Bounds {
  minLat: number; maxLat: number; minLon: number; maxLon: number;
}

function bounds(points: GeoJsonFeature[]): Bounds {
  const lats = points.map((f) => (f.geometry.coordinates as number[])[1]);
  const lons = points.map((f) => (f.geometry.coordinates as number[])[0]);
  return {
    minLat: Math.min(...lats), maxLat: Math.max(...lats),
    minLon: Math.min(...lons), maxLon: Math.max(...lons),
  };
}

export class ClusterMap {
  private svg: SVGSVGElement;
  private mode: MapMode = 'cluster';
  private clusters: ClusterResponse | null = null;

  constructor(
    root: HTMLElement,
    private width = 640,
    private height = 480,
    private onSelect: ((cluster: string) => void) | null = null,
  ) {
    this.svg = document.createElementNS('http://www.w3.org/2000/svg', 'svg');
    this.svg.setAttribute('width', String(width));
    this.svg.setAttribute('height', String(height));
    this.svg.setAttribute('class', 'cluster-map');
    root.appendChild(this.svg);
  }

  setMode(mode: MapMode): void {
    this.mode = mode;
    if (this.clusters) this.update(this.clusters);
  }

  update(clusters: ClusterResponse): void {
    this.clusters = clusters;
    const features = clusters.geojson.features;
    const points = features.filter((f) => f.geometry.type === 'Point');
    const lines = features.filter((f) => f.geometry.type === 'LineString');
    const b = bounds(points);
    const pad = 20;
    const sx = (lon: number) =>
      pad + ((lon - b.minLon) / (b.maxLon - b.minLon || 1)) * (this.width - 2 * pad);
    const sy = (lat: number) =>
      this.height - pad - ((lat - b.minLat) / (b.maxLat - b.minLat || 1)) * (this.height - 2 * pad);

    const clusterIds = Object.keys(clusters.sizes).sort();
    const maxSize = Math.max(...Object.values(clusters.sizes));

    this.svg.replaceChildren();
    for (const line of lines) {
      const [[lon1, lat1], [lon2, lat2]] = line.geometry.coordinates as number[][];
      const el = document.createElementNS('http://www.w3.org/2000/svg', 'line');
      el.setAttribute('x1', String(sx(lon1)));
      el.setAttribute('y1', String(sy(lat1)));
      el.setAttribute('x2', String(sx(lon2)));
      el.setAttribute('y2', String(sy(lat2)));
      el.setAttribute('stroke', '#999');
      this.svg.appendChild(el);
    }
    for (const point of points) {
      const [lon, lat] = point.geometry.coordinates as number[];
      const terminal = point.properties['terminal'] as string;
      const cluster = point.properties['cluster'] as string;
      const size = point.properties['cluster_size'] as number;
      const el = document.createElementNS('http://www.w3.org/2000/svg', 'circle');
      el.setAttribute('cx', String(sx(lon)));
      el.setAttribute('cy', String(sy(lat)));
      el.setAttribute('r', '6');
      el.setAttribute('fill', this.mode === 'cluster'
        ? clusterColor(clusterIds, cluster)
        : sizeShade(size, maxSize));
      el.setAttribute('data-terminal', terminal);
      el.setAttribute('data-cluster', cluster);
      el.addEventListener('click', () => {
        this.highlight(cluster);
        if (this.onSelect) this.onSelect(cluster);
      });
      this.svg.appendChild(el);
    }
  }

  highlight(cluster: string): void {
    for (const el of this.svg.querySelectorAll('circle')) {
      const mine = el.getAttribute('data-cluster') === cluster;
      el.setAttribute('opacity', mine ? '1' : '0.25');
    }
  }

  terminalColors(): Map<string, string> {
    const out = new Map<string, string>();
    for (const el of this.svg.querySelectorAll('circle')) {
      out.set(el.getAttribute('data-terminal') ?? '', el.getAttribute('fill') ?? '');
    }
    return out;
  }
}
