// Date x cluster severity heatmap with a cluster-order toggle. Cell
// clicks navigate to the cluster's depth panel via the callback.

import { HeatmapResponse } from './api';

export function severityColor(value: number | null): string {
  if (value === null) return '#f4f4f4';
  const v = Math.max(0, Math.min(1, value));
  const g = Math.round(230 - 200 * v);
  return `rgb(255, ${g}, ${g})`;
}

export class Heatmap {
  private container: HTMLElement;

  constructor(root: HTMLElement,
              private onCellClick: ((cluster: string, date: string) => void) | null = null) {
    this.container = document.createElement('div');
    this.container.className = 'heatmap';
    root.appendChild(this.container);
  }

  update(data: HeatmapResponse): void {
    this.container.replaceChildren();
    const table = document.createElement('table');
    const head = table.createTHead().insertRow();
    head.appendChild(document.createElement('th'));
    for (const cluster of data.clusters) {
      const th = document.createElement('th');
      th.textContent = cluster;
      head.appendChild(th);
    }
    const body = table.createTBody();
    data.dates.forEach((date, i) => {
      const tr = body.insertRow();
      const th = document.createElement('th');
      th.textContent = date;
      tr.appendChild(th);
      data.clusters.forEach((cluster, j) => {
        const value = data.severity[i][j];
        const td = tr.insertCell();
        td.style.backgroundColor = severityColor(value);
        td.title = value === null
          ? `${cluster} ${date}: no outlier`
          : `${cluster} ${date}: severity ${value.toFixed(3)}`;
        td.setAttribute('data-cluster', cluster);
        td.setAttribute('data-date', date);
        td.addEventListener('click', () => {
          if (this.onCellClick) this.onCellClick(cluster, date);
        });
      });
    });
    this.container.appendChild(table);
  }

  columnOrder(): string[] {
    return Array.from(this.container.querySelectorAll('thead th'))
      .map((th) => th.textContent ?? '')
      .filter((t) => t.length > 0);
  }
}
