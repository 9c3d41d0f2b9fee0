// Ranked alert table for one date, rendered exactly as served: the rank
// column comes from the service and is not recomputed client-side.

import { AlertRow } from './api';

export class AlertTable {
  private table: HTMLTableElement;

  constructor(root: HTMLElement) {
    this.table = document.createElement('table');
    this.table.className = 'alert-table';
    root.appendChild(this.table);
  }

  update(alerts: AlertRow[]): void {
    this.table.replaceChildren();
    if (alerts.length === 0) {
      const caption = this.table.createCaption();
      caption.className = 'empty-state';
      caption.textContent = 'no outliers on this date';
      return;
    }
    const head = this.table.createTHead().insertRow();
    for (const label of ['rank', 'cluster', 'severity', 'direction', 'z_n',
                         'detected', 'co-cluster']) {
      const th = document.createElement('th');
      th.textContent = label;
      head.appendChild(th);
    }
    const body = this.table.createTBody();
    for (const alert of alerts) {
      const tr = body.insertRow();
      tr.setAttribute('data-rank', String(alert.rank));
      tr.insertCell().textContent = String(alert.rank);
      tr.insertCell().textContent = alert.cluster;
      tr.insertCell().textContent =
        alert.severity === null ? 'n/a' : alert.severity.toFixed(3);
      const dir = tr.insertCell();
      dir.textContent = alert.direction === 'positive' ? '↑' : '↓';
      dir.className = alert.direction;
      tr.insertCell().textContent = alert.z_n.toFixed(3);
      tr.insertCell().textContent = alert.detected_terminals.join(', ');
      tr.insertCell().textContent = alert.co_cluster_terminals.join(', ');
    }
  }

  renderedRanks(): number[] {
    return Array.from(this.table.querySelectorAll('tbody tr'))
      .map((tr) => Number(tr.getAttribute('data-rank')));
  }
}
