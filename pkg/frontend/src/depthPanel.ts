// Depth/threshold panel for one terminal: served depth d and threshold
// C per day, plus the normalized z with its zero line. A manual offset
// shifts C client-side only; flags are recomputed locally against the
// shifted threshold and the served rows are never modified.

import { DepthRow } from './api';

export interface FlagView {
  date: string;
  depth: number;
  effectiveThreshold: number | null;
  flagged: boolean;
}

export function applyOffset(rows: readonly DepthRow[], offset: number): FlagView[] {
  return rows.map((row) => {
    if (row.status !== 'ok' || row.threshold === null) {
      return { date: row.date, depth: row.depth, effectiveThreshold: null, flagged: false };
    }
    const c = row.threshold + offset;
    return {
      date: row.date,
      depth: row.depth,
      effectiveThreshold: c,
      flagged: row.depth < c,
    };
  });
}

export class DepthPanel {
  private container: HTMLElement;
  private rows: DepthRow[] = [];
  private offset = 0;

  constructor(root: HTMLElement) {
    this.container = document.createElement('div');
    this.container.className = 'depth-panel';
    root.appendChild(this.container);
  }

  setRows(rows: DepthRow[]): void {
    this.rows = rows;
    this.render();
  }

  // what-if only; never sent to the server
  setOffset(offset: number): void {
    this.offset = offset;
    this.render();
  }

  flaggedDates(): string[] {
    return applyOffset(this.rows, this.offset)
      .filter((v) => v.flagged)
      .map((v) => v.date);
  }

  private render(): void {
    this.container.replaceChildren();
    if (this.rows.length === 0) return;
    if (this.rows.every((r) => r.status === 'insufficient_data')) {
      const banner = document.createElement('div');
      banner.className = 'banner-insufficient';
      banner.textContent = 'insufficient data for this terminal';
      this.container.appendChild(banner);
      return;
    }
    const list = document.createElement('ul');
    for (const view of applyOffset(this.rows, this.offset)) {
      if (!view.flagged) continue;
      const item = document.createElement('li');
      item.className = 'flag-marker';
      item.setAttribute('data-date', view.date);
      item.textContent = `${view.date} depth=${view.depth.toFixed(3)}`;
      list.appendChild(item);
    }
    this.container.appendChild(list);
    if (this.offset !== 0) {
      const note = document.createElement('div');
      note.className = 'what-if-note';
      note.textContent = `what-if threshold offset ${this.offset > 0 ? '+' : ''}${this.offset} (client-side)`;
      this.container.appendChild(note);
    }
  }
}
