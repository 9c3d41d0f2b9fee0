import { beforeEach, describe, expect, it } from 'vitest';

import { ApiClient, HeatmapResponse } from '../src/api';
import { Heatmap, severityColor } from '../src/heatmap';
import { StubServer } from './stubServer';

import heatmapFixture from './fixtures/heatmap.json';
import heatmapNsFixture from './fixtures/heatmap_ns.json';

describe('severity heatmap', () => {
  let server: StubServer;
  let root: HTMLElement;

  beforeEach(() => {
    server = new StubServer();
    server.install();
    root = document.createElement('div');
    document.body.replaceChildren(root);
  });

  it('column order follows the served cluster order', async () => {
    const api = new ApiClient('');
    const widget = new Heatmap(root);

    const byDistance = await api.getHeatmap();
    widget.update(byDistance);
    expect(widget.columnOrder()).toEqual((heatmapFixture as HeatmapResponse).clusters);

    const northSouth = await api.getHeatmap(undefined, undefined, 'north_south');
    widget.update(northSouth);
    expect(widget.columnOrder()).toEqual((heatmapNsFixture as HeatmapResponse).clusters);

    // same clusters, genuinely different order in the fixtures
    expect([...widget.columnOrder()].sort()).toEqual(
      [...(heatmapFixture as HeatmapResponse).clusters].sort());
    expect((heatmapFixture as HeatmapResponse).clusters).not.toEqual(
      (heatmapNsFixture as HeatmapResponse).clusters);
  });

  it('renders one cell per date/cluster with tooltips and severity shading', () => {
    const data = heatmapFixture as HeatmapResponse;
    new Heatmap(root).update(data);

    const cells = root.querySelectorAll('tbody td');
    expect(cells).toHaveLength(data.dates.length * data.clusters.length);

    const quiet = [...cells].find((td) => td.getAttribute('title')?.includes('no outlier'));
    const hot = [...cells].find((td) => td.getAttribute('title')?.includes('severity'));
    expect(quiet).toBeDefined();
    expect(hot).toBeDefined();
    expect((quiet as HTMLElement).style.backgroundColor).not.toBe(
      (hot as HTMLElement).style.backgroundColor);
  });

  it('maps severity to a monotone red ramp with a neutral null', () => {
    expect(severityColor(null)).toBe('#f4f4f4');
    expect(severityColor(0)).toBe('rgb(255, 230, 230)');
    expect(severityColor(1)).toBe('rgb(255, 30, 30)');
    const channel = (v: number | null) =>
      Number(severityColor(v).match(/rgb\(255, (\d+),/)?.[1]);
    expect(channel(0.2)).toBeGreaterThan(channel(0.8));
  });

  it('cell clicks report the cluster and date', () => {
    const clicks: Array<[string, string]> = [];
    const widget = new Heatmap(root, (cluster, date) => clicks.push([cluster, date]));
    widget.update(heatmapFixture as HeatmapResponse);

    const cell = root.querySelector('tbody td') as HTMLTableCellElement;
    cell.click();
    expect(clicks).toEqual([[
      cell.getAttribute('data-cluster') as string,
      cell.getAttribute('data-date') as string,
    ]]);
  });
});
