import { beforeEach, describe, expect, it } from 'vitest';

import { ApiClient, DepthRow } from '../src/api';
import { App } from '../src/app';
import { applyOffset } from '../src/depthPanel';
import { FIXTURE_META, StubServer } from './stubServer';

describe('depth panel and what-if thresholds', () => {
  let server: StubServer;
  let root: HTMLElement;
  let app: App;

  beforeEach(() => {
    server = new StubServer();
    server.install();
    root = document.createElement('div');
    document.body.replaceChildren(root);
    app = new App(new ApiClient(''), root);
  });

  it('offset 0 flags equal the served flags', async () => {
    await app.selectTerminal(FIXTURE_META.terminal);
    const served = await new ApiClient('').getDepths(FIXTURE_META.terminal);
    const servedFlags = served
      .filter((r) => r.status === 'ok' && (r.z ?? 0) > 0)
      .map((r) => r.date);
    expect(app.depthPanel.flaggedDates()).toEqual(servedFlags);
    expect(servedFlags.length).toBeGreaterThan(0);
  });

  it('raising the threshold never decreases the flag count', async () => {
    await app.selectTerminal(FIXTURE_META.terminal);
    const base = app.depthPanel.flaggedDates().length;
    const served = await new ApiClient('').getDepths(FIXTURE_META.terminal);
    const meanC = served.filter((r) => r.threshold !== null)
      .reduce((s, r) => s + (r.threshold as number), 0) / served.length;
    app.nudgeThreshold(FIXTURE_META.terminal, 0.1 * meanC);
    const raised = app.depthPanel.flaggedDates().length;
    expect(raised).toBeGreaterThanOrEqual(base);
    expect(root.querySelector('.what-if-note')?.textContent).toContain('client-side');
  });

  it('what-if offsets never mutate served artifacts (re-fetch equality)', async () => {
    const before = await new ApiClient('').getDepths(FIXTURE_META.terminal);
    await app.selectTerminal(FIXTURE_META.terminal);
    app.nudgeThreshold(FIXTURE_META.terminal, 123.0);
    app.nudgeThreshold(FIXTURE_META.terminal, -7.5);

    const after = await new ApiClient('').getDepths(FIXTURE_META.terminal);
    expect(after).toEqual(before);
    expect(after).toEqual(server.snapshotDepths());

    // no write-shaped request ever left the client
    const writes = server.log.filter((e) => e.method !== 'GET'
      && !e.url.includes('/v1/recluster'));
    expect(writes).toHaveLength(0);
  });

  it('applyOffset leaves its input rows untouched', () => {
    const rows: DepthRow[] = [{
      terminal: 't', date: '2018-01-01', partition: 'winter_weekday',
      depth: 1.0, threshold: 2.0, z: 0.5, status: 'ok',
    }];
    const frozen = JSON.stringify(rows);
    const views = applyOffset(rows, 5.0);
    expect(views[0].flagged).toBe(true);
    expect(views[0].effectiveThreshold).toBe(7.0);
    expect(JSON.stringify(rows)).toBe(frozen);
  });

  it('shows an insufficient-data banner', () => {
    const rows: DepthRow[] = [{
      terminal: 't', date: '2018-01-01', partition: 'winter_weekend',
      depth: 1.0, threshold: null, z: null, status: 'insufficient_data',
    }];
    app.depthPanel.setRows(rows);
    expect(root.querySelector('.banner-insufficient')?.textContent)
      .toMatch(/insufficient data/);
    expect(app.depthPanel.flaggedDates()).toEqual([]);
  });
});
