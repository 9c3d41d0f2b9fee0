// Wires the panels together against a running /v1 service. The page
// never reloads: parameter changes re-render panels from fresh fetches.

import { ApiClient } from './api';
import { AlertTable } from './alertTable';
import { ClusterMap } from './clusterMap';
import { DepthPanel } from './depthPanel';
import { Heatmap } from './heatmap';
import { initialState, ReclusterScheduler, setThresholdOffset, ViewState } from './state';

export class App {
  readonly state: ViewState = initialState();
  readonly map: ClusterMap;
  readonly depthPanel: DepthPanel;
  readonly alertTable: AlertTable;
  readonly heatmap: Heatmap;
  private scheduler: ReclusterScheduler;

  constructor(private api: ApiClient, root: HTMLElement, debounceMs?: number) {
    this.map = new ClusterMap(root, 640, 480,
      (cluster) => { this.state.selectedCluster = cluster; });
    this.depthPanel = new DepthPanel(root);
    this.alertTable = new AlertTable(root);
    this.heatmap = new Heatmap(root, (cluster) => this.selectCluster(cluster));
    this.scheduler = new ReclusterScheduler(
      api, (clusters) => this.map.update(clusters), debounceMs);
  }

  async start(): Promise<void> {
    this.map.update(await this.api.getClusters());
    this.heatmap.update(await this.api.getHeatmap());
  }

  // slider handler; debounced so dragging produces one recluster
  setRho(rho: number): void {
    this.state.params = { ...this.state.params, rho };
    this.scheduler.request(this.state.params);
  }

  async selectTerminal(terminal: string): Promise<void> {
    this.state.selectedTerminal = terminal;
    this.depthPanel.setRows(await this.api.getDepths(terminal));
    const offset = this.state.thresholdOffsets.get(terminal) ?? 0;
    this.depthPanel.setOffset(offset);
  }

  selectCluster(cluster: string): void {
    this.state.selectedCluster = cluster;
    this.map.highlight(cluster);
  }

  async selectDate(date: string): Promise<void> {
    this.state.dateCursor = date;
    this.alertTable.update(await this.api.getAlerts(date));
  }

  // what-if: client-side only, never sent to the server
  nudgeThreshold(terminal: string, offset: number): void {
    setThresholdOffset(this.state, terminal, offset);
    if (this.state.selectedTerminal === terminal) {
      this.depthPanel.setOffset(offset);
    }
  }
}
