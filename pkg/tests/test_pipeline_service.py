import json
import os
import threading

import pandas as pd
import pytest
from fastapi.testclient import TestClient

from stationflow.pipeline import (ConfigError, PipelineConfig, run_pipeline,
                                  stage_keys)
from stationflow.service import create_app

from conftest import small_config


class TestConfig:
    def test_unknown_keys_rejected(self, small_dataset, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({
            "trips_path": small_dataset["trips_path"],
            "stations_path": small_dataset["stations_path"],
            "output_root": str(tmp_path / "out"),
            "date_start": "2018-01-01", "date_end": "2018-12-31",
            "bogus_knob": 1,
        }))
        with pytest.raises(ConfigError, match="bogus_knob"):
            PipelineConfig.from_json(str(path))

    def test_missing_path_rejected(self, tmp_path):
        cfg = PipelineConfig(trips_path=str(tmp_path / "nope.csv"),
                             stations_path=str(tmp_path / "nope2.csv"),
                             output_root=str(tmp_path))
        with pytest.raises(ConfigError, match="does not exist"):
            cfg.validate()

    def test_bad_values_rejected(self, small_dataset, tmp_path):
        for overrides in ({"rho_threshold": 1.5}, {"factor_policy": "guess"},
                          {"depth_method": "nope"}, {"D_inner": -1.0},
                          {"percentile": 0.0}, {"min_pool_size": 1}):
            cfg = small_config(small_dataset, tmp_path, **overrides)
            with pytest.raises(ConfigError):
                cfg.validate()

    def test_bad_date_range(self, small_dataset, tmp_path):
        cfg = small_config(small_dataset, tmp_path, date_start="2019-01-01",
                           date_end="2018-01-01")
        with pytest.raises(ConfigError, match="before"):
            cfg.date_range()


class TestCaching:
    def test_second_run_is_all_cache_hits(self, completed_run):
        cfg, _ = completed_run
        manifest = run_pipeline(cfg)
        assert all(s.cached for s in manifest.stages.values())
        assert manifest.completed

    def test_rho_change_recomputes_only_cluster_and_report(self, completed_run):
        cfg, first = completed_run
        cfg2 = PipelineConfig(**{**cfg.__dict__, "rho_threshold": 0.05})
        keys1, keys2 = stage_keys(cfg), stage_keys(cfg2)
        assert keys1["ingest"] == keys2["ingest"]
        assert keys1["baseline"] == keys2["baseline"]
        assert keys1["detect"] == keys2["detect"]
        assert keys1["cluster"] != keys2["cluster"]
        assert keys1["report"] != keys2["report"]
        manifest = run_pipeline(cfg2)
        for name in ("ingest", "baseline", "detect"):
            assert manifest.stages[name].cached
        assert manifest.stages["cluster"].path != first.stages["cluster"].path

    def test_seed_change_recomputes_detect_not_baseline(self, completed_run):
        cfg, _ = completed_run
        cfg2 = PipelineConfig(**{**cfg.__dict__, "seed": 99})
        keys1, keys2 = stage_keys(cfg), stage_keys(cfg2)
        assert keys1["baseline"] == keys2["baseline"]
        assert keys1["cluster"] == keys2["cluster"]
        assert keys1["detect"] != keys2["detect"]

    def test_cache_audit_passes_on_honest_cache(self, completed_run):
        cfg, _ = completed_run
        cfg2 = PipelineConfig(**{**cfg.__dict__, "cache_audit_fraction": 1.0})
        manifest = run_pipeline(cfg2)
        assert all(s.cached for s in manifest.stages.values())

    def test_cache_audit_detects_tampering(self, completed_run):
        cfg, manifest = completed_run
        target = os.path.join(manifest.stages["cluster"].path, "clusters.csv")
        original = open(target).read()
        try:
            with open(target, "a") as fh:
                fh.write("tampered,row\n")
            cfg2 = PipelineConfig(**{**cfg.__dict__, "cache_audit_fraction": 1.0})
            with pytest.raises(RuntimeError, match="cache audit"):
                run_pipeline(cfg2, stages=["cluster"])
        finally:
            with open(target, "w") as fh:
                fh.write(original)

    def test_manifest_written(self, completed_run):
        cfg, _ = completed_run
        run_pipeline(cfg)  # rewrite the manifest after earlier partial runs
        with open(os.path.join(cfg.output_root, "manifest.json")) as fh:
            manifest = json.load(fh)
        assert manifest["completed"]
        assert set(manifest["stages"]) == {"ingest", "baseline", "cluster",
                                           "detect", "report"}


class TestArtifacts:
    def test_expected_files_exist(self, completed_run):
        _, manifest = completed_run
        expected = {
            "ingest": ["stations.csv", "summary.csv", "ingest_report.json"],
            "baseline": ["residuals.csv", "models.json"],
            "cluster": ["clusters.csv", "forest.csv", "clusters.geojson",
                        "graph_meta.json"],
            "detect": ["depths.csv"],
            "report": ["cluster_days.csv", "severity_models.json", "alerts.csv",
                       "alerts.json", "heatmap.csv", "pos_neg.csv",
                       "terminal_counts.csv", "weather_temp.csv",
                       "weather_precip.csv"],
        }
        for stage, names in expected.items():
            for name in names:
                assert os.path.exists(os.path.join(manifest.stages[stage].path,
                                                   name)), f"{stage}/{name}"

    def test_blobs_recovered_as_clusters(self, small_dataset, completed_run):
        _, manifest = completed_run
        clusters = pd.read_csv(os.path.join(manifest.stages["cluster"].path,
                                            "clusters.csv"),
                               dtype={"terminal": str, "cluster": str})
        assign = dict(zip(clusters["terminal"], clusters["cluster"]))
        blob_partition = list(small_dataset["net"].blobs.values())
        from stationflow.clustering import nmi
        assert nmi(assign, blob_partition) == pytest.approx(1.0)

    def test_heatmap_values_in_unit_interval(self, completed_run):
        _, manifest = completed_run
        heatmap = pd.read_csv(os.path.join(manifest.stages["report"].path,
                                           "heatmap.csv"), index_col=0)
        assert len(heatmap) > 0  # every flagged day keeps a row
        vals = heatmap.to_numpy(dtype=float)
        finite = vals[~pd.isna(vals)]
        assert ((finite >= 0) & (finite <= 1)).all()


@pytest.fixture(scope="session")
def client(small_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("svc")
    cfg = small_config(small_dataset, out)
    app = create_app(cfg)
    with TestClient(app) as c:
        yield c


class TestService:
    def test_terminals(self, client, small_dataset):
        body = client.get("/v1/terminals").json()
        assert len(body) == len(small_dataset["net"].terminals)
        assert {"terminal", "latitude", "longitude"} <= set(body[0])

    def test_clusters_default(self, client):
        body = client.get("/v1/clusters").json()
        assert body["n_clusters"] == 3
        assert body["geojson"]["type"] == "FeatureCollection"

    def test_clusters_custom_rho(self, client):
        base = client.get("/v1/clusters").json()
        loose = client.get("/v1/clusters", params={"rho": -1.0}).json()
        assert loose["n_clusters"] <= base["n_clusters"]

    def test_clusters_invalid_rho(self, client):
        assert client.get("/v1/clusters", params={"rho": 2.0}).status_code == 422

    def test_depths_known_and_unknown(self, client, small_dataset):
        tid = small_dataset["net"].terminals[0].id
        body = client.get("/v1/depths", params={"terminal": tid}).json()
        assert len(body) > 300
        assert {"date", "depth", "threshold", "z", "status"} <= set(body[0])
        assert client.get("/v1/depths",
                          params={"terminal": "nope"}).status_code == 404

    def test_depths_requires_terminal(self, client):
        assert client.get("/v1/depths").status_code == 422

    def test_outliers_and_alerts_for_planted_day(self, client, small_dataset):
        # at least one planted shock day must surface as an outlier
        hits = []
        for _, day, _ in small_dataset["plan"].days:
            outliers = client.get("/v1/outliers",
                                  params={"date": day.isoformat()}).json()
            if any(o["z_n"] > 0 for o in outliers):
                hits.append(day)
        assert hits
        alerts = client.get("/v1/alerts",
                            params={"date": hits[0].isoformat()}).json()
        assert alerts and alerts[0]["rank"] == 1
        ranks = [a["rank"] for a in alerts]
        assert ranks == list(range(1, len(ranks) + 1))

    def test_heatmap_orders(self, client):
        a = client.get("/v1/heatmap").json()
        b = client.get("/v1/heatmap", params={"order": "north_south"}).json()
        assert set(a["clusters"]) == set(b["clusters"])
        assert client.get("/v1/heatmap",
                          params={"order": "spiral"}).status_code == 422

    def test_heatmap_date_filter(self, client):
        body = client.get("/v1/heatmap", params={"from": "2018-06-01",
                                                 "to": "2018-06-30"}).json()
        assert all("2018-06" in d for d in body["dates"])

    def test_weather_crosstab(self, client):
        body = client.get("/v1/weather-crosstab").json()
        assert "temperature" in body and "precipitation" in body

    def test_sweep(self, client):
        body = client.get("/v1/sweep", params={"rhos": "-1,0.15"}).json()
        assert [row["rho"] for row in body] == [-1.0, 0.15]

    def test_recluster_and_coalescing(self, client):
        results = []

        def hit():
            results.append(client.post("/v1/recluster",
                                       json={"rho": 0.4}).json())

        threads = [threading.Thread(target=hit) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len(results) == 4
        assert all(r["n_clusters"] == results[0]["n_clusters"] for r in results)
        assert client.post("/v1/recluster", json={"rho": 5.0}).status_code == 422


class TestCLI:
    def test_run_and_cache_hit(self, small_dataset, tmp_path):
        from click.testing import CliRunner

        from stationflow.cli import main

        cfg = small_config(small_dataset, tmp_path / "out")
        cfg_path = tmp_path / "cfg.json"
        payload = {k: v for k, v in cfg.__dict__.items()
                   if v is not None and k != "station_schema_map"}
        cfg_path.write_text(json.dumps(payload))
        runner = CliRunner()
        result = runner.invoke(main, ["run", "-c", str(cfg_path)])
        assert result.exit_code == 0, result.output
        result = runner.invoke(main, ["run", "-c", str(cfg_path)])
        assert result.output.count("cache hit") == 5

    def test_bad_config_exit_code(self, tmp_path):
        from click.testing import CliRunner

        from stationflow.cli import main

        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"trips_path": "/nope",
                                        "stations_path": "/nope",
                                        "output_root": str(tmp_path)}))
        result = CliRunner().invoke(main, ["run", "-c", str(cfg_path)])
        assert result.exit_code == 2

    def test_plot_writes_png(self, small_dataset, completed_run, tmp_path):
        from click.testing import CliRunner

        from stationflow.cli import main

        cfg, _ = completed_run
        cfg_path = tmp_path / "cfg.json"
        payload = {k: v for k, v in cfg.__dict__.items()
                   if v is not None and k != "station_schema_map"}
        cfg_path.write_text(json.dumps(payload))
        out = tmp_path / "heat.png"
        result = CliRunner().invoke(main, ["plot", "-c", str(cfg_path),
                                           "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert out.stat().st_size > 1000
