"""Shared fixtures: a small synthetic dataset and a completed pipeline run.

The session-scoped dataset keeps pipeline and service tests fast; the
acceptance suite builds its own larger fixture.
"""

import os
from datetime import date

import pandas as pd
import pytest

from stationflow import synth
from stationflow.pipeline import PipelineConfig, run_pipeline


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("smallds")
    start, end = date(2018, 1, 1), date(2018, 12, 31)
    net = synth.make_network(n_blobs=3, blob_size=3, seed=0)
    plan = synth.plan_shocks(net, start, end, n_shocks=6, seed=7)
    trips = synth.make_trips(net, start, end, base_rate=30.0, seed=1,
                             shock_plan=plan)
    trips_path = os.path.join(root, "trips.csv")
    stations_path = os.path.join(root, "stations.csv")
    synth.write_trips_csv(trips, trips_path)
    synth.write_stations_csv(net.terminals, stations_path)

    weather_rows = [((start + pd.Timedelta(days=i)).isoformat(),
                     45.0 + 30.0 * (i % 180) / 180.0, 0.1 * (i % 7 == 0))
                    for i in range((end - start).days + 1)]
    weather_path = os.path.join(root, "weather.csv")
    pd.DataFrame(weather_rows, columns=["date", "temp", "precip"]).to_csv(
        weather_path, index=False)
    return {"root": str(root), "net": net, "plan": plan,
            "trips_path": trips_path, "stations_path": stations_path,
            "weather_path": weather_path, "start": start, "end": end}


def small_config(small_dataset, output_root, **overrides) -> PipelineConfig:
    params = dict(
        trips_path=small_dataset["trips_path"],
        stations_path=small_dataset["stations_path"],
        weather_path=small_dataset["weather_path"],
        output_root=str(output_root),
        date_start=small_dataset["start"].isoformat(),
        date_end=small_dataset["end"].isoformat(),
        bootstrap_B=50,
        percentile=0.5,
        factors=["day", "month"],  # one-year span cannot fit a year factor
    )
    params.update(overrides)
    return PipelineConfig(**params)


@pytest.fixture(scope="session")
def completed_run(small_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = small_config(small_dataset, out)
    manifest = run_pipeline(cfg)
    return cfg, manifest
