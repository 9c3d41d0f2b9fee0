"""Read-only HTTP service over completed pipeline artifacts.

All endpoints live under /v1 and serve JSON derived from the cached
artifact directories.  POST /v1/recluster recomputes only the
clustering and reporting stages for a new parameter set; identical
concurrent requests coalesce onto one computation.
"""

from __future__ import annotations

import dataclasses
import json
import os
import threading

import pandas as pd
from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .pipeline import PipelineConfig, run_pipeline


class ReclusterRequest(BaseModel):
    rho: float
    R: float | None = None
    din: float | None = None
    dout: float | None = None


class _RunState:
    """Holds the base config and serializes recluster computations."""

    def __init__(self, cfg: PipelineConfig):
        self.base_cfg = cfg
        self.base_manifest = run_pipeline(cfg)
        self._locks: dict[str, threading.Lock] = {}
        self._results: dict[str, dict] = {}
        self._guard = threading.Lock()

    def config_for(self, rho, R=None, din=None, dout=None) -> PipelineConfig:
        cfg = dataclasses.replace(self.base_cfg)
        cfg.rho_threshold = rho
        if R is not None:
            cfg.R = R
        if din is not None:
            cfg.D_inner = din
        if dout is not None:
            cfg.D_outer = dout
        return cfg

    def recluster(self, rho, R=None, din=None, dout=None) -> dict:
        cfg = self.config_for(rho, R, din, dout)
        key = f"{cfg.rho_threshold}|{cfg.R}|{cfg.D_inner}|{cfg.D_outer}"
        with self._guard:
            lock = self._locks.setdefault(key, threading.Lock())
        with lock:
            if key not in self._results:
                manifest = run_pipeline(cfg, stages=["cluster", "report"])
                self._results[key] = {
                    "cluster_dir": manifest.stages["cluster"].path,
                    "report_dir": manifest.stages["report"].path,
                }
            return self._results[key]


def _read_json(path: str):
    with open(path) as fh:
        return json.load(fh)


def _load_clusters(cluster_dir: str) -> dict:
    df = pd.read_csv(os.path.join(cluster_dir, "clusters.csv"),
                     dtype={"terminal": str, "cluster": str})
    sizes = df.groupby("cluster").size()
    return {
        "assignment": dict(zip(df["terminal"], df["cluster"])),
        "sizes": {k: int(v) for k, v in sizes.items()},
        "n_clusters": int(sizes.size),
        "geojson": _read_json(os.path.join(cluster_dir, "clusters.geojson")),
        "meta": _read_json(os.path.join(cluster_dir, "graph_meta.json")),
    }


def create_app(cfg: PipelineConfig) -> FastAPI:
    """Build the service over an already-completable pipeline config."""
    state = _RunState(cfg)
    app = FastAPI(title="stationflow", version="1")
    app.state.run = state

    def stage_path(name: str) -> str:
        return state.base_manifest.stages[name].path

    @app.get("/v1/terminals")
    def terminals():
        df = pd.read_csv(os.path.join(stage_path("ingest"), "stations.csv"),
                         dtype={"terminal": str})
        return json.loads(df.to_json(orient="records"))

    @app.get("/v1/clusters")
    def clusters(rho: float = Query(None), R: float = Query(None),
                 din: float = Query(None), dout: float = Query(None)):
        if rho is None or (
                rho == state.base_cfg.rho_threshold and R in (None, state.base_cfg.R)
                and din in (None, state.base_cfg.D_inner)
                and dout in (None, state.base_cfg.D_outer)):
            return _load_clusters(stage_path("cluster"))
        if not -1.0 <= rho <= 1.0:
            raise HTTPException(422, detail="rho must lie in [-1, 1]")
        dirs = state.recluster(rho, R, din, dout)
        return _load_clusters(dirs["cluster_dir"])

    @app.get("/v1/sweep")
    def sweep(rhos: str = Query("−1,0,0.15,0.3")):
        try:
            values = [float(x) for x in rhos.replace("−", "-").split(",") if x]
        except ValueError:
            raise HTTPException(422, detail="rhos must be comma-separated floats")
        rows = []
        for rho in values:
            dirs = state.recluster(rho)
            meta = _read_json(os.path.join(dirs["cluster_dir"], "graph_meta.json"))
            rows.append({"rho": rho, "n_clusters": meta["n_clusters"]})
        return rows

    @app.get("/v1/depths")
    def depths(terminal: str = Query(...)):
        df = pd.read_csv(os.path.join(stage_path("detect"), "depths.csv"),
                         dtype={"terminal": str})
        sub = df[df["terminal"] == terminal]
        if not len(sub):
            raise HTTPException(404, detail=f"unknown terminal {terminal}")
        return json.loads(sub.to_json(orient="records"))

    @app.get("/v1/outliers")
    def outliers(date: str = Query(...)):
        df = pd.read_csv(os.path.join(stage_path("report"), "cluster_days.csv"),
                         dtype={"cluster": str})
        sub = df[(df["date"] == date) & (df["z_n"] > 0)]
        return json.loads(sub.to_json(orient="records"))

    @app.get("/v1/alerts")
    def alerts(date: str = Query(...)):
        payload = _read_json(os.path.join(stage_path("report"), "alerts.json"))
        day = [row for row in payload if str(row["date"]).startswith(date)]
        return day

    @app.get("/v1/heatmap")
    def heatmap(from_: str = Query(None, alias="from"),
                to: str = Query(None, alias="to"),
                order: str = Query("center_distance")):
        if order not in ("center_distance", "north_south"):
            raise HTTPException(422, detail="order must be center_distance or north_south")
        df = pd.read_csv(os.path.join(stage_path("report"), "heatmap.csv"),
                         index_col=0)
        if from_:
            df = df[df.index >= from_]
        if to:
            df = df[df.index <= to]
        if order == "north_south":
            # recompute column order from cluster centroid latitude
            stations = pd.read_csv(os.path.join(stage_path("ingest"), "stations.csv"),
                                   dtype={"terminal": str})
            assign = pd.read_csv(os.path.join(stage_path("cluster"), "clusters.csv"),
                                 dtype={"terminal": str, "cluster": str})
            merged = assign.merge(stations, on="terminal")
            lat = merged.groupby("cluster")["latitude"].mean()
            cols = sorted(df.columns, key=lambda c: (-lat.get(c, 0.0), c))
            df = df[cols]
        return {"dates": list(df.index), "clusters": list(df.columns),
                "severity": [[None if pd.isna(v) else v for v in row]
                             for row in df.to_numpy().tolist()]}

    @app.get("/v1/weather-crosstab")
    def weather_crosstab():
        path = os.path.join(stage_path("report"), "weather_temp.csv")
        if not os.path.exists(path):
            raise HTTPException(404, detail="no weather data configured")
        temp = pd.read_csv(path, index_col=0)
        precip = pd.read_csv(os.path.join(stage_path("report"), "weather_precip.csv"),
                             index_col=0)
        return {"temperature": json.loads(temp.to_json(orient="split")),
                "precipitation": json.loads(precip.to_json(orient="split"))}

    @app.post("/v1/recluster")
    def recluster(req: ReclusterRequest):
        if not -1.0 <= req.rho <= 1.0:
            raise HTTPException(422, detail="rho must lie in [-1, 1]")
        dirs = state.recluster(req.rho, req.R, req.din, req.dout)
        out = _load_clusters(dirs["cluster_dir"])
        out["params"] = {"rho": req.rho, "R": req.R, "din": req.din,
                         "dout": req.dout}
        return out

    @app.exception_handler(FileNotFoundError)
    def missing_artifact(_, exc):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    return app


def serve(cfg: PipelineConfig, host: str = "127.0.0.1", port: int = 8000) -> None:
    import uvicorn

    uvicorn.run(create_app(cfg), host=host, port=port)
