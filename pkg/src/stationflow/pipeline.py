"""End-to-end pipeline with hash-keyed artifact caching.

Stages run in order ingest -> baseline -> cluster/detect -> report.
Each stage's artifacts live in a directory keyed by a content hash of
its inputs and the stage-relevant config subset, so an analyst sweeping
the correlation threshold only recomputes clustering and reporting.
Clustering and detection both depend on the baseline alone: per-terminal
depth thresholds never change when the cluster parameters do.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import shutil
import time
import warnings
from dataclasses import dataclass, field
from datetime import date, datetime

import numpy as np
import pandas as pd

from . import baseline as bl
from . import clustering as cl
from . import detection as det
from . import ingestion as ing
from . import severity as sev


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


@dataclass
class PipelineConfig:
    trips_path: str
    stations_path: str
    output_root: str
    date_start: str = ""
    date_end: str = ""
    schema_map: dict = field(default_factory=lambda: {
        "pickup_time": "Start date", "dropoff_time": "End date",
        "origin_terminal": "Start station number",
        "dest_terminal": "End station number"})
    station_schema_map: dict | None = None
    weather_path: str | None = None
    weather_column_map: dict | None = None

    min_duration_s: int = 60
    curve_kind: str = "usage"

    factor_policy: str = "fixed"          # "fixed" | "cv_select"
    factors: list = field(default_factory=lambda: ["day", "month", "year"])
    log_transform: bool = False
    log_offset: float = 1.0
    summer_months: list = field(default_factory=lambda: list(range(4, 11)))

    rho_threshold: float = 0.15
    R: float = 5000.0
    D_inner: float = 500.0
    D_outer: float = 1000.0

    depth_method: str = "h_modal"
    bootstrap_B: int = 200
    gamma: float = 0.05
    percentile: float = 1.0
    min_pool_size: int = 10
    seed: int = 0

    temp_bins: list | None = None
    precip_bins: list | None = None
    severity_bins: list | None = None

    cache_audit_fraction: float = 0.0

    @classmethod
    def from_json(cls, path: str) -> "PipelineConfig":
        with open(path) as fh:
            raw = json.load(fh)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            cfg = cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        cfg.validate()
        return cfg

    def validate(self) -> None:
        for p in (self.trips_path, self.stations_path):
            if not os.path.exists(p):
                raise ConfigError(f"path does not exist: {p}")
        if self.weather_path and not os.path.exists(self.weather_path):
            raise ConfigError(f"path does not exist: {self.weather_path}")
        if self.factor_policy not in ("fixed", "cv_select"):
            raise ConfigError("factor_policy must be 'fixed' or 'cv_select'")
        if self.curve_kind not in ing.CURVE_KINDS:
            raise ConfigError(f"curve_kind must be one of {ing.CURVE_KINDS}")
        if not -1.0 <= self.rho_threshold <= 1.0:
            raise ConfigError("rho_threshold must lie in [-1, 1]")
        if min(self.R, self.D_inner, self.D_outer) <= 0:
            raise ConfigError("distance parameters must be positive")
        if self.depth_method not in det.DEPTH_METHODS:
            raise ConfigError(f"depth_method must be one of {det.DEPTH_METHODS}")
        if self.bootstrap_B < 1 or not 0 < self.percentile < 100:
            raise ConfigError("invalid bootstrap parameters")
        if self.gamma < 0 or self.min_pool_size < 2:
            raise ConfigError("invalid detection parameters")

    def date_range(self) -> tuple[date, date]:
        try:
            start = date.fromisoformat(self.date_start)
            end = date.fromisoformat(self.date_end)
        except ValueError as exc:
            raise ConfigError(f"bad date range: {exc}") from None
        if end < start:
            raise ConfigError("date_end before date_start")
        return start, end


def _hash_obj(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def _hash_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _subset(cfg: PipelineConfig, names) -> dict:
    return {n: getattr(cfg, n) for n in names}


INGEST_KEYS = ("schema_map", "station_schema_map", "min_duration_s",
               "date_start", "date_end")
BASELINE_KEYS = ("curve_kind", "factor_policy", "factors", "log_transform",
                 "log_offset", "summer_months")
CLUSTER_KEYS = ("rho_threshold", "R", "D_inner", "D_outer")
DETECT_KEYS = ("depth_method", "bootstrap_B", "gamma", "percentile",
               "min_pool_size", "seed")
REPORT_KEYS = ("temp_bins", "precip_bins", "severity_bins", "weather_column_map")


@dataclass
class StageResult:
    name: str
    key: str
    path: str
    cached: bool
    seconds: float
    counts: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)


@dataclass
class RunManifest:
    config_hash: str
    stages: dict = field(default_factory=dict)
    completed: bool = False

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "completed": self.completed,
            "stages": {k: dataclasses.asdict(v) for k, v in self.stages.items()},
        }


def _stage_dir(cfg: PipelineConfig, name: str, key: str) -> str:
    return os.path.join(cfg.output_root, f"{name}-{key[:12]}")


def _run_stage(cfg: PipelineConfig, name: str, key: str, builder) -> StageResult:
    """Build a stage directory once per key; reuse it on later runs.

    With a nonzero audit fraction a random sample of cache hits is
    recomputed into a scratch directory and compared byte-for-byte.
    """
    path = _stage_dir(cfg, name, key)
    marker = os.path.join(path, "_SUCCESS")
    t0 = time.time()
    if os.path.exists(marker):
        if cfg.cache_audit_fraction > 0:
            rng = np.random.default_rng(abs(hash((key, "audit"))) % (2 ** 32))
            if rng.random() < cfg.cache_audit_fraction:
                audit_dir = path + ".audit"
                shutil.rmtree(audit_dir, ignore_errors=True)
                os.makedirs(audit_dir)
                builder(audit_dir)
                _assert_dirs_equal(path, audit_dir)
                shutil.rmtree(audit_dir)
        result = StageResult(name, key, path, cached=True,
                             seconds=time.time() - t0)
        counts_path = os.path.join(path, "_counts.json")
        if os.path.exists(counts_path):
            with open(counts_path) as fh:
                result.counts = json.load(fh)
        return result

    tmp = path + ".tmp"
    shutil.rmtree(tmp, ignore_errors=True)
    os.makedirs(tmp)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        counts = builder(tmp) or {}
    with open(os.path.join(tmp, "_counts.json"), "w") as fh:
        json.dump(counts, fh, sort_keys=True)
    with open(os.path.join(tmp, "_SUCCESS"), "w") as fh:
        fh.write(key)
    shutil.rmtree(path, ignore_errors=True)
    os.replace(tmp, path)
    return StageResult(name, key, path, cached=False, seconds=time.time() - t0,
                       counts=counts, warnings=[str(w.message) for w in caught])


def _assert_dirs_equal(a: str, b: str) -> None:
    names_a = sorted(f for f in os.listdir(a) if not f.startswith("_"))
    names_b = sorted(f for f in os.listdir(b) if not f.startswith("_"))
    if names_a != names_b:
        raise RuntimeError(f"cache audit mismatch: {names_a} vs {names_b}")
    for name in names_a:
        with open(os.path.join(a, name), "rb") as fa, \
                open(os.path.join(b, name), "rb") as fb:
            if fa.read() != fb.read():
                raise RuntimeError(f"cache audit mismatch in {name}")


# ---------------------------------------------------------------- stages


def _build_ingest(cfg: PipelineConfig, out: str) -> dict:
    start, end = cfg.date_range()
    parsed = ing.parse_trips(cfg.trips_path, cfg.schema_map)
    trips, first_active = ing.cleanse_trips(parsed.trips, cfg.min_duration_s)
    if not trips:
        raise DataError("no trips survived parsing and cleansing")
    terminals = ing.parse_stations(cfg.stations_path, cfg.station_schema_map)
    known = {t.id for t in terminals}
    unknown_refs = sorted({t for trip in trips
                           for t in (trip.origin_terminal, trip.dest_terminal)
                           if t not in known})

    frames = []
    for kind in ing.CURVE_KINDS:
        frames.append(ing.aggregate_daily_curves(trips, kind, (start, end),
                                                 first_active))
    curves = pd.concat(frames, ignore_index=True)
    ing.write_curve_store(curves, out)

    usage = curves[curves["kind"] == "usage"]
    ing.terminal_summary(usage).to_csv(os.path.join(out, "summary.csv"), index=False)
    pd.DataFrame(
        [(t.id, t.latitude, t.longitude,
          first_active.get(t.id).isoformat() if first_active.get(t.id) else "")
         for t in sorted(terminals, key=lambda x: x.id)],
        columns=["terminal", "latitude", "longitude", "first_active_date"],
    ).to_csv(os.path.join(out, "stations.csv"), index=False)
    report = {
        "rows_parsed": len(parsed.trips),
        "row_errors": parsed.n_errors,
        "error_lines": [dataclasses.asdict(e) for e in parsed.errors[:100]],
        "trips_retained": len(trips),
        "unknown_station_refs": unknown_refs,
    }
    with open(os.path.join(out, "ingest_report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    return {"trips": len(trips), "row_errors": parsed.n_errors,
            "terminals": len(first_active)}


def _build_baseline(cfg: PipelineConfig, ingest_dir: str, out: str) -> dict:
    curves = ing.read_curve_store(ingest_dir, cfg.curve_kind)
    if not len(curves):
        raise DataError(f"no {cfg.curve_kind} curves in ingest output")
    if cfg.log_transform:
        curves = bl.log_transform(curves, cfg.log_offset)

    summer = set(cfg.summer_months)

    models = {}
    cv_rows = []
    resid_frames = []
    for terminal, grp in curves.groupby("terminal", sort=True):
        grp = grp.sort_values("date", kind="mergesort")
        if cfg.factor_policy == "cv_select":
            chosen, table = bl.select_model(grp)
            for subset, value in table.items():
                cv_rows.append((terminal, "+".join(subset) or "none", value))
        else:
            chosen = tuple(cfg.factors)
        try:
            model = bl.fit_regression(grp, chosen)
        except ValueError as exc:
            raise DataError(f"terminal {terminal}: {exc}") from None
        models[terminal] = model
        res = bl.residuals(model, grp)
        if summer != bl.SUMMER_MONTHS:
            res["partition"] = [
                ("summer" if d.month in summer else "winter") + "_" +
                ("weekend" if d.weekday() >= 5 else "weekday")
                for d in res["date"]]
        resid_frames.append(res)

    residuals = pd.concat(resid_frames, ignore_index=True)
    residuals.to_csv(os.path.join(out, "residuals.csv"), index=False)
    with open(os.path.join(out, "models.json"), "w") as fh:
        json.dump({"version": 1, "log_transform": cfg.log_transform,
                   "log_offset": cfg.log_offset,
                   "models": {t: m.to_dict() for t, m in sorted(models.items())}},
                  fh, sort_keys=True)
    if cv_rows:
        pd.DataFrame(cv_rows, columns=["terminal", "factors", "cv_mse"]).to_csv(
            os.path.join(out, "cv_mse.csv"), index=False)
    return {"terminals": len(models), "residual_rows": len(residuals)}


def _residual_curve_sets(baseline_dir: str) -> dict[str, dict]:
    residuals = pd.read_csv(os.path.join(baseline_dir, "residuals.csv"),
                            dtype={"terminal": str})
    residuals["date"] = pd.to_datetime(residuals["date"]).dt.date
    sets: dict[str, dict] = {}
    vals = residuals[ing.HOUR_COLS].to_numpy(dtype=float)
    for i, (terminal, day) in enumerate(zip(residuals["terminal"], residuals["date"])):
        sets.setdefault(terminal, {})[day] = vals[i]
    return sets


def _build_cluster(cfg: PipelineConfig, ingest_dir: str, baseline_dir: str,
                   out: str) -> dict:
    stations = pd.read_csv(os.path.join(ingest_dir, "stations.csv"),
                           dtype={"terminal": str})
    curve_sets = _residual_curve_sets(baseline_dir)
    terminals = [ing.Terminal(r.terminal, r.latitude, r.longitude)
                 for r in stations.itertuples(index=False)
                 if r.terminal in curve_sets]
    if not terminals:
        raise DataError("no stations overlap the modelled terminals")
    graph = cl.build_geo_graph(terminals, cfg.R, cfg.D_inner, cfg.D_outer)
    dropped = cl.attach_correlation_weights(graph, curve_sets)
    forest = cl.prim_forest(graph)
    model = cl.cut_clusters(forest, graph.nodes, cfg.rho_threshold)

    pd.DataFrame(sorted(model.assignment.items()),
                 columns=["terminal", "cluster"]).to_csv(
        os.path.join(out, "clusters.csv"), index=False)
    pd.DataFrame([(i, j, w, graph.edges[(i, j)]["rho"])
                  for (i, j), w in sorted(forest.items())],
                 columns=["terminal_i", "terminal_j", "weight", "rho"]).to_csv(
        os.path.join(out, "forest.csv"), index=False)
    with open(os.path.join(out, "clusters.geojson"), "w") as fh:
        json.dump(cl.cluster_geojson(graph, model), fh, sort_keys=True)
    with open(os.path.join(out, "graph_meta.json"), "w") as fh:
        json.dump({"center": list(graph.center), "params": graph.params,
                   "edges": len(graph.edges), "edges_dropped_no_overlap": dropped,
                   "rho_threshold": cfg.rho_threshold,
                   "n_clusters": model.n_clusters}, fh, sort_keys=True)
    return {"n_clusters": model.n_clusters, "edges": len(graph.edges)}


def _build_detect(cfg: PipelineConfig, baseline_dir: str, out: str) -> dict:
    residuals = pd.read_csv(os.path.join(baseline_dir, "residuals.csv"),
                            dtype={"terminal": str})
    residuals["date"] = pd.to_datetime(residuals["date"]).dt.date
    table = det.score_pools(residuals, method=cfg.depth_method, B=cfg.bootstrap_B,
                            gamma=cfg.gamma, root_seed=cfg.seed,
                            percentile=cfg.percentile,
                            min_pool_size=cfg.min_pool_size)
    table.to_csv(os.path.join(out, "depths.csv"), index=False)
    return {"scored_days": int((table["status"] == "ok").sum()),
            "insufficient": int((table["status"] != "ok").sum()),
            "flagged": int((table["z"] > 0).sum())}


def _build_report(cfg: PipelineConfig, baseline_dir: str, cluster_dir: str,
                  detect_dir: str, ingest_dir: str, out: str) -> dict:
    depths = pd.read_csv(os.path.join(detect_dir, "depths.csv"),
                         dtype={"terminal": str})
    depths["date"] = pd.to_datetime(depths["date"]).dt.date
    assignment = pd.read_csv(os.path.join(cluster_dir, "clusters.csv"),
                             dtype={"terminal": str, "cluster": str})
    residuals = pd.read_csv(os.path.join(baseline_dir, "residuals.csv"),
                            dtype={"terminal": str})
    residuals["date"] = pd.to_datetime(residuals["date"]).dt.date
    resid_sum = {(t, d): s for t, d, s in zip(
        residuals["terminal"], residuals["date"],
        residuals[ing.HOUR_COLS].sum(axis=1))}

    members = {}
    for r in assignment.itertuples(index=False):
        members.setdefault(r.cluster, []).append(r.terminal)
    cluster_of = dict(zip(assignment["terminal"], assignment["cluster"]))

    z_by_day: dict[date, dict[str, float]] = {}
    for r in depths.itertuples(index=False):
        if r.status != "ok":
            continue
        z_by_day.setdefault(r.date, {})[r.terminal] = r.z

    records = []
    for day in sorted(z_by_day):
        zmap = z_by_day[day]
        for cid, terms in sorted(members.items()):
            scored = {t for t in terms if t in zmap}
            if not scored:
                continue
            exc = det.cluster_exceedance(terms, day, zmap, cluster_id=cid)
            direction = None
            if exc.z_n > 0:
                sums = [resid_sum.get((t, day), 0.0) for t in exc.contributors]
                direction = det.classify_direction(sums)
            records.append({"cluster": cid, "date": day, "z_n": exc.z_n,
                            "size": exc.size, "direction": direction,
                            "contributors": exc.contributors,
                            "missing": exc.missing})
    cluster_days = pd.DataFrame(records)
    if not len(cluster_days):
        raise DataError("no cluster-days scored; nothing to report")

    fits = {}
    severities = []
    for cid, grp in cluster_days.groupby("cluster", sort=True):
        S = float(grp["size"].iloc[0])
        zpos = grp.loc[(grp["z_n"] > 0) & (grp["z_n"] < S), "z_n"].to_numpy()
        try:
            fits[cid] = sev.fit_beta4(zpos, S, cluster=cid)
        except sev.FitError:
            fits[cid] = None
    for row in cluster_days.itertuples(index=False):
        model = fits.get(row.cluster)
        if row.z_n > 0 and model is not None:
            severities.append(sev.severity(model, min(row.z_n, model.upper)))
        else:
            severities.append(float("nan"))
    cluster_days["severity"] = severities
    store = cluster_days.copy()
    store["contributors"] = store["contributors"].map(json.dumps)
    store["missing"] = store["missing"].map(json.dumps)
    store.to_csv(os.path.join(out, "cluster_days.csv"), index=False)
    with open(os.path.join(out, "severity_models.json"), "w") as fh:
        json.dump({cid: (None if m is None else
                         {"alpha": m.alpha, "beta": m.beta, "upper": m.upper})
                   for cid, m in sorted(fits.items())}, fh, sort_keys=True)

    # alert lists, one block per date with any outlier
    alert_frames = []
    for day in sorted(cluster_days.loc[cluster_days["z_n"] > 0, "date"].unique()):
        alert_frames.append(sev.alert_list(day, cluster_days, members))
    alerts = (pd.concat(alert_frames, ignore_index=True)
              if alert_frames else sev.alert_list(date(1970, 1, 1), cluster_days,
                                                  members))
    store_alerts = alerts.copy()
    store_alerts["detected_terminals"] = store_alerts["detected_terminals"].map(json.dumps)
    store_alerts["co_cluster_terminals"] = store_alerts["co_cluster_terminals"].map(json.dumps)
    store_alerts.to_csv(os.path.join(out, "alerts.csv"), index=False)
    with open(os.path.join(out, "alerts.json"), "w") as fh:
        json.dump(json.loads(alerts.to_json(orient="records", date_format="iso")),
                  fh, sort_keys=True)

    # heatmap ordered by centroid distance from the network center
    stations = pd.read_csv(os.path.join(ingest_dir, "stations.csv"),
                           dtype={"terminal": str})
    coords = {r.terminal: (r.latitude, r.longitude)
              for r in stations.itertuples(index=False)}
    with open(os.path.join(cluster_dir, "graph_meta.json")) as fh:
        center = tuple(json.load(fh)["center"])
    centroids = {}
    for cid, terms in members.items():
        pts = [coords[t] for t in terms if t in coords]
        if pts:
            centroids[cid] = (float(np.mean([p[0] for p in pts])),
                              float(np.mean([p[1] for p in pts])))
    order = sev.order_clusters(centroids, center)
    heatmap = sev.severity_heatmap(cluster_days, order)
    heatmap.to_csv(os.path.join(out, "heatmap.csv"))

    sev.pos_neg_series(cluster_days).to_csv(os.path.join(out, "pos_neg.csv"))
    sev.terminal_outlier_counts(depths).to_csv(
        os.path.join(out, "terminal_counts.csv"), index=False)

    if cfg.weather_path:
        weather = sev.load_weather(cfg.weather_path, cfg.weather_column_map)
        tabs = sev.weather_crosstab(cluster_days, weather, cfg.temp_bins,
                                    cfg.precip_bins, cfg.severity_bins)
        tabs["temperature"].to_csv(os.path.join(out, "weather_temp.csv"))
        tabs["precipitation"].to_csv(os.path.join(out, "weather_precip.csv"))

    n_out = int((cluster_days["z_n"] > 0).sum())
    return {"cluster_days": len(cluster_days), "outlier_cluster_days": n_out,
            "alerts": len(alerts)}


# ------------------------------------------------------------- pipeline


def stage_keys(cfg: PipelineConfig) -> dict[str, str]:
    inputs_hash = {"trips": _hash_file(cfg.trips_path),
                   "stations": _hash_file(cfg.stations_path)}
    k_ingest = _hash_obj({"inputs": inputs_hash, "cfg": _subset(cfg, INGEST_KEYS)})
    k_baseline = _hash_obj({"ingest": k_ingest, "cfg": _subset(cfg, BASELINE_KEYS)})
    k_cluster = _hash_obj({"baseline": k_baseline, "ingest": k_ingest,
                           "cfg": _subset(cfg, CLUSTER_KEYS)})
    k_detect = _hash_obj({"baseline": k_baseline, "cfg": _subset(cfg, DETECT_KEYS)})
    weather_hash = _hash_file(cfg.weather_path) if cfg.weather_path else None
    k_report = _hash_obj({"cluster": k_cluster, "detect": k_detect,
                          "weather": weather_hash,
                          "cfg": _subset(cfg, REPORT_KEYS)})
    return {"ingest": k_ingest, "baseline": k_baseline, "cluster": k_cluster,
            "detect": k_detect, "report": k_report}


def run_pipeline(cfg: PipelineConfig, stages=None) -> RunManifest:
    """Run the pipeline (or a prefix of it) and return the manifest.

    ``stages`` limits execution to the named stages and their
    dependencies; default runs everything.
    """
    cfg.validate()
    cfg.date_range()
    os.makedirs(cfg.output_root, exist_ok=True)
    keys = stage_keys(cfg)
    manifest = RunManifest(config_hash=_hash_obj(dataclasses.asdict(cfg)))
    wanted = set(stages or ["ingest", "baseline", "cluster", "detect", "report"])
    deps = {"ingest": set(), "baseline": {"ingest"}, "cluster": {"ingest", "baseline"},
            "detect": {"ingest", "baseline"},
            "report": {"ingest", "baseline", "cluster", "detect"}}
    needed = set()
    for s in wanted:
        needed |= {s} | deps[s]

    try:
        if "ingest" in needed:
            manifest.stages["ingest"] = _run_stage(
                cfg, "ingest", keys["ingest"],
                lambda out: _build_ingest(cfg, out))
        if "baseline" in needed:
            ingest_dir = manifest.stages["ingest"].path
            manifest.stages["baseline"] = _run_stage(
                cfg, "baseline", keys["baseline"],
                lambda out: _build_baseline(cfg, ingest_dir, out))
        if "cluster" in needed:
            manifest.stages["cluster"] = _run_stage(
                cfg, "cluster", keys["cluster"],
                lambda out: _build_cluster(cfg, manifest.stages["ingest"].path,
                                           manifest.stages["baseline"].path, out))
        if "detect" in needed:
            manifest.stages["detect"] = _run_stage(
                cfg, "detect", keys["detect"],
                lambda out: _build_detect(cfg, manifest.stages["baseline"].path, out))
        if "report" in needed:
            manifest.stages["report"] = _run_stage(
                cfg, "report", keys["report"],
                lambda out: _build_report(cfg, manifest.stages["baseline"].path,
                                          manifest.stages["cluster"].path,
                                          manifest.stages["detect"].path,
                                          manifest.stages["ingest"].path, out))
        manifest.completed = wanted <= set(manifest.stages)
    finally:
        payload = manifest.to_dict()
        payload["written_at"] = datetime.now().isoformat()
        with open(os.path.join(cfg.output_root, "manifest.json"), "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
    return manifest
