"""Synthetic network and trip generators for tests and demos.

The generator lays out terminal blobs far enough apart that the
geographic graph keeps them separate, simulates Poisson hourly pickups
with day-of-week and month effects plus a shared within-blob daily
factor, and can plant cluster-wide demand shocks on chosen days.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta

import numpy as np

from .ingestion import Terminal, TripRecord

# rough meters-per-degree at mid latitudes; layout only needs to be
# consistent with the haversine edge rule, not exact
M_PER_DEG_LAT = 111_320.0


@dataclass
class SyntheticNetwork:
    terminals: list[Terminal]
    blobs: dict[str, list[str]]  # blob id -> member terminal ids
    center: tuple[float, float]


def make_network(n_blobs: int = 5, blob_size: int = 4,
                 center=(38.9, -77.03), blob_span_m: float = 350.0,
                 blob_spacing_m: float = 4000.0, seed: int = 0) -> SyntheticNetwork:
    """Lay out ``n_blobs`` tight terminal blobs on a ring around a center.

    Blob spacing exceeds any reasonable D_outer so clusters can only
    form within blobs; members sit within ``blob_span_m`` of the blob
    centroid so the inner/outer distance rules connect them.
    """
    rng = np.random.default_rng(seed)
    lat0, lon0 = center
    m_per_deg_lon = M_PER_DEG_LAT * math.cos(math.radians(lat0))
    terminals: list[Terminal] = []
    blobs: dict[str, list[str]] = {}
    tid = 31000
    for b in range(n_blobs):
        angle = 2.0 * math.pi * b / n_blobs
        radius = blob_spacing_m * (0.5 + 0.5 * (b % 2))
        blat = lat0 + radius * math.sin(angle) / M_PER_DEG_LAT
        blon = lon0 + radius * math.cos(angle) / m_per_deg_lon
        members = []
        for k in range(blob_size):
            dlat = rng.uniform(-blob_span_m / 2, blob_span_m / 2) / M_PER_DEG_LAT
            dlon = rng.uniform(-blob_span_m / 2, blob_span_m / 2) / m_per_deg_lon
            terminal = Terminal(str(tid), blat + dlat, blon + dlon)
            terminals.append(terminal)
            members.append(terminal.id)
            tid += 1
        blobs[f"blob{b}"] = members
    return SyntheticNetwork(terminals=terminals, blobs=blobs, center=center)


def _hourly_profile() -> np.ndarray:
    """Two-peak commuter profile over 24 hours, summing to 1."""
    hours = np.arange(24)
    prof = (np.exp(-0.5 * ((hours - 8.5) / 1.5) ** 2)
            + np.exp(-0.5 * ((hours - 17.5) / 2.0) ** 2) + 0.05)
    return prof / prof.sum()


@dataclass
class ShockPlan:
    """Planted cluster-wide demand shocks, keyed by (blob id, date)."""
    shocks: dict[tuple[str, date], float] = field(default_factory=dict)

    def factor(self, blob: str, day: date) -> float:
        return self.shocks.get((blob, day), 1.0)

    @property
    def days(self) -> list[tuple[str, date, float]]:
        return [(b, d, f) for (b, d), f in sorted(self.shocks.items(),
                                                  key=lambda kv: (kv[0][1], kv[0][0]))]


def plan_shocks(network: SyntheticNetwork, start: date, end: date,
                n_shocks: int = 20, seed: int = 7,
                positive_factor: float = 3.0,
                negative_factor: float = 0.05) -> ShockPlan:
    """Pick ``n_shocks`` distinct (blob, day) pairs, mixing directions."""
    rng = np.random.default_rng(seed)
    n_days = (end - start).days + 1
    blob_ids = sorted(network.blobs)
    chosen: set[tuple[str, date]] = set()
    plan = ShockPlan()
    while len(chosen) < n_shocks:
        day = start + timedelta(days=int(rng.integers(n_days)))
        blob = blob_ids[int(rng.integers(len(blob_ids)))]
        if (blob, day) in chosen:
            continue
        chosen.add((blob, day))
        positive = rng.random() < 0.7
        plan.shocks[(blob, day)] = positive_factor if positive else negative_factor
    return plan


def make_trips(network: SyntheticNetwork, start: date, end: date,
               base_rate: float = 40.0, seed: int = 1,
               daily_sigma: float = 0.12, season_amplitude: float = 0.3,
               shock_plan: ShockPlan | None = None) -> list[TripRecord]:
    """Simulate trips between terminals of the same blob.

    Each terminal-day draws hourly pickup counts from a Poisson whose
    rate combines a commuter profile, weekday/weekend and seasonal
    effects, a shared blob-level daily factor, and any planted shock.
    Dropoffs land at a random terminal of the same blob 10-40 minutes
    later.
    """
    rng = np.random.default_rng(seed)
    shock_plan = shock_plan or ShockPlan()
    profile = _hourly_profile()
    trips: list[TripRecord] = []
    n_days = (end - start).days + 1
    blob_of = {t: b for b, members in network.blobs.items() for t in members}

    for i in range(n_days):
        day = start + timedelta(days=i)
        weekday_factor = 1.0 if day.weekday() < 5 else 0.7
        season_factor = 1.0 + season_amplitude * math.sin(2.0 * math.pi * (day.month - 4) / 12.0)
        for blob, members in sorted(network.blobs.items()):
            daily_factor = math.exp(rng.normal(0.0, daily_sigma))
            shock = shock_plan.factor(blob, day)
            for terminal in members:
                rates = (base_rate * profile * weekday_factor
                         * season_factor * daily_factor * shock)
                counts = rng.poisson(rates)
                for hour in range(24):
                    for _ in range(int(counts[hour])):
                        minute = int(rng.integers(60))
                        pickup = datetime(day.year, day.month, day.day, hour, minute)
                        duration = int(rng.integers(600, 2400))
                        dest = members[int(rng.integers(len(members)))]
                        trips.append(TripRecord(pickup,
                                                pickup + timedelta(seconds=duration),
                                                terminal, dest))
    trips.sort(key=lambda t: (t.pickup_time, t.origin_terminal))
    return trips


def write_trips_csv(trips, path) -> None:
    """Write trips in the public trip-file shape the parser expects."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["Start date", "End date", "Start station number",
                         "End station number"])
        for t in trips:
            writer.writerow([t.pickup_time.strftime("%Y-%m-%d %H:%M:%S"),
                             t.dropoff_time.strftime("%Y-%m-%d %H:%M:%S"),
                             t.origin_terminal, t.dest_terminal])


def write_stations_csv(terminals, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "latitude", "longitude"])
        for t in sorted(terminals, key=lambda x: x.id):
            writer.writerow([t.id, f"{t.latitude:.6f}", f"{t.longitude:.6f}"])


DEFAULT_SCHEMA_MAP = {
    "pickup_time": "Start date",
    "dropoff_time": "End date",
    "origin_terminal": "Start station number",
    "dest_terminal": "End station number",
}
