"""Geographic graph construction and correlation-based MST clustering.

Terminals are joined by an edge when they satisfy a two-zone distance
rule around the network's median center; edges are weighted by one minus
the average per-day dynamical correlation of the two terminals' curves.
Prim's algorithm yields a minimum spanning forest, and cutting forest
edges above a correlation threshold produces the clusters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

EARTH_RADIUS_M = 6_371_000.0


def haversine_m(lat1, lon1, lat2, lon2):
    """Great-circle distance in meters (vectorizes over numpy inputs)."""
    phi1, phi2 = np.radians(lat1), np.radians(lat2)
    dphi = phi2 - phi1
    dlam = np.radians(lon2) - np.radians(lon1)
    a = np.sin(dphi / 2.0) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(a))


@dataclass
class GeoGraph:
    coords: dict[str, tuple[float, float]]          # terminal -> (lat, lon)
    edges: dict[tuple[str, str], dict]              # (i, j) i<j -> {geo_distance_m, weight?}
    params: dict
    center: tuple[float, float]

    @property
    def nodes(self) -> list[str]:
        return sorted(self.coords)

    def weighted_edges(self) -> dict[tuple[str, str], float]:
        return {
            pair: attrs["weight"]
            for pair, attrs in self.edges.items()
            if "weight" in attrs
        }


def build_geo_graph(terminals, R: float, D_inner: float, D_outer: float) -> GeoGraph:
    """Build the permission graph from terminal coordinates.

    The center is the componentwise median of all coordinates.  An edge
    joins i and j iff both lie within R of the center and are closer
    than D_inner, or at least one lies outside R and they are closer
    than D_outer (strict inequalities at the distance thresholds).
    """
    if R <= 0 or D_inner <= 0 or D_outer <= 0:
        raise ValueError("R, D_inner, D_outer must be positive")
    coords = {str(t.id): (t.latitude, t.longitude) for t in terminals}
    if not coords:
        raise ValueError("at least one terminal required")
    ids = sorted(coords)
    lats = np.array([coords[i][0] for i in ids])
    lons = np.array([coords[i][1] for i in ids])
    center = (float(np.median(lats)), float(np.median(lons)))
    d_center = haversine_m(lats, lons, center[0], center[1])
    inner = d_center <= R

    edges: dict[tuple[str, str], dict] = {}
    for a in range(len(ids)):
        d_ab = haversine_m(lats[a], lons[a], lats[a + 1:], lons[a + 1:])
        for off, b in enumerate(range(a + 1, len(ids))):
            d = float(np.atleast_1d(d_ab)[off])
            if inner[a] and inner[b]:
                ok = d < D_inner
            else:
                ok = d < D_outer
            if ok:
                edges[(ids[a], ids[b])] = {"geo_distance_m": d}
    return GeoGraph(
        coords=coords,
        edges=edges,
        params={"R": R, "D_inner": D_inner, "D_outer": D_outer},
        center=center,
    )


def dynamical_correlation(a: dict, b: dict) -> tuple[float, int]:
    """Average per-day correlation of two day-indexed curve sets.

    For each shared day, each 24-point curve is centered by its own
    time-mean and scaled to unit L2 norm; the day's correlation is the
    grid inner product of the two standardized curves.  Days where
    either curve is constant are skipped.  Returns (mean correlation,
    number of contributing days); the correlation is NaN when no day
    contributes.
    """
    shared = sorted(set(a) & set(b))
    total, count = 0.0, 0
    for day in shared:
        u = np.asarray(a[day], dtype=float)
        v = np.asarray(b[day], dtype=float)
        u = u - u.mean()
        v = v - v.mean()
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        if nu == 0.0 or nv == 0.0:
            continue
        total += float(np.dot(u, v) / (nu * nv))
        count += 1
    if count == 0:
        return float("nan"), 0
    return total / count, count


def attach_correlation_weights(graph: GeoGraph, curve_sets: dict[str, dict]) -> int:
    """Weight each edge by 1 - rho(i, j); drop edges with undefined rho.

    ``curve_sets`` maps terminal id to a day-indexed curve dict.
    Returns the number of edges dropped for lack of overlapping data.
    """
    dropped = []
    for (i, j), attrs in graph.edges.items():
        rho, n = dynamical_correlation(curve_sets.get(i, {}), curve_sets.get(j, {}))
        if n == 0 or math.isnan(rho):
            dropped.append((i, j))
            continue
        attrs["rho"] = rho
        attrs["weight"] = 1.0 - rho
    for pair in dropped:
        del graph.edges[pair]
    return len(dropped)


def prim_forest(graph: GeoGraph) -> dict[tuple[str, str], float]:
    """Minimum spanning forest via Prim's algorithm, per component.

    Ties between equal-weight edges break toward the smaller terminal-ID
    pair so the forest is deterministic.
    """
    import heapq

    weights = graph.weighted_edges()
    adj: dict[str, list[tuple[str, float]]] = {n: [] for n in graph.nodes}
    for (i, j), w in weights.items():
        adj[i].append((j, w))
        adj[j].append((i, w))

    forest: dict[tuple[str, str], float] = {}
    visited: set[str] = set()
    for root in graph.nodes:
        if root in visited:
            continue
        visited.add(root)
        heap: list[tuple[float, str, str, str]] = []
        for nbr, w in adj[root]:
            pair = (root, nbr) if root < nbr else (nbr, root)
            heapq.heappush(heap, (w, pair[0], pair[1], nbr))
        while heap:
            w, pi, pj, node = heapq.heappop(heap)
            if node in visited:
                continue
            visited.add(node)
            forest[(pi, pj)] = w
            for nbr, w2 in adj[node]:
                if nbr not in visited:
                    pair = (node, nbr) if node < nbr else (nbr, node)
                    heapq.heappush(heap, (w2, pair[0], pair[1], nbr))
    return forest


@dataclass
class ClusterModel:
    forest: dict[tuple[str, str], float]
    rho_threshold: float
    assignment: dict[str, str]                  # terminal -> cluster id
    sizes: dict[str, int] = field(default_factory=dict)

    @property
    def n_clusters(self) -> int:
        return len(self.sizes)

    def members(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for terminal, cid in sorted(self.assignment.items()):
            out.setdefault(cid, []).append(terminal)
        return out


def cut_clusters(forest: dict[tuple[str, str], float], nodes, rho_threshold: float) -> ClusterModel:
    """Remove forest edges heavier than 1 - rho_threshold and take components.

    Cluster IDs are the smallest member terminal ID.
    """
    if not -1.0 <= rho_threshold <= 1.0:
        raise ValueError("rho_threshold must lie in [-1, 1]")
    cut_above = 1.0 - rho_threshold
    parent = {n: n for n in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for (i, j), w in forest.items():
        if w > cut_above:
            continue
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    assignment = {n: find(n) for n in parent}
    sizes: dict[str, int] = {}
    for cid in assignment.values():
        sizes[cid] = sizes.get(cid, 0) + 1
    return ClusterModel(forest=forest, rho_threshold=rho_threshold,
                        assignment=assignment, sizes=sizes)


def _clusters_as_labels(clustering) -> dict:
    """Accept either node->label mapping or an iterable of member sets."""
    if isinstance(clustering, dict):
        return dict(clustering)
    labels = {}
    for k, members in enumerate(clustering):
        for node in members:
            labels[node] = k
    return labels


def nmi(A, B) -> float:
    """Normalized mutual information between two clusterings, in [0, 1].

    Defined as 2I/(H(A)+H(B)); when both clusterings are a single
    all-node cluster (both entropies zero) the clusterings are identical
    and the value is 1.
    """
    la, lb = _clusters_as_labels(A), _clusters_as_labels(B)
    if set(la) != set(lb):
        raise ValueError("clusterings must cover the same node set")
    n = len(la)
    nodes = list(la)
    counts: dict[tuple, int] = {}
    ca: dict = {}
    cb: dict = {}
    for node in nodes:
        a, b = la[node], lb[node]
        counts[(a, b)] = counts.get((a, b), 0) + 1
        ca[a] = ca.get(a, 0) + 1
        cb[b] = cb.get(b, 0) + 1

    info = 0.0
    for (a, b), nab in counts.items():
        info += (nab / n) * math.log(nab * n / (ca[a] * cb[b]))
    ha = -sum((m / n) * math.log(m / n) for m in ca.values())
    hb = -sum((m / n) * math.log(m / n) for m in cb.values())
    if ha + hb == 0.0:
        return 1.0
    return max(0.0, min(1.0, 2.0 * info / (ha + hb)))


def sdcs(cluster_sizes) -> float:
    """Standard deviation of cluster sizes around the balanced size S/K."""
    sizes = np.asarray(list(cluster_sizes), dtype=float)
    k = len(sizes)
    if k < 2:
        return float("nan")
    total = sizes.sum()
    return float(math.sqrt(((sizes - total / k) ** 2).sum() / (k - 1)))


def cluster_geojson(graph: GeoGraph, model: ClusterModel) -> dict:
    """GeoJSON feature collection of terminals and retained forest edges."""
    cut_above = 1.0 - model.rho_threshold
    features = []
    for terminal in graph.nodes:
        lat, lon = graph.coords[terminal]
        features.append({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [lon, lat]},
            "properties": {
                "terminal": terminal,
                "cluster": model.assignment[terminal],
                "cluster_size": model.sizes[model.assignment[terminal]],
            },
        })
    for (i, j), w in sorted(model.forest.items()):
        if w > cut_above:
            continue
        (lat1, lon1), (lat2, lon2) = graph.coords[i], graph.coords[j]
        features.append({
            "type": "Feature",
            "geometry": {"type": "LineString",
                         "coordinates": [[lon1, lat1], [lon2, lat2]]},
            "properties": {"terminals": [i, j], "weight": w},
        })
    return {"type": "FeatureCollection", "features": features}


def sweep_parameters(terminals, curve_sets: dict[str, dict], grid) -> pd.DataFrame:
    """Evaluate cluster count and SDCS over a parameter grid.

    ``grid`` is an iterable of dicts with keys rho, R, D_inner, D_outer.
    Pairwise correlations are cached across combinations so only the
    graph and cut stages are recomputed.
    """
    rho_cache: dict[tuple[str, str], float] = {}

    def rho_for(i: str, j: str) -> float:
        pair = (i, j) if i < j else (j, i)
        if pair not in rho_cache:
            rho, n = dynamical_correlation(curve_sets.get(pair[0], {}),
                                           curve_sets.get(pair[1], {}))
            rho_cache[pair] = rho if n else float("nan")
        return rho_cache[pair]

    rows = []
    for params in grid:
        graph = build_geo_graph(terminals, params["R"], params["D_inner"],
                                params["D_outer"])
        dead = []
        for (i, j), attrs in graph.edges.items():
            rho = rho_for(i, j)
            if math.isnan(rho):
                dead.append((i, j))
            else:
                attrs["rho"] = rho
                attrs["weight"] = 1.0 - rho
        for pair in dead:
            del graph.edges[pair]
        forest = prim_forest(graph)
        model = cut_clusters(forest, graph.nodes, params["rho"])
        rows.append({
            "rho": params["rho"], "R": params["R"],
            "D_inner": params["D_inner"], "D_outer": params["D_outer"],
            "n_clusters": model.n_clusters,
            "sdcs": sdcs(model.sizes.values()),
        })
    return pd.DataFrame(rows)
