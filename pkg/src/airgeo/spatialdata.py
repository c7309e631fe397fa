"""Station datasets: synthetic generation, CSV ingestion, neighbor features,
temporal encodings, scaling, and fixed-length window construction.

The synthetic generator plants a smooth regional offset in the target that is
withheld from the features. Coordinate-fed models can interpolate it inside
the training region but mis-extrapolate across held-out cells, while the
offset is recoverable from pretraining context vectors everywhere; that is
the designed mechanism behind the within-region vs. out-of-region trends.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geoenc import GeoCoord

CONUS_BOX = (24.0, 49.0, -125.0, -67.0)  # lat_min, lat_max, lon_min, lon_max
EARTH_RADIUS_KM = 6371.0088
WINDOW_LEN = 21
TEMPORAL_DIM = 5


@dataclass(frozen=True)
class Station:
    id: str
    lat: float
    lon: float

    def __post_init__(self):
        GeoCoord(self.lat, self.lon)  # range validation

    @property
    def coord(self) -> GeoCoord:
        return GeoCoord(self.lat, self.lon)


@dataclass
class DailyRecord:
    station_id: str
    day: int
    features: np.ndarray        # (m,) with value 0.0 where unobserved
    feature_mask: np.ndarray    # (m,) 1 = observed
    target: float | None        # None = missing


@dataclass
class SampleWindow:
    station_id: str
    end_day: int
    features: np.ndarray  # (T, m)
    mask: np.ndarray      # (T, m), 1 = observed
    target: float


def haversine_km(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Great-circle distance on a spherical Earth (km); broadcasts."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dp = p2 - p1
    dl = np.radians(lon2) - np.radians(lon1)
    a = np.sin(dp / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def distance_matrix(lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
    return haversine_km(lats[:, None], lons[:, None], lats[None, :], lons[None, :])


# ---------------------------------------------------------------------------
# Array-backed dataset view
# ---------------------------------------------------------------------------


@dataclass
class StationData:
    """Dense (station, day) arrays built from record lists.

    F (S, D, m) raw features with NaN where unobserved; Y (S, D) targets with
    NaN where missing.
    """

    ids: list
    lats: np.ndarray
    lons: np.ndarray
    F: np.ndarray
    M: np.ndarray
    Y: np.ndarray
    id_to_idx: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.id_to_idx:
            self.id_to_idx = {sid: i for i, sid in enumerate(self.ids)}

    @property
    def n_stations(self) -> int:
        return len(self.ids)

    @property
    def n_days(self) -> int:
        return self.F.shape[1]

    @property
    def n_features(self) -> int:
        return self.F.shape[2]

    @classmethod
    def from_records(cls, stations: list[Station], records: list[DailyRecord]) -> "StationData":
        if not stations or not records:
            raise ValueError("empty dataset")
        ids = [s.id for s in stations]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate station ids")
        idx = {sid: i for i, sid in enumerate(ids)}
        m = len(records[0].features)
        n_days = max(r.day for r in records) + 1
        F = np.full((len(ids), n_days, m), np.nan)
        Y = np.full((len(ids), n_days), np.nan)
        for r in records:
            if len(r.features) != m:
                raise ValueError(
                    f"feature length {len(r.features)} != {m} for {r.station_id} day {r.day}"
                )
            i = idx[r.station_id]
            obs = np.asarray(r.feature_mask, dtype=bool)
            F[i, r.day, obs] = np.asarray(r.features)[obs]
            if r.target is not None:
                Y[i, r.day] = r.target
        M = (~np.isnan(F)).astype(np.float64)
        return cls(
            ids=ids,
            lats=np.array([s.lat for s in stations]),
            lons=np.array([s.lon for s in stations]),
            F=F,
            M=M,
            Y=Y,
            id_to_idx=idx,
        )


# ---------------------------------------------------------------------------
# KNN-IDW neighbor feature
# ---------------------------------------------------------------------------


def idw_matrix(
    data: StationData,
    pool: np.ndarray | None = None,
    k: int = 9,
    power: float = 2.0,
) -> np.ndarray:
    """Per-(station, day) inverse-distance mean of the k nearest observed
    neighbor targets; the station itself is always excluded.

    `pool` restricts the neighbor candidates (boolean mask over stations);
    NaN marks days where no observed neighbor exists. A zero-distance
    neighbor dominates the weights (limit of the 1/d^p kernel).
    """
    S, D = data.Y.shape
    if pool is None:
        pool = np.ones(S, dtype=bool)
    dists = distance_matrix(data.lats, data.lons)
    obs = ~np.isnan(data.Y)  # (S, D)
    yz = np.where(obs, data.Y, 0.0)
    out = np.full((S, D), np.nan)
    for s in range(S):
        cand = np.flatnonzero(pool & (np.arange(S) != s))
        if cand.size == 0:
            continue
        order = cand[np.argsort(dists[s, cand], kind="stable")]
        d = dists[s, order]
        cobs = obs[order]  # (C, D)
        take = cobs & (np.cumsum(cobs, axis=0) <= k)
        with np.errstate(divide="ignore"):
            w = np.where(d > 0.0, d, 1.0) ** (-power)
        w = np.where(d > 0.0, w, 1e30)
        ww = take * w[:, None]
        denom = ww.sum(axis=0)
        got = take.any(axis=0)
        vals = (ww * yz[order]).sum(axis=0)
        out[s, got] = vals[got] / denom[got]
    return out


def knn_idw(
    station_id: str,
    day: int,
    stations: list[Station],
    records: list[DailyRecord],
    k: int = 9,
    power: float = 2.0,
) -> float | None:
    """Neighbor-interpolated target at one (station, day); None if no
    neighbor has an observed target that day."""
    data = StationData.from_records(stations, records)
    if station_id not in data.id_to_idx:
        raise ValueError(f"unknown station {station_id!r}")
    if not 0 <= day < data.n_days:
        raise ValueError(f"day {day} outside [0, {data.n_days})")
    val = idw_matrix(data, k=k, power=power)[data.id_to_idx[station_id], day]
    return None if np.isnan(val) else float(val)


# ---------------------------------------------------------------------------
# Temporal encodings
# ---------------------------------------------------------------------------

_MONTH_STARTS = np.cumsum([0, 31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30])


def temporal_encodings(day_index: int, base_year: int = 2021) -> np.ndarray:
    """[sin/cos day-of-year, sin/cos month, year]; 0-based doy, 365-day year."""
    if day_index < 0:
        raise ValueError(f"day index must be >= 0, got {day_index}")
    doy = day_index % 365
    year = base_year + day_index // 365
    month = int(np.searchsorted(_MONTH_STARTS, doy, side="right") - 1)
    return np.array(
        [
            np.sin(2.0 * np.pi * doy / 365.0),
            np.cos(2.0 * np.pi * doy / 365.0),
            np.sin(2.0 * np.pi * month / 12.0),
            np.cos(2.0 * np.pi * month / 12.0),
            float(year),
        ]
    )


def temporal_matrix(n_days: int, base_year: int = 2021) -> np.ndarray:
    """(n_days, 5) stack of temporal_encodings."""
    return np.array([temporal_encodings(d, base_year) for d in range(n_days)])


# ---------------------------------------------------------------------------
# MinMax scaling
# ---------------------------------------------------------------------------


@dataclass
class ScalerParams:
    mins: np.ndarray
    maxs: np.ndarray
    scope: str = ""  # provenance tag, e.g. "train-only"

    def __post_init__(self):
        if np.any(self.maxs < self.mins):
            raise ValueError("scaler max < min")


def scaler_fit(x: np.ndarray, scope: str = "") -> ScalerParams:
    """Per-column min/max over observed (non-NaN) entries of (n, m) data."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.size == 0:
        raise ValueError("cannot fit scaler on empty data")
    with np.errstate(all="ignore"):
        mins = np.nanmin(x, axis=0)
        maxs = np.nanmax(x, axis=0)
    # all-NaN columns degrade to the degenerate (0, 0) mapping
    mins = np.where(np.isnan(mins), 0.0, mins)
    maxs = np.where(np.isnan(maxs), 0.0, maxs)
    return ScalerParams(mins=mins, maxs=maxs, scope=scope)


def scaler_apply(x: np.ndarray, p: ScalerParams) -> np.ndarray:
    """Map to [-1, 1] over the fitted range; no clipping outside it.

    Degenerate columns (max == min) map to 0.
    """
    x = np.asarray(x, dtype=np.float64)
    span = p.maxs - p.mins
    safe = np.where(span == 0.0, 1.0, span)
    out = 2.0 * (x - p.mins) / safe - 1.0
    return np.where(span == 0.0, 0.0, out)


def scaler_invert(xs: np.ndarray, p: ScalerParams) -> np.ndarray:
    xs = np.asarray(xs, dtype=np.float64)
    span = p.maxs - p.mins
    return np.where(span == 0.0, p.mins, (xs + 1.0) / 2.0 * span + p.mins)


# ---------------------------------------------------------------------------
# Window construction
# ---------------------------------------------------------------------------


def build_windows(records: list[DailyRecord], T: int = WINDOW_LEN) -> list[SampleWindow]:
    """One window per (station, day) with an observed target.

    Days before the start of the series are left-padded as fully masked
    steps; missing entries propagate into the mask of every covering window.
    """
    by_station: dict[str, dict[int, DailyRecord]] = {}
    for r in records:
        by_station.setdefault(r.station_id, {})[r.day] = r
    windows = []
    for sid in by_station:
        days = by_station[sid]
        m = len(next(iter(days.values())).features)
        for day in sorted(days):
            rec = days[day]
            if rec.target is None:
                continue
            feats = np.zeros((T, m))
            mask = np.zeros((T, m))
            for t, d in enumerate(range(day - T + 1, day + 1)):
                if d in days:
                    r = days[d]
                    obs = np.asarray(r.feature_mask, dtype=bool)
                    feats[t, obs] = np.asarray(r.features)[obs]
                    mask[t, obs] = 1.0
            windows.append(
                SampleWindow(station_id=sid, end_day=day, features=feats, mask=mask,
                             target=float(rec.target))
            )
    return windows


def windows_from_arrays(
    F: np.ndarray, M: np.ndarray, Y: np.ndarray, T: int = WINDOW_LEN
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized window gather over (S, D, m) arrays.

    Returns (X (N,T,m), mask (N,T,m), y (N,), sample_index (N,2) of
    station/day), one sample per observed target. Unobserved feature entries
    must already be 0 in F.
    """
    S, D, m = F.shape
    pad_f = np.concatenate([np.zeros((S, T - 1, m)), F], axis=1)
    pad_m = np.concatenate([np.zeros((S, T - 1, m)), M], axis=1)
    si, di = np.nonzero(~np.isnan(Y))
    N = si.size
    X = np.empty((N, T, m))
    W = np.empty((N, T, m))
    for j in range(N):
        X[j] = pad_f[si[j], di[j] : di[j] + T]
        W[j] = pad_m[si[j], di[j] : di[j] + T]
    y = Y[si, di]
    return X, W, y, np.column_stack([si, di])


# ---------------------------------------------------------------------------
# Synthetic generation
# ---------------------------------------------------------------------------


class WaveField:
    """Smooth unit-variance random field: mixture of plane waves."""

    def __init__(self, rng: np.random.Generator, n_waves: int, wl_lo: float, wl_hi: float):
        dirs = rng.normal(size=(n_waves, 2))
        self.dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
        self.wavelengths = rng.uniform(wl_lo, wl_hi, n_waves)
        self.phases = rng.uniform(0.0, 2.0 * np.pi, n_waves)
        self.scale = np.sqrt(2.0 / n_waves)

    def __call__(self, lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
        pts = np.column_stack([np.asarray(lats, dtype=np.float64).ravel(),
                               np.asarray(lons, dtype=np.float64).ravel()])
        phase = 2.0 * np.pi * (pts @ self.dirs.T) / self.wavelengths + self.phases
        out = self.scale * np.cos(phase).sum(axis=1)
        return out.reshape(np.shape(lats))


class SyntheticGenerator:
    """CONUS-like stations with feature/target series and latent context fields.

    The target is a fixed nonlinear function of the features plus
    `region_offset_amp` times a withheld smooth offset field plus noise.
    Context vectors for encoder pretraining are built from latent fields that
    include the offset field, so embeddings carry it at any coordinate.
    """

    SIGNAL_SCALE = 5.0
    BASE_LEVEL = 12.0

    def __init__(
        self,
        n_stations: int = 150,
        n_days: int = 120,
        region_offset_amp: float = 1.0,
        noise_sd: float = 1.5,
        seed: int = 0,
        n_features: int = 8,
        missing_rate: float = 0.03,
        target_missing_rate: float = 0.02,
        n_clusters: int = 6,
        base_year: int = 2021,
    ):
        if n_stations < 20:
            raise ValueError(f"need at least 20 stations, got {n_stations}")
        if n_days < 42:
            raise ValueError(f"need at least 42 days, got {n_days}")
        if noise_sd < 0 or not 0 <= missing_rate < 1 or not 0 <= target_missing_rate < 1:
            raise ValueError("invalid noise/missing parameters")
        self.n_stations = n_stations
        self.n_days = n_days
        self.region_offset_amp = region_offset_amp
        self.noise_sd = noise_sd
        self.seed = seed
        self.n_features = n_features
        self.missing_rate = missing_rate
        self.target_missing_rate = target_missing_rate
        self.n_clusters = n_clusters
        self.base_year = base_year

        rng = np.random.default_rng(np.random.SeedSequence([seed, 101]))
        lat0, lat1, lon0, lon1 = CONUS_BOX
        self.cluster_lat = rng.uniform(lat0 + 2, lat1 - 2, n_clusters)
        self.cluster_lon = rng.uniform(lon0 + 3, lon1 - 3, n_clusters)
        self.cluster_sd = rng.uniform(0.8, 1.8, n_clusters)

        self.offset_field = WaveField(rng, 16, 7.0, 14.0)
        self.feature_fields = [WaveField(rng, 12, 5.0, 30.0) for _ in range(n_features)]
        self.context_fields = [
            WaveField(rng, 12, lo, hi)
            for lo, hi in ((18, 40), (18, 40), (8, 16), (8, 16), (3, 7), (3, 7))
        ]
        self.season_phase = rng.uniform(0.0, 2.0 * np.pi, n_features)

    # -- spatial pieces ----------------------------------------------------

    def sample_coords(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Cluster-weighted coordinate sampling (denser near urban centers)."""
        lat0, lat1, lon0, lon1 = CONUS_BOX
        out = np.empty((n, 2))
        i = 0
        while i < n:
            if rng.random() < 0.6:
                c = rng.integers(self.n_clusters)
                lat = self.cluster_lat[c] + rng.normal() * self.cluster_sd[c]
                lon = self.cluster_lon[c] + rng.normal() * self.cluster_sd[c] * 1.6
            else:
                lat = rng.uniform(lat0, lat1)
                lon = rng.uniform(lon0, lon1)
            if lat0 <= lat <= lat1 and lon0 <= lon <= lon1:
                out[i] = (lat, lon)
                i += 1
        return out

    def offset(self, lats, lons) -> np.ndarray:
        return self.offset_field(lats, lons)

    def context_vectors(self, coords: np.ndarray, dim: int, noise_sd: float = 0.05) -> np.ndarray:
        """Latent-field mixture at coords, offset field weighted up, plus
        per-point noise; plays the role of paired imagery embeddings."""
        coords = np.asarray(coords, dtype=np.float64)
        lats, lons = coords[:, 0], coords[:, 1]
        chans = [1.6 * self.offset(lats, lons)]
        chans += [f(lats, lons) for f in self.context_fields]
        raw = np.column_stack(chans)
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 202, dim]))
        mix = rng.normal(size=(raw.shape[1], dim)) / np.sqrt(raw.shape[1])
        return raw @ mix + noise_sd * rng.normal(size=(coords.shape[0], dim))

    # -- series pieces -----------------------------------------------------

    def _temporal_components(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        t = np.arange(self.n_days)
        season = 1.0 + 0.5 * np.sin(
            2.0 * np.pi * t[None, :] / 365.0 + self.season_phase[:, None]
        )  # (m, D)
        anomaly = np.zeros((self.n_features, self.n_days))
        innov = rng.normal(size=(self.n_features, self.n_days))
        for d in range(1, self.n_days):
            anomaly[:, d] = 0.8 * anomaly[:, d - 1] + 0.3 * innov[:, d]
        return season, anomaly

    def clean_features(self, lats, lons) -> np.ndarray:
        """Noise-free feature series (S, D, m) at arbitrary coordinates."""
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 303]))
        season, anomaly = self._temporal_components(rng)
        spatial = np.column_stack([f(lats, lons) for f in self.feature_fields])  # (S, m)
        return spatial[:, None, :] * season.T[None, :, :] + anomaly.T[None, :, :]

    @staticmethod
    def signal(F: np.ndarray) -> np.ndarray:
        """Known nonlinear response (S, D) from features (S, D, m); includes a
        trailing 7-day mean so the window history carries real information."""
        x = [F[:, :, j] for j in range(7)]
        lag = np.empty_like(x[0])
        csum = np.cumsum(x[0], axis=1)
        D = x[0].shape[1]
        for d in range(D):
            lo = max(0, d - 6)
            lag[:, d] = (csum[:, d] - (csum[:, lo - 1] if lo > 0 else 0.0)) / (d - lo + 1)
        return (
            0.9 * x[0]
            + 0.7 * np.tanh(x[1])
            + 0.5 * x[2] * x[3]
            + 0.6 * x[4]
            - 0.5 * x[5]
            + 0.3 * x[6]
            + 0.4 * lag
        )

    def signal_basis(self, F: np.ndarray) -> np.ndarray:
        """Exact regression basis of `signal`, for oracle fits: (S*D, 7)."""
        x = [F[:, :, j] for j in range(7)]
        csum = np.cumsum(x[0], axis=1)
        lag = np.empty_like(x[0])
        for d in range(x[0].shape[1]):
            lo = max(0, d - 6)
            lag[:, d] = (csum[:, d] - (csum[:, lo - 1] if lo > 0 else 0.0)) / (d - lo + 1)
        cols = [x[0], np.tanh(x[1]), x[2] * x[3], x[4], x[5], x[6], lag]
        return np.column_stack([c.ravel() for c in cols])

    # -- full dataset ------------------------------------------------------

    def generate(self) -> tuple[list[Station], list[DailyRecord]]:
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 404]))
        coords = self.sample_coords(self.n_stations, rng)
        lats, lons = coords[:, 0], coords[:, 1]
        F = self.clean_features(lats, lons)
        F = F + 0.15 * rng.normal(size=F.shape)
        y = (
            self.BASE_LEVEL
            + self.SIGNAL_SCALE * (self.signal(F) + self.region_offset_amp * self.offset(lats, lons)[:, None])
            + self.noise_sd * rng.normal(size=(self.n_stations, self.n_days))
        )
        feat_missing = rng.random(F.shape) < self.missing_rate
        target_missing = rng.random(y.shape) < self.target_missing_rate

        stations = [
            Station(id=f"S{i:04d}", lat=float(lats[i]), lon=float(lons[i]))
            for i in range(self.n_stations)
        ]
        records = []
        for i in range(self.n_stations):
            for d in range(self.n_days):
                mask = ~feat_missing[i, d]
                feats = np.where(mask, F[i, d], 0.0)
                records.append(
                    DailyRecord(
                        station_id=stations[i].id,
                        day=d,
                        features=feats,
                        feature_mask=mask.astype(np.float64),
                        target=None if target_missing[i, d] else float(y[i, d]),
                    )
                )
        return stations, records


def generate_synthetic(
    n_stations: int,
    n_days: int,
    region_offset_amp: float = 1.0,
    noise_sd: float = 1.5,
    seed: int = 0,
    **kwargs,
) -> tuple[list[Station], list[DailyRecord]]:
    """Deterministic synthetic dataset; see SyntheticGenerator for knobs."""
    gen = SyntheticGenerator(
        n_stations=n_stations,
        n_days=n_days,
        region_offset_amp=region_offset_amp,
        noise_sd=noise_sd,
        seed=seed,
        **kwargs,
    )
    return gen.generate()


def spatial_autocorrelation(values: np.ndarray, lats: np.ndarray, lons: np.ndarray, k: int = 8) -> float:
    """Moran-style statistic on a k-nearest-neighbor station graph."""
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    d = distance_matrix(lats, lons)
    np.fill_diagonal(d, np.inf)
    z = values - values.mean()
    num = 0.0
    wsum = 0.0
    for i in range(n):
        nbrs = np.argsort(d[i])[:k]
        w = 1.0 / np.maximum(d[i, nbrs], 1e-9)
        num += (w * z[i] * z[nbrs]).sum()
        wsum += w.sum()
    denom = (z**2).sum()
    if denom == 0.0 or wsum == 0.0:
        return 0.0
    return float((n / wsum) * (num / denom))


# ---------------------------------------------------------------------------
# CSV schema
# ---------------------------------------------------------------------------


def save_station_csv(stations: list[Station], records: list[DailyRecord], path) -> None:
    """schema: station_id,lat,lon,day,f_0..f_{m-1},target; empty = missing."""
    m = len(records[0].features) if records else 0
    header = "station_id,lat,lon,day," + ",".join(f"f_{j}" for j in range(m)) + ",target"
    coords = {s.id: (s.lat, s.lon) for s in stations}
    lines = [header]
    for r in sorted(records, key=lambda r: (r.station_id, r.day)):
        lat, lon = coords[r.station_id]
        cells = [r.station_id, repr(float(lat)), repr(float(lon)), str(r.day)]
        for j in range(m):
            cells.append(repr(float(r.features[j])) if r.feature_mask[j] else "")
        cells.append("" if r.target is None else repr(float(r.target)))
        lines.append(",".join(cells))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_station_csv(path) -> tuple[list[Station], list[DailyRecord]]:
    """Validated load of the schema above; errors carry 1-based line numbers."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file")
    header = lines[0].split(",")
    if header[:4] != ["station_id", "lat", "lon", "day"] or header[-1] != "target":
        raise ValueError(f"{path}:1: unexpected header {lines[0]!r}")
    m = len(header) - 5
    if header[4:-1] != [f"f_{j}" for j in range(m)]:
        raise ValueError(f"{path}:1: feature columns must be f_0..f_{m - 1}")
    stations: dict[str, Station] = {}
    records = []
    seen: set[tuple[str, int]] = set()
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != m + 5:
            raise ValueError(f"{path}:{ln}: expected {m + 5} fields, got {len(cells)}")
        sid = cells[0]
        try:
            lat, lon, day = float(cells[1]), float(cells[2]), int(cells[3])
        except ValueError as exc:
            raise ValueError(f"{path}:{ln}: malformed value ({exc})") from None
        if day < 0:
            raise ValueError(f"{path}:{ln}: negative day {day}")
        try:
            station = Station(id=sid, lat=lat, lon=lon)
        except ValueError as exc:
            raise ValueError(f"{path}:{ln}: {exc}") from None
        if sid in stations:
            prev = stations[sid]
            if (prev.lat, prev.lon) != (lat, lon):
                raise ValueError(f"{path}:{ln}: station {sid!r} coordinates changed")
        else:
            stations[sid] = station
        if (sid, day) in seen:
            raise ValueError(f"{path}:{ln}: duplicate (station, day) ({sid!r}, {day})")
        seen.add((sid, day))
        feats = np.zeros(m)
        mask = np.zeros(m)
        try:
            for j in range(m):
                cell = cells[4 + j]
                if cell != "":
                    feats[j] = float(cell)
                    mask[j] = 1.0
            target = None if cells[-1] == "" else float(cells[-1])
        except ValueError as exc:
            raise ValueError(f"{path}:{ln}: malformed value ({exc})") from None
        records.append(
            DailyRecord(station_id=sid, day=day, features=feats, feature_mask=mask, target=target)
        )
    return list(stations.values()), records
