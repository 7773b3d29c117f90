"""Scenario pipeline: BS sites and per-slot traffic volumes to per-slot network models.

Inputs are three CSV files bound by a JSON manifest:

``sites.csv``
    ``site_id, operator_id, x, y, colocated``.  ``x, y`` are metres in a
    local plane, or longitude/latitude in degrees when the manifest sets
    ``"coordinates": "lonlat"``.  ``colocated`` is 0/1.
``traffic.csv``
    ``site_id, day_type, slot, class_label, volume_bits``.  ``day_type`` is
    ``weekday`` or ``weekend``; ``slot`` counts 15 min slots from midnight.
``districts.csv``
    ``district_id, population_density, wkt``.  Density in inhabitants/km²,
    ``wkt`` a polygon in the same coordinates as the sites.

Users of a site are spread over the site's Voronoi cell (tessellated per
operator), and apportioned to area kinds by the share of the cell lying in
each kind.  All user bookkeeping is done in exact rationals so the totals
are conserved bit for bit.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
import shapely
from shapely import wkt as shapely_wkt
from shapely.geometry import MultiPoint, Point, Polygon, box

from .domain import (
    EnergyParams,
    ModelError,
    NetworkModel,
    OperatorConfig,
    RadioParams,
    make_classes,
    validate_model,
)

log = logging.getLogger(__name__)

AREA_KINDS = ("urban", "suburban", "rural")
DAY_TYPES = ("weekday", "weekend")
DEFAULT_CLASS_RATES = {"H": 5e6, "M": 2e5, "L": 5e4}
DEFAULT_DENSITY_THRESHOLD = 8161.0
DEFAULT_BUSINESS_THRESHOLD = 0.6
SLOT_SECONDS = 900.0
SLOTS_PER_DAY = 96
EARTH_RADIUS = 6371008.8

SITE_COLUMNS = ("site_id", "operator_id", "x", "y", "colocated")
TRAFFIC_COLUMNS = ("site_id", "day_type", "slot", "class_label", "volume_bits")
DISTRICT_COLUMNS = ("district_id", "population_density", "wkt")


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario input."""


@dataclass(frozen=True)
class SiteRecord:
    site_id: str
    operator_id: int
    x: float
    y: float
    colocated: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ScenarioError(f"site {self.site_id}: non-finite position")


@dataclass(frozen=True)
class TrafficRecord:
    site_id: str
    slot: int
    class_label: str
    volume: float
    day_type: str = "weekday"

    def __post_init__(self):
        if not self.volume >= 0:
            raise ScenarioError(f"site {self.site_id} slot {self.slot}: negative volume")
        if self.day_type not in DAY_TYPES:
            raise ScenarioError(f"unknown day_type {self.day_type!r}")
        if self.slot < 0:
            raise ScenarioError("slot index must be >= 0")


@dataclass(frozen=True)
class District:
    district_id: str
    population_density: float
    geometry: Polygon


@dataclass(frozen=True)
class AreaLabel:
    district_id: str
    kind: str
    population_density: float


def users_from_volume(volume: float, rate: float, slot_seconds: float = SLOT_SECONDS) -> float:
    """Mean concurrent users that move ``volume`` bits in one slot at the class rate."""
    if not slot_seconds > 0:
        raise ValueError("slot_seconds must be > 0")
    if not rate > 0:
        raise ValueError("rate must be > 0")
    return volume / (rate * slot_seconds)


def _exact_users(volume: float, rate: float, slot_seconds: float) -> Fraction:
    return Fraction(volume) / (Fraction(rate) * Fraction(slot_seconds))


def classify_business(weekend_peak: float, weekday_peak: float,
                      threshold: float = DEFAULT_BUSINESS_THRESHOLD) -> Optional[bool]:
    """Business profile iff weekend peak / weekday peak is strictly below the threshold.

    Returns None (undefined) when the weekday peak is zero.
    """
    if weekday_peak <= 0:
        return None
    return weekend_peak / weekday_peak < threshold


def classify_area(district_id: str, density: float, urban_districts: Iterable[str] = (),
                  threshold: float = DEFAULT_DENSITY_THRESHOLD) -> str:
    """``urban`` if listed, else ``suburban`` at density >= threshold, else ``rural``."""
    if density < 0:
        raise ScenarioError(f"district {district_id}: negative population density")
    if district_id in set(urban_districts):
        return "urban"
    return "suburban" if density >= threshold else "rural"


# -- projection ---------------------------------------------------------------

def equirectangular(lon, lat, lon0: float, lat0: float):
    """Local equirectangular projection to metres around (lon0, lat0).

    Relative distance error stays below about 0.1% within 50 km of the
    reference point at mid latitudes; fine at city scale.
    """
    lon = np.radians(np.asarray(lon, dtype=float))
    lat = np.radians(np.asarray(lat, dtype=float))
    x = EARTH_RADIUS * (lon - math.radians(lon0)) * math.cos(math.radians(lat0))
    y = EARTH_RADIUS * (lat - math.radians(lat0))
    return x, y


# -- CSV I/O ------------------------------------------------------------------

def _reader(path: Path, columns: Sequence[str]):
    f = open(path, newline="")
    rd = csv.DictReader(f)
    missing = [c for c in columns if c not in (rd.fieldnames or ())]
    if missing:
        f.close()
        raise ScenarioError(f"{path}: missing columns {missing}")
    return f, rd


def read_sites(path) -> list[SiteRecord]:
    path = Path(path)
    f, rd = _reader(path, SITE_COLUMNS)
    with f:
        try:
            out = [SiteRecord(r["site_id"], int(r["operator_id"]), float(r["x"]), float(r["y"]),
                              r["colocated"].strip() in ("1", "true", "True"))
                   for r in rd]
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"{path}: {exc}") from exc
    if not out:
        raise ScenarioError(f"{path}: no sites")
    ids = [s.site_id for s in out]
    if len(set(ids)) != len(ids):
        raise ScenarioError(f"{path}: duplicate site_id")
    return out


def read_traffic(path) -> list[TrafficRecord]:
    path = Path(path)
    f, rd = _reader(path, TRAFFIC_COLUMNS)
    with f:
        try:
            out = [TrafficRecord(r["site_id"], int(r["slot"]), r["class_label"], float(r["volume_bits"]),
                                 r["day_type"]) for r in rd]
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"{path}: {exc}") from exc
    if not out:
        raise ScenarioError(f"{path}: empty traffic file")
    return out


def read_districts(path) -> list[District]:
    path = Path(path)
    f, rd = _reader(path, DISTRICT_COLUMNS)
    with f:
        try:
            out = [District(r["district_id"], float(r["population_density"]), shapely_wkt.loads(r["wkt"]))
                   for r in rd]
        except (TypeError, ValueError, shapely.errors.GEOSException) as exc:
            raise ScenarioError(f"{path}: {exc}") from exc
    if not out:
        raise ScenarioError(f"{path}: no districts")
    return out


def write_sites(path, sites: Sequence[SiteRecord]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(SITE_COLUMNS)
        for s in sites:
            w.writerow([s.site_id, s.operator_id, repr(float(s.x)), repr(float(s.y)), int(s.colocated)])


def write_traffic(path, traffic: Sequence[TrafficRecord]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(TRAFFIC_COLUMNS)
        for t in traffic:
            w.writerow([t.site_id, t.day_type, t.slot, t.class_label, repr(float(t.volume))])


def write_districts(path, districts: Sequence[District]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(DISTRICT_COLUMNS)
        for d in districts:
            w.writerow([d.district_id, repr(float(d.population_density)), d.geometry.wkt])


# -- manifest -----------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    """Everything besides the raw files that turns ingestion into network models."""
    urban_districts: tuple = ()
    density_threshold: float = DEFAULT_DENSITY_THRESHOLD
    business_threshold: float = DEFAULT_BUSINESS_THRESHOLD
    class_rates: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_CLASS_RATES))
    slot_seconds: float = SLOT_SECONDS
    slots_per_day: int = SLOTS_PER_DAY
    coordinates: str = "planar"
    radio: RadioParams = RadioParams()
    energy_profile: str = "HLP"
    peak_power: float = 1000.0
    transmit_share: float = 0.5
    load_model: str = "per-operator-literal"
    normalize_serving_probs: bool = False

    def __post_init__(self):
        if self.coordinates not in ("planar", "lonlat"):
            raise ScenarioError("coordinates must be 'planar' or 'lonlat'")
        if not self.class_rates:
            raise ScenarioError("at least one traffic class is needed")

    def energy(self) -> EnergyParams:
        return EnergyParams.from_profile(self.energy_profile, peak_power=self.peak_power,
                                         transmit_power=self.radio.transmit_power,
                                         transmit_share=self.transmit_share)


@dataclass(frozen=True)
class ScenarioFiles:
    sites: Path
    traffic: Path
    districts: Path


def load_manifest(path) -> tuple[ScenarioFiles, ScenarioConfig, dict]:
    """Read a scenario manifest; file paths resolve relative to the manifest.

    Returns the file bundle, the config, and the raw dictionary so callers
    can read their own sections (strategies, solver options, seed).
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    base = path.parent
    try:
        files = ScenarioFiles(*(base / raw[k] for k in ("sites", "traffic", "districts")))
    except KeyError as exc:
        raise ScenarioError(f"{path}: manifest lacks {exc}") from exc
    radio = raw.get("radio", {})
    if "bandwidth" in radio:
        radio = dict(radio, bandwidth=tuple(np.atleast_1d(radio["bandwidth"]).tolist()))
    cfg = ScenarioConfig(
        urban_districts=tuple(raw.get("urban_districts", ())),
        density_threshold=float(raw.get("density_threshold", DEFAULT_DENSITY_THRESHOLD)),
        business_threshold=float(raw.get("business_threshold", DEFAULT_BUSINESS_THRESHOLD)),
        class_rates=dict(raw.get("class_rates", DEFAULT_CLASS_RATES)),
        slot_seconds=float(raw.get("slot_seconds", SLOT_SECONDS)),
        slots_per_day=int(raw.get("slots_per_day", SLOTS_PER_DAY)),
        coordinates=raw.get("coordinates", "planar"),
        radio=RadioParams(**radio),
        energy_profile=raw.get("energy_profile", "HLP"),
        peak_power=float(raw.get("peak_power", 1000.0)),
        transmit_share=float(raw.get("transmit_share", 0.5)),
        load_model=raw.get("load_model", "per-operator-literal"),
        normalize_serving_probs=bool(raw.get("normalize_serving_probs", False)),
    )
    return files, cfg, raw


# -- ingestion ----------------------------------------------------------------

@dataclass
class AreaEstimate:
    """Homogenised intensities of one area kind.

    ``users[day_type]`` has shape (slots, operators, classes) and holds mean
    concurrent user counts; divide by ``area`` for intensities.
    """
    kind: str
    area: float
    site_counts: np.ndarray
    colocation: float
    users: dict
    cv: dict

    @property
    def bs_intensity(self) -> np.ndarray:
        return self.site_counts / self.area

    def user_intensity(self, day_type: str, slot: int) -> np.ndarray:
        return self.users[day_type][slot].sum(axis=1) / self.area

    def class_shares(self, day_type: str, slot: int) -> np.ndarray:
        per_class = self.users[day_type][slot].sum(axis=0)
        total = per_class.sum()
        if total <= 0:
            return np.full(len(per_class), 1.0 / len(per_class))
        return per_class / total


@dataclass
class Ingestion:
    operators: tuple
    class_labels: tuple
    day_types: tuple
    labels: dict  # district_id -> AreaLabel
    areas: dict  # kind -> AreaEstimate
    total_users: Fraction
    apportioned_users: Fraction
    business: dict  # site_id -> bool
    skipped: tuple = ()

    @property
    def business_share(self) -> float:
        return sum(self.business.values()) / len(self.business) if self.business else math.nan


def _project(sites, districts, cfg: ScenarioConfig):
    if cfg.coordinates == "planar":
        return sites, districts
    union = shapely.union_all([d.geometry for d in districts])
    c = union.centroid
    lon0, lat0 = c.x, c.y
    xs, ys = equirectangular([s.x for s in sites], [s.y for s in sites], lon0, lat0)
    sites = [SiteRecord(s.site_id, s.operator_id, float(x), float(y), s.colocated)
             for s, x, y in zip(sites, xs, ys)]

    def proj(geom):
        return shapely.transform(geom, lambda xy: np.column_stack(equirectangular(xy[:, 0], xy[:, 1], lon0, lat0)))

    districts = [District(d.district_id, d.population_density, proj(d.geometry)) for d in districts]
    return sites, districts


def _voronoi_cells(points: np.ndarray, region) -> list:
    """Voronoi cell of each point clipped to ``region``, in input order."""
    if len(points) == 1:
        return [region]
    if len(np.unique(points, axis=0)) != len(points):
        raise ScenarioError("two sites of one operator share a position")
    env = region.envelope.buffer(max(region.envelope.length, 1.0))
    cells = shapely.voronoi_polygons(MultiPoint(points), extend_to=env, ordered=True)
    return list(shapely.intersection(np.asarray(cells.geoms), region))


def _kind_fractions(cell, site_xy, kind_geoms: dict) -> dict:
    """Exact rational split of a cell over area kinds (sums to exactly one)."""
    areas = {k: Fraction(cell.intersection(g).area) for k, g in kind_geoms.items()}
    total = sum(areas.values())
    if total == 0:
        # degenerate cell (site on the boundary or outside): attach to the nearest kind
        pt = Point(site_xy)
        k = min(kind_geoms, key=lambda k: kind_geoms[k].distance(pt))
        return {k: Fraction(1)}
    return {k: a / total for k, a in areas.items() if a}


def estimate_intensities(sites: Sequence[SiteRecord], traffic: Sequence[TrafficRecord],
                         districts: Sequence[District], cfg: ScenarioConfig = ScenarioConfig()) -> Ingestion:
    """Per area kind: BS intensities, per-slot users per operator and class, co-location share."""
    if not traffic:
        raise ScenarioError("empty traffic")
    sites, districts = _project(list(sites), list(districts), cfg)
    labels = {d.district_id: AreaLabel(d.district_id,
                                       classify_area(d.district_id, d.population_density,
                                                     cfg.urban_districts, cfg.density_threshold),
                                       d.population_density)
              for d in districts}
    kind_geoms = {}
    for kind in AREA_KINDS:
        geoms = [d.geometry for d in districts if labels[d.district_id].kind == kind]
        if geoms:
            kind_geoms[kind] = shapely.union_all(geoms)
    region = shapely.union_all(list(kind_geoms.values()))

    operators = tuple(sorted({s.operator_id for s in sites}))
    op_index = {o: i for i, o in enumerate(operators)}
    # descending rate, so the slowest class is the reference (weight 1)
    class_labels = tuple(sorted(cfg.class_rates, key=lambda c: (-cfg.class_rates[c], c)))
    cls_index = {c: j for j, c in enumerate(class_labels)}
    by_id = {s.site_id: s for s in sites}

    # Voronoi membership per operator
    fractions: dict = {}
    cell_area: dict = {}
    for o in operators:
        ss = [s for s in sites if s.operator_id == o]
        pts = np.array([(s.x, s.y) for s in ss])
        for s, cell in zip(ss, _voronoi_cells(pts, region)):
            fractions[s.site_id] = _kind_fractions(cell, (s.x, s.y), kind_geoms)
            cell_area[s.site_id] = cell.area

    site_kind = {sid: max(fr, key=lambda k: (fr[k], k)) for sid, fr in fractions.items()}
    day_types = tuple(d for d in DAY_TYPES if any(t.day_type == d for t in traffic))
    S, n_op, n_cls = cfg.slots_per_day, len(operators), len(class_labels)
    exact = {(k, d): defaultdict(Fraction) for k in kind_geoms for d in day_types}
    per_site = defaultdict(Fraction)  # (day, slot, site) -> users, for the CV diagnostic
    peaks: dict = defaultdict(lambda: defaultdict(float))  # site -> day -> slot volume
    slot_volume = defaultdict(float)
    total = Fraction(0)
    skipped = []
    for t in traffic:
        if t.site_id not in by_id:
            raise ScenarioError(f"traffic for unknown site {t.site_id!r}")
        if t.slot >= S:
            raise ScenarioError(f"slot {t.slot} beyond {S} slots per day")
        if t.class_label not in cls_index:
            raise ScenarioError(f"unknown class {t.class_label!r}")
        u = _exact_users(t.volume, cfg.class_rates[t.class_label], cfg.slot_seconds)
        total += u
        s = by_id[t.site_id]
        key = (op_index[s.operator_id], cls_index[t.class_label])
        for kind, fr in fractions[t.site_id].items():
            exact[(kind, t.day_type)][(t.slot,) + key] += u * fr
        per_site[(t.day_type, t.slot, t.site_id)] += u
        slot_volume[(t.site_id, t.day_type, t.slot)] += t.volume

    for (sid, day, slot), v in slot_volume.items():
        peaks[sid][day] = max(peaks[sid][day], v)
    business = {}
    if "weekend" in day_types:
        for sid in sorted(peaks):
            flag = classify_business(peaks[sid].get("weekend", 0.0), peaks[sid].get("weekday", 0.0),
                                     cfg.business_threshold)
            if flag is None:
                log.warning("site %s: zero weekday peak, business profile undefined", sid)
                skipped.append(sid)
            else:
                business[sid] = flag

    apportioned = sum((sum(v.values(), Fraction(0)) for v in exact.values()), Fraction(0))
    areas = {}
    for kind, geom in kind_geoms.items():
        in_kind = [s for s in sites if site_kind[s.site_id] == kind]
        counts = np.array([sum(1 for s in in_kind if s.operator_id == o) for o in operators], dtype=float)
        if geom.area <= 0:
            raise ScenarioError(f"area kind {kind} has zero area")
        coloc = sum(s.colocated for s in in_kind) / len(in_kind) if in_kind else 0.0
        users, cv = {}, {}
        for d in day_types:
            arr = np.zeros((S, n_op, n_cls))
            for (slot, i, j), v in exact[(kind, d)].items():
                arr[slot, i, j] = float(v)
            users[d] = arr
            cv[d] = np.array([_cell_density_cv(per_site, d, slot, in_kind, cell_area) for slot in range(S)])
        areas[kind] = AreaEstimate(kind, geom.area, counts, coloc, users, cv)
    return Ingestion(operators, class_labels, day_types, labels, areas, total, apportioned, business, tuple(skipped))


def _cell_density_cv(per_site, day, slot, sites, cell_area) -> float:
    """Coefficient of variation of per-cell user density: the inhomogeneity averaged away."""
    dens = np.array([float(per_site.get((day, slot, s.site_id), 0)) / cell_area[s.site_id]
                     for s in sites if cell_area[s.site_id] > 0])
    if dens.size < 2 or dens.mean() == 0:
        return 0.0
    return float(dens.std() / dens.mean())


# -- slot series --------------------------------------------------------------

@dataclass(frozen=True)
class SlotSeries:
    """Per (area kind, day type): one validated model per slot, plus metadata."""
    models: Mapping[tuple, tuple]
    colocation: Mapping[str, float]
    class_shares: Mapping[tuple, np.ndarray]
    cv: Mapping[tuple, np.ndarray]

    def keys(self):
        return sorted(self.models)

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "colocation": {k: self.colocation[k] for k in sorted(self.colocation)},
            "series": [
                {"area": k[0], "day_type": k[1],
                 "cv": [float(v) for v in self.cv[k]],
                 "models": [m.to_dict() for m in self.models[k]]}
                for k in self.keys()
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def build_slot_series(ing: Ingestion, cfg: ScenarioConfig = ScenarioConfig()) -> SlotSeries:
    """Turn an ingestion into one :class:`NetworkModel` per slot, area kind and day type."""
    rates = [cfg.class_rates[c] for c in ing.class_labels]
    energy = cfg.energy()
    models, shares, cv = {}, {}, {}
    for kind, est in sorted(ing.areas.items()):
        if not est.site_counts.any():
            log.warning("area kind %s has no sites; skipped", kind)
            continue
        for d in ing.day_types:
            series = []
            for slot in range(cfg.slots_per_day):
                lam_u = est.user_intensity(d, slot)
                ops = tuple(OperatorConfig(id=o, deployed_intensity=float(lam), user_intensity=float(u), energy=energy)
                            for o, lam, u in zip(ing.operators, est.bs_intensity, lam_u))
                m = NetworkModel(ops, make_classes(rates, est.class_shares(d, slot), ing.class_labels),
                                 cfg.radio, est.colocation, cfg.load_model, cfg.normalize_serving_probs)
                problems = validate_model(m)
                if problems:
                    raise ModelError(f"{kind}/{d} slot {slot}: " + "; ".join(problems))
                series.append(m)
            models[(kind, d)] = tuple(series)
            shares[(kind, d)] = np.array([est.class_shares(d, s) for s in range(cfg.slots_per_day)])
            cv[(kind, d)] = est.cv[d]
    return SlotSeries(models, {k: e.colocation for k, e in ing.areas.items()}, shares, cv)


def load_scenario(manifest) -> tuple[SlotSeries, Ingestion, ScenarioConfig, dict]:
    files, cfg, raw = load_manifest(manifest)
    for p in (files.sites, files.traffic, files.districts):
        if not p.exists():
            raise FileNotFoundError(p)
    ing = estimate_intensities(read_sites(files.sites), read_traffic(files.traffic), read_districts(files.districts), cfg)
    return build_slot_series(ing, cfg), ing, cfg, raw


# -- synthetic fixtures -------------------------------------------------------

def diurnal_profile(slots: int = SLOTS_PER_DAY, peak_to_trough: float = 14.0,
                    trough_slot: int = 16) -> np.ndarray:
    """Raised-cosine daily profile with max 1 and min ``1 / peak_to_trough``.

    The trough sits at ``trough_slot`` and the peak half a day later.
    """
    if peak_to_trough < 1:
        raise ValueError("peak_to_trough must be >= 1")
    t = np.arange(slots)
    s = 0.5 * (1.0 - np.cos(2.0 * np.pi * (t - trough_slot) / slots))
    lo = 1.0 / peak_to_trough
    return lo + (1.0 - lo) * s


def synthetic_scenario(out_dir, *, operators: int = 2, side: float = 10_000.0, bs_per_km2: float = 3.0,
                       colocated_share: float = 0.0, peak_users_per_km2: float = 30.0,
                       profile: Optional[Sequence[float]] = None, class_shares: Mapping[str, float] = None,
                       seed: int = 0, manifest_extra: Optional[dict] = None) -> Path:
    """Write a square single-district scenario and return its manifest path.

    Every operator gets ``bs_per_km2 * area`` sites at uniform positions, the
    first ``colocated_share`` of them shared across operators.  Each slot's
    users (``peak_users_per_km2 * profile[slot]`` per operator) are spread
    evenly over that operator's sites and converted to volumes at the class
    rates.  ``profile=None`` gives constant traffic at the peak level.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    area_km2 = side * side / 1e6
    n = int(round(bs_per_km2 * area_km2))
    n_col = int(round(colocated_share * n))
    shared_xy = rng.uniform(0, side, size=(n_col, 2))
    sites = []
    for o in range(operators):
        own = rng.uniform(0, side, size=(n - n_col, 2))
        xy = np.vstack([shared_xy, own])
        for k, (x, y) in enumerate(xy):
            sites.append(SiteRecord(f"o{o}s{k:05d}", o, float(x), float(y), k < n_col))
    shares = dict(class_shares or {"H": 0.1, "M": 0.3, "L": 0.6})
    profile = np.ones(SLOTS_PER_DAY) if profile is None else np.asarray(profile, dtype=float)
    traffic = []
    for s in sites:
        for slot, f in enumerate(profile):
            users = peak_users_per_km2 * f * area_km2 / n
            for label, share in shares.items():
                vol = users * share * DEFAULT_CLASS_RATES[label] * SLOT_SECONDS
                traffic.append(TrafficRecord(s.site_id, slot, label, vol))
    districts = [District("D1", 20000.0, box(0.0, 0.0, side, side))]
    write_sites(out / "sites.csv", sites)
    write_traffic(out / "traffic.csv", traffic)
    write_districts(out / "districts.csv", districts)
    manifest = {"version": 1, "sites": "sites.csv", "traffic": "traffic.csv", "districts": "districts.csv",
                "urban_districts": ["D1"], "class_rates": {k: DEFAULT_CLASS_RATES[k] for k in shares},
                "seed": seed}
    if len(profile) != SLOTS_PER_DAY:
        manifest["slots_per_day"] = len(profile)
    manifest.update(manifest_extra or {})
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
