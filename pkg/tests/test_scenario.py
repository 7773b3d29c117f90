import json
import math
from fractions import Fraction

import numpy as np
import pytest
from shapely.geometry import box

from netshare.domain import ModelError
from netshare.scenario import (
    District,
    ScenarioConfig,
    ScenarioError,
    SiteRecord,
    TrafficRecord,
    build_slot_series,
    classify_area,
    classify_business,
    diurnal_profile,
    equirectangular,
    estimate_intensities,
    load_scenario,
    read_traffic,
    synthetic_scenario,
    users_from_volume,
    write_traffic,
)


def test_users_from_volume_worked_values():
    assert users_from_volume(4.5e9, 5e6, 900.0) == pytest.approx(1.0)
    assert users_from_volume(45e6, 5e4, 900.0) == pytest.approx(1.0)
    assert users_from_volume(0.0, 5e6) == 0.0
    with pytest.raises(ValueError):
        users_from_volume(1.0, 5e6, 0.0)


@pytest.mark.parametrize("ratio, expect", [(0.5, True), (0.6, False), (0.5999999, True), (1.2, False)])
def test_business_threshold_is_strict(ratio, expect):
    assert classify_business(ratio * 10.0, 10.0) is expect


def test_business_undefined_without_weekday_peak():
    assert classify_business(3.0, 0.0) is None


@pytest.mark.parametrize("district, density, expect", [
    ("P1", 100.0, "urban"),
    ("X", 9000.0, "suburban"),
    ("X", 8161.0, "suburban"),
    ("X", 8160.999, "rural"),
    ("X", 3000.0, "rural"),
])
def test_area_classifier(district, density, expect):
    assert classify_area(district, density, urban_districts=["P1", "P2"]) == expect


def test_area_classifier_rejects_negative_density():
    with pytest.raises(ScenarioError):
        classify_area("X", -1.0)


def test_equirectangular_scale():
    x, y = equirectangular([2.35, 2.36], [48.85, 48.85], 2.35, 48.85)
    assert x[0] == pytest.approx(0.0) and y[1] == pytest.approx(0.0)
    assert x[1] == pytest.approx(0.01 * math.pi / 180 * 6371008.8 * math.cos(math.radians(48.85)))


def _two_district_case():
    # urban strip [0, 1000] x [0, 1000], rural strip [1000, 3000] x [0, 1000]
    districts = [District("U", 20000.0, box(0, 0, 1000, 1000)), District("R", 1000.0, box(1000, 0, 3000, 1000))]
    sites = [SiteRecord("a", 0, 500.0, 500.0, True), SiteRecord("b", 0, 1500.0, 500.0),
             SiteRecord("c", 0, 2500.0, 500.0), SiteRecord("d", 1, 500.0, 500.0, True),
             SiteRecord("e", 1, 2000.0, 500.0)]
    traffic = [TrafficRecord(s.site_id, slot, "L", 45e6 * (1 + k + slot))
               for k, s in enumerate(sites) for slot in range(3)]
    cfg = ScenarioConfig(urban_districts=("U",), class_rates={"L": 5e4}, slots_per_day=3)
    return sites, traffic, districts, cfg


def test_voronoi_apportioning_conserves_users_exactly():
    sites, traffic, districts, cfg = _two_district_case()
    ing = estimate_intensities(sites, traffic, districts, cfg)
    assert ing.total_users == ing.apportioned_users
    expect = sum(Fraction(t.volume) / (Fraction(5e4) * 900) for t in traffic)
    assert ing.total_users == expect
    # site b's cell [1000, 2000] lies in the rural kind; site a's cell is urban
    assert set(ing.areas) == {"urban", "rural"}
    assert ing.areas["urban"].area == pytest.approx(1e6)
    assert ing.areas["rural"].area == pytest.approx(2e6)


def test_voronoi_split_across_kinds():
    sites, traffic, districts, cfg = _two_district_case()
    ing = estimate_intensities(sites, traffic, districts, cfg)
    # operator 1: site d's cell is [0, 1250] (1000 urban, 250 rural), site e's [1250, 3000]
    u = ing.areas["urban"].users["weekday"][0]
    d_users = users_from_volume(45e6 * 4, 5e4)
    assert u[1, 0] == pytest.approx(d_users * 1000 / 1250)
    assert ing.areas["rural"].users["weekday"][0][1, 0] == pytest.approx(d_users * 250 / 1250 + users_from_volume(45e6 * 5, 5e4))


def test_colocation_share_reproduces_reported_statistic():
    # 1599 of 5000 sites per operator shared: 31.98%
    rng = np.random.default_rng(5)
    shared = rng.uniform(0, 10_000, size=(1599, 2))
    sites = []
    for o in range(2):
        own = rng.uniform(0, 10_000, size=(5000 - 1599, 2))
        for k, (x, y) in enumerate(np.vstack([shared, own])):
            sites.append(SiteRecord(f"{o}-{k}", o, float(x), float(y), k < 1599))
    traffic = [TrafficRecord(sites[0].site_id, 0, "L", 1.0)]
    ing = estimate_intensities(sites, traffic, [District("D", 20000.0, box(0, 0, 10_000, 10_000))],
                               ScenarioConfig(urban_districts=("D",), class_rates={"L": 5e4}))
    assert round(100 * ing.areas["urban"].colocation, 2) == 31.98
    assert ing.areas["urban"].bs_intensity == pytest.approx([5e-5, 5e-5])


def test_business_share_fixture():
    # 1000 sites, 64 with weekend peak at half the weekday peak, one at exactly 0.6
    sites = [SiteRecord(f"s{k}", 0, float(k % 40) * 25 + 10, float(k // 40) * 40 + 10) for k in range(1000)]
    traffic = []
    for k, s in enumerate(sites):
        ratio = 0.5 if k < 64 else (0.6 if k == 64 else 1.0)
        traffic.append(TrafficRecord(s.site_id, 0, "L", 1e9, "weekday"))
        traffic.append(TrafficRecord(s.site_id, 0, "L", 1e9 * ratio, "weekend"))
    ing = estimate_intensities(sites, traffic, [District("D", 100.0, box(0, 0, 1000, 1000))],
                               ScenarioConfig(class_rates={"L": 5e4}))
    assert ing.business_share == pytest.approx(0.064)
    assert ing.day_types == ("weekday", "weekend")


def test_unknown_site_and_empty_traffic_fail():
    sites, traffic, districts, cfg = _two_district_case()
    with pytest.raises(ScenarioError):
        estimate_intensities(sites, [TrafficRecord("zz", 0, "L", 1.0)], districts, cfg)
    with pytest.raises(ScenarioError):
        estimate_intensities(sites, [], districts, cfg)


def test_empty_traffic_file(tmp_path):
    write_traffic(tmp_path / "t.csv", [])
    with pytest.raises(ScenarioError):
        read_traffic(tmp_path / "t.csv")


def test_diurnal_profile_shape():
    p = diurnal_profile()
    assert len(p) == 96
    assert p.max() / p.min() == pytest.approx(14.0)
    assert int(np.argmin(p)) == 16 and int(np.argmax(p)) == 64


def test_synthetic_pipeline_diurnal(tmp_path):
    path = synthetic_scenario(tmp_path / "s", peak_users_per_km2=20.0, profile=diurnal_profile())
    series, ing, cfg, raw = load_scenario(path)
    assert ing.total_users == ing.apportioned_users
    models = series.models[("urban", "weekday")]
    assert len(models) == 96
    lam_u = np.array([m.user_intensities.sum() for m in models])
    assert lam_u.max() / lam_u.min() == pytest.approx(14.0, rel=1e-9)
    assert lam_u.max() == pytest.approx(40e-6)
    assert models[0].operators[0].deployed_intensity == pytest.approx(3e-6)
    assert [c.label for c in models[0].classes] == ["H", "M", "L"]
    assert sum(c.share for c in models[0].classes) == pytest.approx(1.0)


def test_constant_traffic_gives_identical_models(tmp_path):
    series, *_ = load_scenario(synthetic_scenario(tmp_path / "c", bs_per_km2=1.0, side=3000.0))
    models = series.models[("urban", "weekday")]
    assert all(m == models[0] for m in models)


def test_ingestion_is_byte_deterministic(tmp_path):
    path = synthetic_scenario(tmp_path / "d", side=4000.0, profile=diurnal_profile(), seed=3)
    a, *_ = load_scenario(path)
    b, *_ = load_scenario(path)
    assert a.to_json() == b.to_json()
    assert a.digest() == b.digest()


def test_lonlat_manifest(tmp_path):
    path = synthetic_scenario(tmp_path / "ll", side=2000.0)
    # rewrite the planar fixture in degrees around Paris
    import csv
    lat0, lon0 = 48.85, 2.35
    k_lat = 180 / math.pi / 6371008.8
    k_lon = k_lat / math.cos(math.radians(lat0))
    rows = list(csv.DictReader(open(tmp_path / "ll" / "sites.csv")))
    with open(tmp_path / "ll" / "sites.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=rows[0].keys())
        w.writeheader()
        for r in rows:
            r["x"] = repr(lon0 + (float(r["x"]) - 1000) * k_lon)
            r["y"] = repr(lat0 + (float(r["y"]) - 1000) * k_lat)
            w.writerow(r)
    poly = box(lon0 - 1000 * k_lon, lat0 - 1000 * k_lat, lon0 + 1000 * k_lon, lat0 + 1000 * k_lat)
    (tmp_path / "ll" / "districts.csv").write_text(f'district_id,population_density,wkt\nD1,20000.0,"{poly.wkt}"\n')
    raw = json.loads(path.read_text())
    raw["coordinates"] = "lonlat"
    path.write_text(json.dumps(raw))
    series, ing, *_ = load_scenario(path)
    assert ing.areas["urban"].area == pytest.approx(4e6, rel=2e-3)


def test_invalid_slot_model_aborts(tmp_path):
    sites, traffic, districts, cfg = _two_district_case()
    from dataclasses import replace
    from netshare.domain import RadioParams
    bad = replace(cfg, radio=RadioParams(pathloss_exponent=2.0))
    ing = estimate_intensities(sites, traffic, districts, bad)
    with pytest.raises(ModelError, match="slot 0"):
        build_slot_series(ing, bad)


def test_manifest_missing_key(tmp_path):
    (tmp_path / "m.json").write_text("{}")
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "m.json")
