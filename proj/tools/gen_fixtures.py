#!/usr/bin/env python3
"""Regenerates the CSV/JSON fixtures under data/fixtures.

Deterministic: every random draw comes from a seeded numpy Generator.
"""
import csv
import json
import math
import pathlib

import numpy as np

OUT = pathlib.Path(__file__).resolve().parent.parent / "data" / "fixtures"

FEATURES = ["N", "P", "K", "temperature", "humidity", "ph", "rainfall"]

CROPS_22 = [
    "rice", "maize", "chickpea", "kidneybeans", "pigeonpeas", "mothbeans", "mungbean", "blackgram",
    "lentil", "pomegranate", "banana", "mango", "grapes", "watermelon", "muskmelon", "apple",
    "orange", "papaya", "coconut", "cotton", "jute", "coffee",
]

# Ranges roughly matching the public crop-recommendation data.
LOW = np.array([0, 5, 5, 8, 14, 3.5, 20])
HIGH = np.array([140, 145, 205, 44, 100, 9.9, 300])

# name, lat, lon (approximate district headquarters)
DISTRICTS = [
    ("Bagalkot", 16.18, 75.70), ("Ballari", 15.14, 76.92), ("Belagavi", 15.85, 74.50),
    ("Bengaluru Rural", 13.28, 77.54), ("Bengaluru Urban", 12.97, 77.59), ("Bidar", 17.91, 77.52),
    ("Chamarajanagar", 11.93, 76.94), ("Chikkaballapur", 13.43, 77.73), ("Chikkamagaluru", 13.32, 75.77),
    ("Chitradurga", 14.23, 76.40), ("Dakshina Kannada", 12.87, 74.88), ("Davanagere", 14.46, 75.92),
    ("Dharwad", 15.46, 75.01), ("Gadag", 15.43, 75.63), ("Hassan", 13.00, 76.10),
    ("Haveri", 14.79, 75.40), ("Kalaburagi", 17.33, 76.83), ("Kodagu", 12.42, 75.74),
    ("Kolar", 13.14, 78.13), ("Koppal", 15.35, 76.15), ("Mandya", 12.52, 76.90),
    ("Mysuru", 12.30, 76.64), ("Raichur", 16.20, 77.36), ("Ramanagara", 12.72, 77.28),
    ("Shivamogga", 13.93, 75.57), ("Tumakuru", 13.34, 77.10), ("Udupi", 13.34, 74.75),
    ("Uttara Kannada", 14.80, 74.13), ("Vijayapura", 16.83, 75.71), ("Yadgir", 16.77, 77.14),
]

HASSAN = {"n": 125, "p": 29, "k": 260, "ph": 6.2, "rainfall": 1000, "temperature": 24, "humidity": 70}


def fmt(x):
    x = round(float(x), 2)
    return str(int(x)) if x == int(x) else repr(x)


def write_csv(name, header, rows):
    with open(OUT / name, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, int, np.floating, np.integer)) else v for v in row])


def synthetic_crops(rng):
    # Class centres on a jittered grid keep every pair well separated; the
    # per-feature noise is 2.5% of the range.
    span = HIGH - LOW
    centres = []
    while len(centres) < len(CROPS_22):
        c = LOW + span * (0.1 + 0.8 * rng.random(7))
        if all(np.linalg.norm((c - o) / span) > 0.35 for o in centres):
            centres.append(c)
    rows = []
    for crop, c in zip(CROPS_22, centres):
        for _ in range(100):
            x = c + rng.normal(0, 0.025, 7) * span
            rows.append([*np.clip(x, LOW, HIGH), crop])
    write_csv("crops_synthetic.csv", FEATURES + ["label"], rows)


def case_study_crops(rng):
    point = [HASSAN[k] for k in ("n", "p", "k", "temperature", "humidity", "ph", "rainfall")]
    rows = []
    for crop, count in (("Coffee", 50), ("Pepper", 30), ("Maize", 20)):
        rows += [[*point, crop] for _ in range(count)]
    far = {
        "Rice": [80, 45, 40, 27, 82, 6.4, 2200],
        "Ragi": [60, 40, 30, 28, 55, 6.8, 600],
        "Sugarcane": [100, 60, 80, 30, 75, 7.2, 1500],
        "Cotton": [110, 45, 20, 32, 60, 7.8, 450],
        "Arecanut": [70, 30, 150, 26, 88, 5.6, 3200],
    }
    for crop, centre in far.items():
        for _ in range(20):
            x = np.array(centre) * (1 + rng.normal(0, 0.03, 7))
            rows.append([*x, crop])
    write_csv("crops_case_study.csv", FEATURES + ["label"], rows)


def districts(rng):
    write_csv("centroids.csv", ["district", "lat", "lon"], DISTRICTS)
    soil, rain, weather = [], [], []
    for name, lat, lon in DISTRICTS:
        if name == "Hassan":
            soil.append([name, HASSAN["ph"], HASSAN["n"], HASSAN["p"], HASSAN["k"]])
            rain.append([name, HASSAN["rainfall"]])
            weather.append([lat, lon, HASSAN["temperature"], HASSAN["humidity"]])
            continue
        soil.append([name, rng.uniform(5.5, 8.0), rng.uniform(40, 140), rng.uniform(15, 70), rng.uniform(40, 280)])
        rain.append([name, rng.uniform(450, 3500)])
        weather.append([lat, lon, rng.uniform(20, 33), rng.uniform(40, 90)])
    write_csv("soil.csv", ["district", "ph", "n", "p", "k"], soil)
    write_csv("rainfall.csv", ["district", "rainfall"], rain)
    write_csv("weather.csv", ["lat", "lon", "temperature", "humidity"], weather)
    write_csv("addresses.csv", ["address", "lat", "lon"],
              [["Hassan", 13.0, 76.1], ["Belur, Hassan", 13.16, 75.87], ["Mysuru Palace", 12.3, 76.65],
               ["Madikeri", 12.42, 75.74]])


def prices(rng):
    rows = []
    for crop, level, amp in (("Coffee", 240, 20), ("Pepper", 450, 35), ("Maize", 21, 2.5)):
        for t in range(120):
            year, month = 2015 + t // 12, t % 12 + 1
            p = level * (1 + 0.002 * t) + amp * math.sin(2 * math.pi * t / 12) + rng.normal(0, amp * 0.05)
            rows.append([crop, f"{year:04d}-{month:02d}", p])
    write_csv("prices.csv", ["crop", "date", "price"], rows)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(42)
    synthetic_crops(rng)
    case_study_crops(rng)
    districts(rng)
    prices(rng)
    write_csv("growth_periods.csv", ["crop", "months"], [["Coffee", 9], ["Pepper", 6], ["Maize", 4]])
    manifest = {
        "forest": "case_study_forest.json",
        "growth_periods": "growth_periods.csv",
        "soil": "soil.csv",
        "centroids": "centroids.csv",
        "rainfall": "rainfall.csv",
        "prices": "prices.csv",
        "crops": {"Coffee": {"stub_price": 255}, "Pepper": {"stub_price": 480}, "Maize": {"stub_price": 22}},
        "weather": {"mode": "fixture", "fixture_path": "weather.csv", "ttl_seconds": 600},
        "geocoder": {"mode": "fixture", "fixture_path": "addresses.csv"},
    }
    (OUT / "manifest_stub.json").write_text(json.dumps(manifest, indent=2) + "\n")


if __name__ == "__main__":
    main()
